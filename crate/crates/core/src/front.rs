//! Level-set tracking and regime fits: linear speed, exponential rate and the time at
//! which the front leaves its linear course.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::critical_radius;
use crate::error::{Error, Result};
use crate::kernel::FracParams;
use crate::solver::{make_initial_datum, run_observed, FieldState, InitialDatum, RunManifest, SolverConfig};

pub const MIN_WINDOW_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Right,
    Left,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Right => "right",
            Side::Left => "left",
        }
    }
}

/// Outermost crossing of `level` on one side of a grid function `u(x0 + i dx)`,
/// linearly interpolated. `None` if the level is not crossed there.
pub fn extract_front_on(u: &[f64], x0: f64, dx: f64, level: f64, side: Side) -> Result<Option<f64>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {level}")));
    }
    let x = |i: usize| x0 + i as f64 * dx;
    match side {
        Side::Right => {
            let Some(i) = u.iter().rposition(|v| *v >= level) else {
                return Ok(None);
            };
            if i + 1 == u.len() {
                return Ok(None);
            }
            Ok(Some(x(i) + dx * (u[i] - level) / (u[i] - u[i + 1])))
        }
        Side::Left => {
            let Some(i) = u.iter().position(|v| *v >= level) else {
                return Ok(None);
            };
            if i == 0 {
                return Ok(None);
            }
            Ok(Some(x(i - 1) + dx * (level - u[i - 1]) / (u[i] - u[i - 1])))
        }
    }
}

/// [`extract_front_on`] for a solver snapshot.
pub fn extract_front(state: &FieldState, config: &SolverConfig, level: f64, side: Side) -> Result<Option<f64>> {
    extract_front_on(&state.u, config.x(0), config.dx(), level, side)
}

/// Positions of one level set over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontTrace {
    pub alpha: f64,
    pub level: f64,
    pub side: Side,
    /// `(t, x)` for the snapshots where the level was crossed, sorted by `t`.
    pub samples: Vec<(f64, f64)>,
    /// False if some snapshot had no crossing.
    pub complete: bool,
}

impl FrontTrace {
    pub fn new(alpha: f64, level: f64, side: Side) -> Self {
        Self {
            alpha,
            level,
            side,
            samples: Vec::new(),
            complete: true,
        }
    }

    pub fn from_samples(alpha: f64, level: f64, side: Side, samples: Vec<(f64, f64)>) -> Self {
        Self {
            alpha,
            level,
            side,
            samples,
            complete: true,
        }
    }

    pub fn record(&mut self, t: f64, position: Option<f64>) {
        match position {
            Some(x) => self.samples.push((t, x)),
            None => self.complete = false,
        }
    }

    /// The same trace with every position replaced by `f(x)`.
    pub fn map_positions(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            samples: self.samples.iter().map(|(t, x)| (*t, f(*x))).collect(),
            ..self.clone()
        }
    }

    /// CSV with header `alpha,level,side,t,x`.
    pub fn write_csv<W: Write>(&self, mut w: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(w, "alpha,level,side,t,x")?;
        }
        for (t, x) in &self.samples {
            writeln!(w, "{:?},{:?},{},{:?},{:?}", self.alpha, self.level, self.side.as_str(), t, x)?;
        }
        Ok(())
    }
}

/// Ordinary least squares `y ≈ intercept + slope·t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
    pub samples: usize,
}

pub fn least_squares(points: &[(f64, f64)]) -> Result<LineFit> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let nf = n as f64;
    let tm = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let ym = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let stt: f64 = points.iter().map(|p| (p.0 - tm).powi(2)).sum();
    if !(stt > 0.0) {
        return Err(Error::DegenerateFit("zero time variance in the fit window".into()));
    }
    let sty: f64 = points.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let ss: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(LineFit {
        slope,
        intercept,
        rms_residual: (ss / nf).sqrt(),
        samples: n,
    })
}

fn window_samples(trace: &FrontTrace, window: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    let (a, b) = window;
    if !(b > a) {
        return Err(Error::Domain(format!("empty window [{a}, {b}]")));
    }
    let slack = 1e-9 * b.abs().max(1.0);
    let pts: Vec<(f64, f64)> = trace
        .samples
        .iter()
        .copied()
        .filter(|(t, x)| *t >= a - slack && *t <= b + slack && x.is_finite())
        .collect();
    if pts.len() < MIN_WINDOW_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_WINDOW_SAMPLES,
            got: pts.len(),
        });
    }
    Ok(pts)
}

/// Fit of `x ≈ a + σt` over the window.
pub fn fit_linear(trace: &FrontTrace, window: (f64, f64)) -> Result<LineFit> {
    least_squares(&window_samples(trace, window)?)
}

/// Fit of `ln x ≈ b + σt` over the window.
pub fn fit_exponential(trace: &FrontTrace, window: (f64, f64)) -> Result<LineFit> {
    let pts = window_samples(trace, window)?;
    if pts.iter().any(|(_, x)| *x <= 0.0) {
        return Err(Error::DegenerateFit("non-positive front position in the exponential window".into()));
    }
    least_squares(&pts.iter().map(|(t, x)| (*t, x.ln())).collect::<Vec<_>>())
}

/// First `t ≥ from` where the trace reaches twice the linear model `a + σt`,
/// interpolated between samples.
pub fn crossover_time(trace: &FrontTrace, linear: &LineFit, from: f64) -> Option<f64> {
    let gap = |t: f64, x: f64| x - 2.0 * (linear.intercept + linear.slope * t);
    let mut prev: Option<(f64, f64)> = None;
    for (t, x) in trace.samples.iter().copied().filter(|(t, _)| *t >= from - 1e-9) {
        let g = gap(t, x);
        if g >= 0.0 {
            return Some(match prev {
                Some((tp, gp)) => tp + (t - tp) * (-gp) / (g - gp),
                None => t,
            });
        }
        prev = Some((t, g));
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeFit {
    pub alpha: f64,
    pub level: f64,
    pub linear: LineFit,
    pub exponential: LineFit,
    pub crossover_time: Option<f64>,
    pub linear_window: (f64, f64),
    pub exp_window: (f64, f64),
}

impl RegimeFit {
    pub fn sigma_linear(&self) -> f64 {
        self.linear.slope
    }

    pub fn sigma_exp(&self) -> f64 {
        self.exponential.slope
    }

    /// `{alpha, level, sigma_linear, sigma_exp, crossover_time, tau_alpha, tau_log,
    /// linear_window, exp_window, residuals}`; `τ` entries are null at α = 1.
    pub fn to_json(&self) -> serde_json::Value {
        let (tau_alpha, tau_log) = transition_times(self.alpha);
        serde_json::json!({
            "alpha": self.alpha,
            "level": self.level,
            "sigma_linear": self.linear.slope,
            "sigma_exp": self.exponential.slope,
            "crossover_time": self.crossover_time,
            "tau_alpha": tau_alpha,
            "tau_log": tau_log,
            "linear_window": [self.linear_window.0, self.linear_window.1],
            "exp_window": [self.exp_window.0, self.exp_window.1],
            "residuals": {
                "linear_rms": self.linear.rms_residual,
                "exp_rms": self.exponential.rms_residual,
                "linear_samples": self.linear.samples,
                "exp_samples": self.exponential.samples,
            },
        })
    }
}

fn transition_times(alpha: f64) -> (Option<f64>, Option<f64>) {
    if alpha >= 1.0 {
        return (None, None);
    }
    let tau = FracParams::one_d(alpha)
        .ok()
        .and_then(|p| critical_radius(p).ok())
        .map(|s| s.tau_alpha);
    (tau, Some(-(1.0 - alpha).ln()))
}

/// Linear fit on the early window, exponential fit on the late one, and the crossover
/// measured from the start of the linear window.
pub fn fit_regimes(trace: &FrontTrace, linear_window: (f64, f64), exp_window: (f64, f64)) -> Result<RegimeFit> {
    let linear = fit_linear(trace, linear_window)?;
    let exponential = fit_exponential(trace, exp_window)?;
    Ok(RegimeFit {
        alpha: trace.alpha,
        level: trace.level,
        crossover_time: crossover_time(trace, &linear, linear_window.0),
        linear,
        exponential,
        linear_window,
        exp_window,
    })
}

/// Runs the solver and records the front at every snapshot. Also returns the run manifest.
pub fn trace_run(
    config: &SolverConfig,
    datum: &InitialDatum,
    level: f64,
    side: Side,
) -> Result<(FrontTrace, RunManifest)> {
    let init = make_initial_datum(datum, config)?;
    let mut trace = FrontTrace::new(config.params.alpha(), level, side);
    let mut failure = None;
    let manifest = run_observed(config, init, Some(*datum), |s| match extract_front(s, config, level, side) {
        Ok(p) => trace.record(s.t, p),
        Err(e) => failure = Some(e),
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((trace, manifest))
}

/// What each member of a transition sweep runs; α is substituted per member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepScenario {
    pub config: SolverConfig,
    pub datum: InitialDatum,
    pub side: Side,
    pub linear_window: (f64, f64),
    pub exp_window: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRow {
    pub alpha: f64,
    pub tau_alpha: Option<f64>,
    pub tau_log: f64,
    pub fit: Option<RegimeFit>,
    pub trace: Option<FrontTrace>,
    pub manifest: Option<RunManifest>,
    pub truncated: bool,
    pub failure: Option<String>,
}

impl TransitionRow {
    pub fn crossover_time(&self) -> Option<f64> {
        self.fit.as_ref().and_then(|f| f.crossover_time)
    }
}

/// Runs the scenario for every α in parallel and pairs the measured crossover time
/// with `τ_α` and `-ln(1-α)`. A failing member is recorded and the sweep continues.
pub fn transition_sweep(alphas: &[f64], scenario: &SweepScenario, level: f64) -> Result<Vec<TransitionRow>> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.5 && **a < 1.0)) {
        return Err(Error::Domain(format!("sweep alphas must lie in (0.5, 1), got {a}")));
    }
    let mut rows: Vec<TransitionRow> = alphas
        .par_iter()
        .map(|&alpha| {
            let (tau_alpha, tau_log) = transition_times(alpha);
            let mut row = TransitionRow {
                alpha,
                tau_alpha,
                tau_log: tau_log.unwrap_or(f64::INFINITY),
                fit: None,
                trace: None,
                manifest: None,
                truncated: false,
                failure: None,
            };
            let mut config = scenario.config.clone();
            config.params = match FracParams::one_d(alpha) {
                Ok(p) => p,
                Err(e) => {
                    row.failure = Some(e.to_string());
                    return row;
                }
            };
            match trace_run(&config, &scenario.datum, level, scenario.side) {
                Ok((trace, manifest)) => {
                    row.truncated = manifest.truncated();
                    match fit_regimes(&trace, scenario.linear_window, scenario.exp_window) {
                        Ok(f) => row.fit = Some(f),
                        Err(e) => row.failure = Some(e.to_string()),
                    }
                    row.trace = Some(trace);
                    row.manifest = Some(manifest);
                }
                Err(e) => row.failure = Some(e.to_string()),
            }
            row
        })
        .collect();
    rows.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    Ok(rows)
}

/// Comparison table: `alpha,crossover_time,tau_alpha,tau_log,sigma_linear,sigma_exp,truncated,failure`.
pub fn write_transition_csv<W: Write>(mut w: W, rows: &[TransitionRow]) -> std::io::Result<()> {
    writeln!(w, "alpha,crossover_time,tau_alpha,tau_log,sigma_linear,sigma_exp,truncated,failure")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for r in rows {
        writeln!(
            w,
            "{:?},{},{},{:?},{},{},{},{}",
            r.alpha,
            opt(r.crossover_time()),
            opt(r.tau_alpha),
            r.tau_log,
            opt(r.fit.as_ref().map(|f| f.sigma_linear())),
            opt(r.fit.as_ref().map(|f| f.sigma_exp())),
            r.truncated,
            r.failure.as_deref().unwrap_or("").replace(',', ";")
        )?;
    }
    Ok(())
}
