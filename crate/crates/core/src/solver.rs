//! Periodic pseudo-spectral solver for `u_t + (-Δ)^α u = u - u²` on `[-L, L)`.
//!
//! The linear part `λ(k) = 1 - |k|^{2α}` is integrated exactly in Fourier space and the
//! quadratic term by a two-stage exponential Runge–Kutta method (ETD-RK2, midpoint
//! stage), with the 2/3 rule on the product.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::FracParams;

/// Slack allowed outside `[0, 1]` before a step is rejected.
pub const RANGE_SLACK: f64 = 1e-10;

/// Fraction of grid points at each end watched by the edge guard.
pub const EDGE_FRACTION: f64 = 0.05;

/// Default noise floor: about fifty times the per-step FFT roundoff on a unit-amplitude field.
pub const DEFAULT_NOISE_FLOOR: f64 = 1e-14;

fn default_noise_floor() -> f64 {
    DEFAULT_NOISE_FLOOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub params: FracParams,
    /// Half-width `L` of the periodic domain `[-L, L)`.
    pub half_width: f64,
    /// Grid size `N`.
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub dealias: bool,
    pub edge_guard: f64,
    pub reaction_on: bool,
    /// With reaction on, values with `|u|` below this are reset to 0 after each step, so
    /// roundoff in the region where `u` vanishes is not amplified by the unstable state.
    #[serde(default = "default_noise_floor")]
    pub noise_floor: f64,
}

impl SolverConfig {
    /// A configuration with the usual switches (dealiasing and reaction on,
    /// edge guard 1e-2) and snapshots at `0, every, 2·every, …, t_end`.
    pub fn new(params: FracParams, half_width: f64, n: usize, dt: f64, t_end: f64, every: f64) -> Result<Self> {
        let cfg = Self {
            params,
            half_width,
            n,
            dt,
            t_end,
            snapshot_times: regular_times(t_end, every)?,
            dealias: true,
            edge_guard: 1e-2,
            reaction_on: true,
            noise_floor: DEFAULT_NOISE_FLOOR,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        if self.params.d() != 1 {
            return bad(format!("the solver is one-dimensional, got d = {}", self.params.d()));
        }
        if !self.n.is_power_of_two() || self.n < 1 << 12 {
            return bad(format!("N must be a power of two >= 4096, got {}", self.n));
        }
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return bad(format!("L must be positive, got {}", self.half_width));
        }
        if self.dx() > 0.5 {
            return bad(format!("grid spacing 2L/N = {} exceeds 0.5", self.dx()));
        }
        if !(self.dt > 0.0 && self.dt <= 0.1) {
            return bad(format!("dt must lie in (0, 0.1], got {}", self.dt));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end must be >= 0, got {}", self.t_end));
        }
        if !(self.edge_guard > 0.0 && self.edge_guard < 1.0) {
            return bad(format!("edge_guard must lie in (0, 1), got {}", self.edge_guard));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor <= 1e-6) {
            return bad(format!("noise_floor must lie in [0, 1e-6], got {}", self.noise_floor));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return bad("snapshot_times must be sorted".into());
        }
        if let Some(t) = self.snapshot_times.iter().find(|t| !(**t >= 0.0 && **t <= self.t_end)) {
            return bad(format!("snapshot time {t} outside [0, t_end]"));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dx()
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Number of time steps to `t`, rounded to the nearest step.
    pub fn steps_to(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }

    /// Points per side in the edge zone.
    pub fn edge_points(&self) -> usize {
        ((EDGE_FRACTION * self.n as f64).ceil() as usize).max(1)
    }

    /// Largest `|u|` in the edge zone.
    pub fn edge_max(&self, u: &[f64]) -> f64 {
        let m = self.edge_points();
        u[..m].iter().chain(&u[u.len() - m..]).fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Wavenumber of Fourier mode `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        PI * j as f64 / self.half_width
    }
}

/// `0, every, 2·every, …` up to `t_end` (inclusive up to rounding).
pub fn regular_times(t_end: f64, every: f64) -> Result<Vec<f64>> {
    if !(every > 0.0) {
        return Err(Error::Domain(format!("snapshot spacing must be positive, got {every}")));
    }
    let count = (t_end / every + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| (i as f64 * every).min(t_end)).collect())
}

/// Solution on the grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub u: Vec<f64>,
}

impl FieldState {
    pub fn mass(&self, config: &SolverConfig) -> f64 {
        config.dx() * self.u.iter().sum::<f64>()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
    }
}

/// Initial profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialDatum {
    /// `ε 1_{|x| ≤ r0}`.
    Indicator { eps: f64, r0: f64 },
    /// ε on `|x| ≤ r0 - ramp/2`, 0 beyond `r0 + ramp/2`, joined by a C^∞ step. Mass `2 ε r0`.
    SmoothBump { eps: f64, r0: f64, ramp: f64 },
    /// `min(ε, ε r0^{1+2α} |x|^{-(1+2α)})` with α from the solver.
    AlgebraicProfile { eps_alpha: f64, r0: f64 },
    /// 1 on `|x| ≤ W`, `e^{-(|x|-W)^α}` outside.
    PlateauStretchedExp { width: f64, alpha: f64 },
    /// `min(1, e^{-γ|x|^α})`.
    StretchedExpGamma { gamma: f64, alpha: f64 },
}

fn smooth_step(s: f64) -> f64 {
    // 0 for s ≤ 0, 1 for s ≥ 1
    let psi = |v: f64| if v > 0.0 { (-1.0 / v).exp() } else { 0.0 };
    let (a, b) = (psi(s), psi(1.0 - s));
    if a + b == 0.0 {
        if s >= 1.0 {
            1.0
        } else {
            0.0
        }
    } else {
        a / (a + b)
    }
}

impl InitialDatum {
    fn validate(&self, config: &SolverConfig) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(m.to_string()));
        let support_limit = 0.95 * config.half_width;
        match *self {
            InitialDatum::Indicator { eps, r0 } => {
                if !(eps > 0.0 && eps <= 1.0) || !(r0 > 0.0) {
                    return bad("indicator needs eps in (0, 1] and r0 > 0");
                }
                if r0 > support_limit {
                    return Err(Error::ConfigMismatch(format!("indicator support {r0} exceeds 0.95 L")));
                }
            }
            InitialDatum::SmoothBump { eps, r0, ramp } => {
                if !(eps > 0.0 && eps <= 1.0) || !(r0 > 0.0) || !(ramp > 0.0 && ramp <= 2.0 * r0) {
                    return bad("smooth_bump needs eps in (0, 1], r0 > 0 and 0 < ramp <= 2 r0");
                }
                if r0 + 0.5 * ramp > support_limit {
                    return Err(Error::ConfigMismatch(format!(
                        "bump support {} exceeds 0.95 L",
                        r0 + 0.5 * ramp
                    )));
                }
            }
            InitialDatum::AlgebraicProfile { eps_alpha, r0 } => {
                if !(eps_alpha > 0.0 && eps_alpha <= 1.0) || !(r0 > 0.0) {
                    return bad("algebraic_profile needs eps_alpha in (0, 1] and r0 > 0");
                }
            }
            InitialDatum::PlateauStretchedExp { width, alpha } => {
                if !(width > 0.0) || !(alpha > 0.0 && alpha <= 1.0) {
                    return bad("plateau_stretched_exp needs W > 0 and alpha in (0, 1]");
                }
                if width > support_limit {
                    return Err(Error::ConfigMismatch(format!("plateau half-width {width} exceeds 0.95 L")));
                }
            }
            InitialDatum::StretchedExpGamma { gamma, alpha } => {
                if !(gamma > 0.0) || !(alpha > 0.0 && alpha <= 1.0) {
                    return bad("stretched_exp_gamma needs gamma > 0 and alpha in (0, 1]");
                }
            }
        }
        Ok(())
    }

    /// Profile value at `x`, before clamping to `[0, 1]`.
    pub fn value(&self, x: f64, solver_alpha: f64) -> f64 {
        let r = x.abs();
        match *self {
            InitialDatum::Indicator { eps, r0 } => {
                if r <= r0 {
                    eps
                } else {
                    0.0
                }
            }
            InitialDatum::SmoothBump { eps, r0, ramp } => eps * (1.0 - smooth_step((r - (r0 - 0.5 * ramp)) / ramp)),
            InitialDatum::AlgebraicProfile { eps_alpha, r0 } => {
                if r <= r0 {
                    eps_alpha
                } else {
                    eps_alpha * (r0 / r).powf(1.0 + 2.0 * solver_alpha)
                }
            }
            InitialDatum::PlateauStretchedExp { width, alpha } => {
                if r <= width {
                    1.0
                } else {
                    (-(r - width).powf(alpha)).exp()
                }
            }
            InitialDatum::StretchedExpGamma { gamma, alpha } => (-gamma * r.powf(alpha)).exp().min(1.0),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            InitialDatum::Indicator { .. } => "indicator",
            InitialDatum::SmoothBump { .. } => "smooth_bump",
            InitialDatum::AlgebraicProfile { .. } => "algebraic_profile",
            InitialDatum::PlateauStretchedExp { .. } => "plateau_stretched_exp",
            InitialDatum::StretchedExpGamma { .. } => "stretched_exp_gamma",
        }
    }
}

/// Samples the datum on the grid (clamped to `[0, 1]`) at `t = 0`.
pub fn make_initial_datum(datum: &InitialDatum, config: &SolverConfig) -> Result<FieldState> {
    config.validate()?;
    datum.validate(config)?;
    let a = config.params.alpha();
    let u: Vec<f64> = (0..config.n)
        .map(|i| datum.value(config.x(i), a).clamp(0.0, 1.0))
        .collect();
    let edge = config.edge_max(&u);
    if edge > config.edge_guard {
        return Err(Error::ConfigMismatch(format!(
            "initial datum reaches {edge:e} in the edge zone (guard {})",
            config.edge_guard
        )));
    }
    Ok(FieldState { t: 0.0, u })
}

/// `(e^z - 1)/z`.
fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z / 120.0)))
    } else {
        z.exp_m1() / z
    }
}

/// Time stepper with FFT plans and per-mode exponential factors.
pub struct Solver {
    config: SolverConfig,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    decay: Vec<f64>,
    decay_half: Vec<f64>,
    phi1: Vec<f64>,
    phi1_half: Vec<f64>,
    keep: Vec<bool>,
    uhat: Vec<Complex64>,
    nhat: Vec<Complex64>,
    stage_hat: Vec<Complex64>,
    work_c: Vec<Complex64>,
    work_r: Vec<f64>,
    fft_scratch: Vec<Complex64>,
    state: FieldState,
    steps: usize,
    floored: usize,
}

impl Solver {
    pub fn new(config: SolverConfig, initial: FieldState) -> Result<Self> {
        config.validate()?;
        if initial.u.len() != config.n {
            return Err(Error::Domain(format!(
                "initial state has {} points, grid has {}",
                initial.u.len(),
                config.n
            )));
        }
        let mut planner = RealFftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(config.n);
        let inverse = planner.plan_fft_inverse(config.n);
        let modes = config.n / 2 + 1;
        let two_a = 2.0 * config.params.alpha();
        let growth = if config.reaction_on { 1.0 } else { 0.0 };
        let mut decay = Vec::with_capacity(modes);
        let mut decay_half = Vec::with_capacity(modes);
        let mut phi1s = Vec::with_capacity(modes);
        let mut phi1_half = Vec::with_capacity(modes);
        for j in 0..modes {
            let k = config.wavenumber(j);
            let z = (growth - k.powf(two_a)) * config.dt;
            decay.push(z.exp());
            decay_half.push((0.5 * z).exp());
            phi1s.push(phi1(z));
            phi1_half.push(phi1(0.5 * z));
        }
        let cutoff = config.n / 3;
        let keep = (0..modes).map(|j| !config.dealias || j <= cutoff).collect();
        let scratch_len = forward.get_scratch_len().max(inverse.get_scratch_len());
        let mut s = Self {
            forward,
            inverse,
            decay,
            decay_half,
            phi1: phi1s,
            phi1_half,
            keep,
            uhat: vec![Complex64::default(); modes],
            nhat: vec![Complex64::default(); modes],
            stage_hat: vec![Complex64::default(); modes],
            work_c: vec![Complex64::default(); modes],
            work_r: vec![0.0; config.n],
            fft_scratch: vec![Complex64::default(); scratch_len],
            state: initial,
            steps: 0,
            floored: 0,
            config,
        };
        let mut buf = s.state.u.clone();
        s.forward
            .process_with_scratch(&mut buf, &mut s.uhat, &mut s.fft_scratch)
            .expect("buffer sizes match the plan");
        Ok(s)
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn state(&self) -> &FieldState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// FFT of `-v²`, dealiased, into `out`.
    fn nonlinear_hat(&mut self, v: &[f64], which: Which) {
        for (w, x) in self.work_r.iter_mut().zip(v) {
            *w = -x * x;
        }
        let out = match which {
            Which::N => &mut self.nhat,
            Which::Work => &mut self.work_c,
        };
        self.forward
            .process_with_scratch(&mut self.work_r, out, &mut self.fft_scratch)
            .expect("buffer sizes match the plan");
        for (c, keep) in out.iter_mut().zip(&self.keep) {
            if !keep {
                *c = Complex64::default();
            }
        }
    }

    /// Inverse FFT of `spec` (left untouched) into `out`, normalized.
    fn to_physical(inverse: &Arc<dyn ComplexToReal<f64>>, spec: &[Complex64], tmp: &mut Vec<Complex64>, scratch: &mut [Complex64], out: &mut [f64]) {
        tmp.clear();
        tmp.extend_from_slice(spec);
        let last = tmp.len() - 1;
        tmp[0].im = 0.0;
        tmp[last].im = 0.0;
        inverse
            .process_with_scratch(tmp, out, scratch)
            .expect("buffer sizes match the plan");
        let scale = 1.0 / out.len() as f64;
        for v in out.iter_mut() {
            *v *= scale;
        }
    }

    /// Advances one step of size `dt` and checks the range invariant.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.config.dt;
        let mut tmp = Vec::with_capacity(self.uhat.len());
        if !self.config.reaction_on {
            for (c, e) in self.uhat.iter_mut().zip(&self.decay) {
                *c *= *e;
            }
        } else {
            // stage at the half step, then the full step driven by the stage nonlinearity
            let u = std::mem::take(&mut self.state.u);
            self.nonlinear_hat(&u, Which::N);
            for j in 0..self.uhat.len() {
                self.stage_hat[j] = self.uhat[j] * self.decay_half[j] + self.nhat[j] * (0.5 * dt * self.phi1_half[j]);
            }
            let mut a = u;
            Self::to_physical(&self.inverse, &self.stage_hat, &mut tmp, &mut self.fft_scratch, &mut a);
            self.nonlinear_hat(&a, Which::Work);
            for j in 0..self.uhat.len() {
                self.uhat[j] = self.uhat[j] * self.decay[j] + self.work_c[j] * (dt * self.phi1[j]);
            }
            self.state.u = a;
        }
        Self::to_physical(&self.inverse, &self.uhat, &mut tmp, &mut self.fft_scratch, &mut self.state.u);
        if self.config.reaction_on && self.config.noise_floor > 0.0 {
            self.apply_noise_floor();
        }
        self.steps += 1;
        self.state.t = self.steps as f64 * dt;
        self.check_range()
    }

    fn apply_noise_floor(&mut self) {
        let floor = self.config.noise_floor;
        let mut reset = 0;
        for v in self.state.u.iter_mut() {
            if *v != 0.0 && v.abs() < floor {
                *v = 0.0;
                reset += 1;
            }
        }
        if reset > 0 {
            self.floored += reset;
            self.work_r.copy_from_slice(&self.state.u);
            self.forward
                .process_with_scratch(&mut self.work_r, &mut self.uhat, &mut self.fft_scratch)
                .expect("buffer sizes match the plan");
        }
    }

    /// Total number of values reset by the noise floor so far.
    pub fn floored_values(&self) -> usize {
        self.floored
    }

    fn check_range(&self) -> Result<()> {
        let upper = if self.config.reaction_on { 1.0 + RANGE_SLACK } else { f64::INFINITY };
        for (i, v) in self.state.u.iter().enumerate() {
            if !(*v >= -RANGE_SLACK && *v <= upper) {
                return Err(Error::Range {
                    t: self.state.t,
                    x: self.config.x(i),
                    value: *v,
                });
            }
        }
        Ok(())
    }

    /// Values that left `[0, 1]` by less than the slack.
    pub fn slack_excursions(&self) -> usize {
        let upper = if self.config.reaction_on { 1.0 } else { f64::INFINITY };
        self.state.u.iter().filter(|v| **v < 0.0 || **v > upper).count()
    }
}

#[derive(Clone, Copy)]
enum Which {
    N,
    Work,
}

/// One step from `state` (convenience wrapper; plans FFTs each call).
pub fn step(state: &FieldState, config: &SolverConfig) -> Result<FieldState> {
    let mut s = Solver::new(config.clone(), state.clone())?;
    s.step()?;
    let mut out = s.state;
    out.t = state.t + config.dt;
    Ok(out)
}

/// Per-snapshot diagnostics recorded in the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDiagnostics {
    pub t: f64,
    /// Requested snapshot time; `t` is the nearest step.
    pub requested: f64,
    pub mass: f64,
    pub umin: f64,
    pub umax: f64,
    pub edge_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cause", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    EdgeGuard { t: f64, edge_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: SolverConfig,
    pub datum: Option<InitialDatum>,
    pub steps: usize,
    pub slack_excursions: usize,
    pub floored_values: usize,
    pub snapshots: Vec<SnapshotDiagnostics>,
    pub termination: Termination,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn truncated(&self) -> bool {
        !matches!(self.termination, Termination::Completed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub snapshots: Vec<FieldState>,
    pub manifest: RunManifest,
}

/// Integrates to `t_end` keeping every snapshot.
pub fn run(config: &SolverConfig, initial: FieldState) -> Result<RunOutput> {
    let mut snaps = Vec::new();
    let manifest = run_observed(config, initial, None, |s| snaps.push(s.clone()))?;
    Ok(RunOutput {
        snapshots: snaps,
        manifest,
    })
}

/// Integrates to `t_end`, handing each snapshot to `observe` instead of storing it.
/// On an edge-guard violation the run stops and the manifest is marked truncated.
pub fn run_observed<F: FnMut(&FieldState)>(
    config: &SolverConfig,
    initial: FieldState,
    datum: Option<InitialDatum>,
    mut observe: F,
) -> Result<RunManifest> {
    let started = Instant::now();
    let mut solver = Solver::new(config.clone(), initial)?;
    let total = config.steps_to(config.t_end);
    let targets: Vec<(f64, usize)> = config
        .snapshot_times
        .iter()
        .map(|t| (*t, config.steps_to(*t).min(total)))
        .collect();
    let mut next = 0;
    let mut diagnostics = Vec::new();
    let mut slack = 0;
    let mut termination = Termination::Completed;

    let mut capture = |solver: &Solver, next: &mut usize, diagnostics: &mut Vec<SnapshotDiagnostics>| {
        while *next < targets.len() && targets[*next].1 == solver.steps() {
            let st = solver.state();
            let (umin, umax) = st.min_max();
            diagnostics.push(SnapshotDiagnostics {
                t: st.t,
                requested: targets[*next].0,
                mass: st.mass(config),
                umin,
                umax,
                edge_max: config.edge_max(&st.u),
            });
            observe(st);
            *next += 1;
        }
    };

    let edge0 = config.edge_max(&solver.state().u);
    if edge0 > config.edge_guard {
        termination = Termination::EdgeGuard { t: 0.0, edge_max: edge0 };
    } else {
        capture(&solver, &mut next, &mut diagnostics);
        while solver.steps() < total {
            solver.step()?;
            slack += solver.slack_excursions();
            let edge = config.edge_max(&solver.state().u);
            if edge > config.edge_guard {
                termination = Termination::EdgeGuard {
                    t: solver.state().t,
                    edge_max: edge,
                };
                break;
            }
            capture(&solver, &mut next, &mut diagnostics);
        }
    }
    Ok(RunManifest {
        config: config.clone(),
        datum,
        steps: solver.steps(),
        slack_excursions: slack,
        floored_values: solver.floored_values(),
        snapshots: diagnostics,
        termination,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Exact linear flow `u_t + (-Δ)^α u = 0` on the grid: `u0` multiplied by
/// `e^{-|k|^{2α} t}` in Fourier space.
pub fn linear_flow_spectral(config: &SolverConfig, u0: &[f64], t: f64) -> Result<Vec<f64>> {
    if u0.len() != config.n {
        return Err(Error::Domain("state length does not match the grid".into()));
    }
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(config.n);
    let inv = planner.plan_fft_inverse(config.n);
    let mut buf = u0.to_vec();
    let mut spec = fwd.make_output_vec();
    fwd.process(&mut buf, &mut spec).expect("sizes match");
    let two_a = 2.0 * config.params.alpha();
    for (j, c) in spec.iter_mut().enumerate() {
        *c *= (-config.wavenumber(j).powf(two_a) * t).exp();
    }
    let last = spec.len() - 1;
    spec[0].im = 0.0;
    spec[last].im = 0.0;
    let mut out = inv.make_output_vec();
    inv.process(&mut spec, &mut out).expect("sizes match");
    let scale = 1.0 / config.n as f64;
    Ok(out.into_iter().map(|v| v * scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha: f64, l: f64, n: usize, dt: f64, t_end: f64) -> SolverConfig {
        SolverConfig::new(FracParams::one_d(alpha).unwrap(), l, n, dt, t_end, t_end.max(dt)).unwrap()
    }

    #[test]
    fn config_validation() {
        let p = FracParams::one_d(0.75).unwrap();
        assert!(SolverConfig::new(p, 100.0, 4096, 0.01, 1.0, 0.5).is_ok());
        assert!(SolverConfig::new(p, 100.0, 4000, 0.01, 1.0, 0.5).is_err());
        assert!(SolverConfig::new(p, 100.0, 2048, 0.01, 1.0, 0.5).is_err());
        assert!(SolverConfig::new(p, 2000.0, 4096, 0.01, 1.0, 0.5).is_err());
        assert!(SolverConfig::new(p, 100.0, 4096, 0.2, 1.0, 0.5).is_err());
        assert!(SolverConfig::new(FracParams::new(0.75, 2).unwrap(), 100.0, 4096, 0.01, 1.0, 0.5).is_err());
        let mut c = cfg(0.75, 100.0, 4096, 0.01, 1.0);
        c.snapshot_times = vec![0.5, 0.2];
        assert!(c.validate().is_err());
        c.snapshot_times = vec![0.5, 2.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn datum_examples() {
        let c = cfg(0.75, 200.0, 4096, 0.01, 1.0);
        let ind = InitialDatum::Indicator { eps: 0.5, r0: 5.0 };
        assert_eq!(ind.value(0.0, 0.75), 0.5);
        assert_eq!(ind.value(10.0, 0.75), 0.0);
        let alg = InitialDatum::AlgebraicProfile { eps_alpha: 0.3, r0: 10.0 };
        assert!((alg.value(20.0, 0.75) - 0.3 * 2f64.powf(-2.5)).abs() < 1e-15);
        let plat = InitialDatum::PlateauStretchedExp { width: 1e4, alpha: 0.75 };
        assert!((plat.value(1e4 + 8.0, 0.75) - (-(8f64.powf(0.75))).exp()).abs() < 1e-15);
        assert_eq!(plat.value(-5.0, 0.75), 1.0);
        let s = make_initial_datum(&ind, &c).unwrap();
        assert_eq!(s.t, 0.0);
        assert_eq!(s.u.len(), 4096);
    }

    #[test]
    fn datum_support_mismatch() {
        let c = cfg(0.75, 100.0, 4096, 0.01, 1.0);
        let err = make_initial_datum(&InitialDatum::Indicator { eps: 0.5, r0: 99.0 }, &c).unwrap_err();
        assert!(matches!(err, Error::ConfigMismatch(_)));
        let err = make_initial_datum(&InitialDatum::StretchedExpGamma { gamma: 0.01, alpha: 0.5 }, &c).unwrap_err();
        assert!(matches!(err, Error::ConfigMismatch(_)));
        assert!(make_initial_datum(&InitialDatum::Indicator { eps: 1.5, r0: 1.0 }, &c).is_err());
    }

    #[test]
    fn smooth_bump_mass() {
        let c = cfg(0.75, 50.0, 4096, 0.01, 1.0);
        let s = make_initial_datum(&InitialDatum::SmoothBump { eps: 0.5, r0: 1.0, ramp: 1.0 }, &c).unwrap();
        assert!((s.mass(&c) - 1.0).abs() < 1e-9, "{}", s.mass(&c));
        assert_eq!(s.u[c.n / 2], 0.5);
    }

    #[test]
    fn fixed_points() {
        let c = cfg(0.6, 100.0, 4096, 0.01, 1.0);
        let zero = FieldState { t: 0.0, u: vec![0.0; c.n] };
        assert!(step(&zero, &c).unwrap().u.iter().all(|v| *v == 0.0));
        let mut s = Solver::new(c.clone(), FieldState { t: 0.0, u: vec![1.0; c.n] }).unwrap();
        for _ in 0..100 {
            s.step().unwrap();
        }
        assert!(s.state().u.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn logistic_ode() {
        let mut c = cfg(0.75, 100.0, 4096, 0.01, 1.0);
        c.edge_guard = 0.5;
        let out = run(&c, FieldState { t: 0.0, u: vec![0.1; c.n] }).unwrap();
        let last = out.snapshots.last().unwrap();
        assert_eq!(last.t, 1.0);
        let e = 1f64.exp();
        let exact = 0.1 * e / (1.0 + 0.1 * (e - 1.0));
        let worst = last.u.iter().fold(0.0f64, |m, v| m.max((v - exact).abs()));
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn zero_end_time_returns_initial() {
        let c = cfg(0.75, 100.0, 4096, 0.01, 0.0);
        let init = make_initial_datum(&InitialDatum::Indicator { eps: 0.5, r0: 5.0 }, &c).unwrap();
        let out = run(&c, init.clone()).unwrap();
        assert_eq!(out.snapshots, vec![init]);
        assert_eq!(out.manifest.steps, 0);
        assert!(!out.manifest.truncated());
    }

    #[test]
    fn linear_run_matches_spectral_flow() {
        let mut c = cfg(0.75, 100.0, 4096, 0.01, 1.0);
        c.reaction_on = false;
        let init = make_initial_datum(&InitialDatum::SmoothBump { eps: 0.5, r0: 1.0, ramp: 1.0 }, &c).unwrap();
        let out = run(&c, init.clone()).unwrap();
        let flow = linear_flow_spectral(&c, &init.u, 1.0).unwrap();
        let last = out.snapshots.last().unwrap();
        let peak = flow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let worst = last.u.iter().zip(&flow).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(worst / peak < 1e-12, "{}", worst / peak);
        // mass is conserved by the linear flow
        assert!((last.mass(&c) - init.mass(&c)).abs() < 1e-13);
    }

    #[test]
    fn edge_guard_truncates() {
        let mut c = cfg(0.5, 50.0, 4096, 0.05, 20.0);
        c.snapshot_times = regular_times(20.0, 1.0).unwrap();
        let init = make_initial_datum(&InitialDatum::Indicator { eps: 1.0, r0: 20.0 }, &c).unwrap();
        let out = run(&c, init).unwrap();
        assert!(out.manifest.truncated());
        assert!(out.snapshots.len() < c.snapshot_times.len());
        assert!(!out.snapshots.is_empty());
    }

    #[test]
    fn nearest_step_snapshots() {
        let mut c = cfg(0.75, 100.0, 4096, 0.03, 1.0);
        c.snapshot_times = vec![0.0, 0.1, 0.5, 1.0];
        let init = make_initial_datum(&InitialDatum::Indicator { eps: 0.5, r0: 5.0 }, &c).unwrap();
        let out = run(&c, init).unwrap();
        let ts: Vec<f64> = out.manifest.snapshots.iter().map(|s| s.t).collect();
        let want = [0.0, 3.0 * 0.03, 17.0 * 0.03, 33.0 * 0.03];
        for (a, b) in ts.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{ts:?}");
        }
        assert_eq!(out.manifest.snapshots[2].requested, 0.5);
    }

    #[test]
    fn phi_series_matches_closed_form() {
        for z in [-2e-3, -1.1e-3, 1.1e-3] {
            assert!((phi1(z) - z.exp_m1() / z).abs() < 1e-13);
        }
        assert!((phi1(1e-5) - 1.000_005_000_016_666_7).abs() < 1e-15);
        assert!((phi1(-0.999e-3) - (-0.999e-3f64).exp_m1() / -0.999e-3).abs() < 1e-15);
    }
}
