use std::io::Write;

use serde_json::{json, Value};

use fkpp_core::asymptotics::{critical_radius, residual_scaling_report, write_decomposition_csv, CALIBRATED_C};
use fkpp_core::front::{extract_front, fit_regimes, transition_sweep, write_transition_csv, FrontTrace, SweepScenario};
use fkpp_core::kernel::{
    kernel_spectral_point, tabulate_kernel_quadrature, FracParams, KernelMethod, KernelTable,
};
use fkpp_core::solver::{make_initial_datum, run_observed, FieldState, SolverConfig};

use crate::config::{parse_list, FlatConfig, Recipe, RecipeKind};
use crate::output::{Manifest, OutputDir};
use crate::{CliError, KernelArgs, MethodArg, RecipeArgs, TauArgs, ValidateArgs};

fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("--grid expects start:end:count, got `{spec}`"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, n] = parts[..] else { return Err(bad()) };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n < 2 || !(b > a) {
        return Err(bad());
    }
    Ok((0..n)
        .map(|i| if i == n - 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 })
        .collect())
}

fn table_csv(tables: &[&KernelTable]) -> Result<Vec<u8>, CliError> {
    let mut bytes = Vec::new();
    for (i, t) in tables.iter().enumerate() {
        let mut part = Vec::new();
        t.write_csv(&mut part)?;
        let body = if i == 0 {
            &part[..]
        } else {
            let cut = part.iter().position(|b| *b == b'\n').map_or(part.len(), |p| p + 1);
            &part[cut..]
        };
        bytes.extend_from_slice(body);
    }
    Ok(bytes)
}

pub fn kernel(a: &KernelArgs) -> Result<(), CliError> {
    let params = FracParams::new(a.alpha, a.d)?;
    let xs = match (&a.xs, &a.grid) {
        (Some(s), _) => parse_list("xs", s)?,
        (None, Some(g)) => parse_grid(g)?,
        (None, None) => return Err(CliError::Usage("give --xs or --grid".into())),
    };
    let quad = match a.method {
        MethodArg::Quadrature | MethodArg::Both => Some(tabulate_kernel_quadrature(params, a.t, &xs)?),
        MethodArg::Spectral => None,
    };
    let spec = match a.method {
        MethodArg::Spectral | MethodArg::Both => {
            let values = xs
                .iter()
                .map(|x| kernel_spectral_point(params, *x, a.t, a.half_width))
                .collect::<fkpp_core::Result<Vec<f64>>>()?;
            Some(KernelTable::new(params, a.t, xs.clone(), values, KernelMethod::Spectral)?)
        }
        MethodArg::Quadrature => None,
    };
    let discrepancy = match (&quad, &spec) {
        (Some(q), Some(s)) => Some(
            q.values()
                .iter()
                .zip(s.values())
                .map(|(u, v)| (u - v).abs())
                .fold(0.0, f64::max),
        ),
        _ => None,
    };
    let tables: Vec<&KernelTable> = quad.iter().chain(spec.iter()).collect();
    let csv = table_csv(&tables)?;

    match &a.out {
        None => {
            std::io::stdout().write_all(&csv)?;
            if let Some(d) = discrepancy {
                eprintln!("max_discrepancy = {d:?}");
            }
        }
        Some(dir) => {
            let mut out = OutputDir::create(dir)?;
            let mut w = out.writer("kernel.csv")?;
            w.write_all(&csv)?;
            w.flush()?;
            drop(w);
            let mut m = Manifest::new(
                "kernel",
                json!({
                    "alpha": a.alpha, "d": a.d, "t": a.t, "xs": xs,
                    "method": format!("{:?}", a.method).to_lowercase(), "half_width": a.half_width,
                }),
            );
            m.details = json!({ "max_discrepancy": discrepancy });
            out.finish(m)?;
        }
    }
    Ok(())
}

pub fn validate_asymptotics(a: &ValidateArgs) -> Result<(), CliError> {
    let alphas = parse_list("alphas", &a.alphas).map_err(|_| CliError::Usage("--alphas needs at least one value".into()))?;
    let reports = residual_scaling_report(a.d, &alphas, (a.x_min, a.x_max), a.samples)?;
    let rs: Vec<f64> = reports.iter().filter_map(|r| r.r_alpha).collect();
    let failures: Vec<String> = reports.iter().filter_map(|r| r.failure.clone()).collect();
    let ratio = if rs.is_empty() {
        None
    } else {
        let hi = rs.iter().cloned().fold(f64::MIN, f64::max);
        let lo = rs.iter().cloned().fold(f64::MAX, f64::min);
        Some(hi / lo)
    };
    let bounded = ratio.is_some_and(|r| r <= a.ratio_limit);
    let report = json!({
        "d": a.d,
        "x_range": [a.x_min, a.x_max],
        "samples": a.samples,
        "calibrated_C": CALIBRATED_C,
        "ratio_limit": a.ratio_limit,
        "ratio": ratio,
        "bounded": bounded,
        "alphas": reports.iter().map(|r| json!({
            "alpha": r.alpha,
            "r_alpha": r.r_alpha,
            "argmax_x": r.argmax_x,
            "within_calibrated_bound": r.samples.iter().all(|s| s.within_bound()),
            "failure": r.failure,
        })).collect::<Vec<_>>(),
    });
    let rows: Vec<_> = reports.iter().flat_map(|r| r.samples.iter().cloned()).collect();

    match &a.out {
        None => println!("{}", serde_json::to_string_pretty(&report).map_err(std::io::Error::from)?),
        Some(dir) => {
            let mut out = OutputDir::create(dir)?;
            let mut w = out.writer("decomposition.csv")?;
            write_decomposition_csv(&mut w, &rows)?;
            w.flush()?;
            drop(w);
            out.write_json("report.json", &report)?;
            let mut m = Manifest::new(
                "validate-asymptotics",
                json!({ "alphas": alphas, "d": a.d, "x_min": a.x_min, "x_max": a.x_max,
                        "samples": a.samples, "ratio_limit": a.ratio_limit }),
            );
            m.details = json!({ "ratio": ratio, "bounded": bounded });
            out.finish(m)?;
        }
    }
    if !failures.is_empty() {
        return Err(fkpp_core::Error::AccuracyNotReached(failures.join("; ")).into());
    }
    if !bounded {
        return Err(CliError::Validation(format!(
            "residual constant ratio {ratio:?} exceeds {}",
            a.ratio_limit
        )));
    }
    Ok(())
}

pub fn tau(a: &TauArgs) -> Result<(), CliError> {
    let alphas = match (&a.alphas, &a.k_range) {
        (Some(s), _) => parse_list("alphas", s)?,
        (None, Some(r)) => {
            let bad = || CliError::Usage(format!("--k-range expects kmin:kmax, got `{r}`"));
            let (lo, hi) = r.split_once(':').ok_or_else(bad)?;
            let lo: i32 = lo.trim().parse().map_err(|_| bad())?;
            let hi: i32 = hi.trim().parse().map_err(|_| bad())?;
            if lo < 1 || hi < lo {
                return Err(bad());
            }
            (lo..=hi).map(|k| 1.0 - 10f64.powi(-k)).collect()
        }
        (None, None) => return Err(CliError::Usage("give --alphas or --k-range".into())),
    };
    let rows = alphas
        .iter()
        .map(|al| {
            let s = critical_radius(FracParams::new(*al, a.d)?)?;
            let mut v = s.to_json();
            v["in_band"] = json!(s.in_band());
            Ok(v)
        })
        .collect::<Result<Vec<Value>, CliError>>()?;
    let doc = Value::Array(rows);
    match &a.out {
        None => println!("{}", serde_json::to_string_pretty(&doc).map_err(std::io::Error::from)?),
        Some(dir) => {
            let mut out = OutputDir::create(dir)?;
            out.write_json("tau.json", &doc)?;
            out.finish(Manifest::new("tau", json!({ "alphas": alphas, "d": a.d })))?;
        }
    }
    Ok(())
}

fn recipe_echo(flat: &FlatConfig, recipe: &Recipe) -> Value {
    json!({
        "entries": flat.entries,
        "solver": recipe.config,
        "datum": recipe.datum,
    })
}

fn write_snapshot<W: Write>(w: &mut W, config: &SolverConfig, s: &FieldState, stride: usize) -> std::io::Result<()> {
    for (i, u) in s.u.iter().enumerate().step_by(stride) {
        writeln!(w, "{:?},{:?},{:?}", s.t, config.x(i), u)?;
    }
    Ok(())
}

/// Runs a recipe, streaming snapshots to `snapshots.csv` and, when `level` is set,
/// tracing the front.
fn run_recipe(
    out: &mut OutputDir,
    recipe: &Recipe,
) -> Result<(fkpp_core::solver::RunManifest, Option<FrontTrace>), CliError> {
    let config = &recipe.config;
    let init = make_initial_datum(&recipe.datum, config)?;
    let mut w = out.writer("snapshots.csv")?;
    writeln!(w, "t,x,u")?;
    let mut trace = recipe
        .level
        .map(|level| FrontTrace::new(config.params.alpha(), level, recipe.side));
    let mut failure: Option<CliError> = None;
    let manifest = run_observed(config, init, Some(recipe.datum), |s| {
        if failure.is_some() {
            return;
        }
        if let Err(e) = write_snapshot(&mut w, config, s, recipe.snapshot_stride) {
            failure = Some(e.into());
            return;
        }
        if let Some(tr) = trace.as_mut() {
            match extract_front(s, config, tr.level, tr.side) {
                Ok(p) => tr.record(s.t, p),
                Err(e) => failure = Some(e.into()),
            }
        }
    })?;
    w.flush()?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((manifest, trace))
}

fn load_recipe(a: &RecipeArgs, kind: RecipeKind) -> Result<(FlatConfig, Recipe), CliError> {
    let flat = FlatConfig::load(&a.config)?;
    let recipe = Recipe::from_flat(&flat, kind)?;
    Ok((flat, recipe))
}

fn truncation(run: &fkpp_core::solver::RunManifest) -> CliError {
    CliError::Truncated(format!("{:?}", run.termination))
}

pub fn solve(a: &RecipeArgs) -> Result<(), CliError> {
    let (flat, recipe) = load_recipe(a, RecipeKind::Solve)?;
    let mut out = OutputDir::create(&a.out)?;
    let mut m = Manifest::new("solve", recipe_echo(&flat, &recipe));
    let (run, _) = run_recipe(&mut out, &recipe)?;
    m.truncated = run.truncated();
    m.details = json!({ "run": run });
    out.finish(m)?;
    if run.truncated() {
        return Err(truncation(&run));
    }
    Ok(())
}

pub fn front(a: &RecipeArgs) -> Result<(), CliError> {
    let (flat, recipe) = load_recipe(a, RecipeKind::Front)?;
    let mut out = OutputDir::create(&a.out)?;
    let mut m = Manifest::new("front", recipe_echo(&flat, &recipe));
    let (run, trace) = run_recipe(&mut out, &recipe)?;
    let trace = trace.expect("front recipes carry a level");
    let mut w = out.writer("trace.csv")?;
    trace.write_csv(&mut w, true)?;
    w.flush()?;
    drop(w);

    let fit = if recipe.config.t_end > 0.0 {
        let f = fit_regimes(
            &trace,
            recipe.linear_window.expect("front recipe"),
            recipe.exp_window.expect("front recipe"),
        );
        if let Ok(f) = &f {
            out.write_json("fit.json", &f.to_json())?;
        }
        Some(f)
    } else {
        None
    };
    m.truncated = run.truncated();
    m.details = json!({
        "run": run,
        "trace_complete": trace.complete,
        "fit_failure": fit.as_ref().and_then(|f| f.as_ref().err().map(|e| e.to_string())),
    });
    out.finish(m)?;
    if run.truncated() {
        return Err(truncation(&run));
    }
    if let Some(Err(e)) = fit {
        return Err(e.into());
    }
    Ok(())
}

pub fn sweep(a: &RecipeArgs) -> Result<(), CliError> {
    let (flat, recipe) = load_recipe(a, RecipeKind::Sweep)?;
    let scenario = SweepScenario {
        config: recipe.config.clone(),
        datum: recipe.datum,
        side: recipe.side,
        linear_window: recipe.linear_window.expect("sweep recipe"),
        exp_window: recipe.exp_window.expect("sweep recipe"),
    };
    let rows = transition_sweep(&recipe.alphas, &scenario, recipe.level.expect("sweep recipe"))?;
    let mut out = OutputDir::create(&a.out)?;
    let mut m = Manifest::new("sweep", recipe_echo(&flat, &recipe));
    for r in &rows {
        let sub = format!("alpha_{:?}", r.alpha);
        if let Some(tr) = &r.trace {
            let mut w = out.writer(&format!("{sub}/trace.csv"))?;
            tr.write_csv(&mut w, true)?;
            w.flush()?;
        }
        if let Some(f) = &r.fit {
            out.write_json(&format!("{sub}/fit.json"), &f.to_json())?;
        }
        if let Some(run) = &r.manifest {
            out.write_json(&format!("{sub}/run.json"), &serde_json::to_value(run).map_err(std::io::Error::from)?)?;
        }
    }
    let mut w = out.writer("transition.csv")?;
    write_transition_csv(&mut w, &rows)?;
    w.flush()?;
    drop(w);

    let truncated: Vec<f64> = rows.iter().filter(|r| r.truncated).map(|r| r.alpha).collect();
    let failed: Vec<String> = rows
        .iter()
        .filter_map(|r| r.failure.as_ref().map(|f| format!("alpha {}: {f}", r.alpha)))
        .collect();
    m.truncated = !truncated.is_empty();
    m.details = json!({ "truncated_alphas": truncated, "failures": failed });
    out.finish(m)?;
    if !truncated.is_empty() {
        return Err(CliError::Truncated(format!("members truncated at alpha {truncated:?}")));
    }
    if !failed.is_empty() {
        return Err(CliError::Validation(failed.join("; ")));
    }
    Ok(())
}
