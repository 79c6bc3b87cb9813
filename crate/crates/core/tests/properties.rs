use proptest::prelude::*;

use fkpp_core::asymptotics::{dominant_regime, Regime};
use fkpp_core::front::{
    crossover_time, extract_front_on, fit_exponential, fit_linear, fit_regimes, least_squares, trace_run, FrontTrace,
    Side,
};
use fkpp_core::kernel::{kernel_at_zero, kernel_profile_1d, kernel_spacetime, tail_series, FracParams};
use fkpp_core::solver::{make_initial_datum, run, run_observed, InitialDatum, SolverConfig};

fn p1(alpha: f64) -> FracParams {
    FracParams::one_d(alpha).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kernel_positive_and_radially_decreasing(alpha in 0.5f64..1.0, x in 0.0f64..40.0, gap in 0.01f64..5.0) {
        let p = p1(alpha);
        let near = kernel_profile_1d(p, x).unwrap();
        let far = kernel_profile_1d(p, x + gap).unwrap();
        prop_assert!(far >= 0.0);
        prop_assert!(far <= near + 1e-15);
        prop_assert!(near <= kernel_at_zero(p) + 1e-15);
    }

    #[test]
    fn kernel_self_similar_in_time(alpha in 0.5f64..1.0, x in 0.1f64..20.0, t in 0.2f64..5.0) {
        let p = p1(alpha);
        let s = t.powf(-1.0 / (2.0 * alpha));
        let direct = kernel_spacetime(p, x, t).unwrap();
        let rescaled = s * kernel_profile_1d(p, x * s).unwrap();
        prop_assert!((direct - rescaled).abs() <= 1e-14 * rescaled.max(1e-300) + 1e-18);
    }

    #[test]
    fn tail_series_matches_quadrature_far_out(alpha in 0.55f64..0.95, r in 40.0f64..200.0) {
        let p = p1(alpha);
        let (series, _) = tail_series(p, r, 60).unwrap();
        let quad = kernel_profile_1d(p, r).unwrap();
        prop_assert!((series / quad - 1.0).abs() < 1e-8, "{} vs {}", series, quad);
    }

    #[test]
    fn regime_switches_once(alpha in 0.6f64..0.999, t in 0.5f64..20.0) {
        let p = p1(alpha);
        let regimes: Vec<Regime> = (1..400)
            .map(|i| dominant_regime(p, 0.25 * i as f64 * t.powf(1.0 / (2.0 * alpha)), t).unwrap())
            .collect();
        let switches = regimes.windows(2).filter(|w| w[0] != w[1]).count();
        prop_assert!(switches <= 1);
        prop_assert_eq!(regimes[0], Regime::GaussianDominant);
    }

    #[test]
    fn extraction_inverts_linear_profiles(root in 0.05f64..0.95, level in 0.05f64..0.95, steep in 0.1f64..0.99) {
        let slope = steep * level.min(1.0 - level) / 5.0;
        // u decreasing linearly through `level` at x = root, inside the cell [0, 1]
        let xs: Vec<f64> = (-4..=4).map(|i| i as f64).collect();
        let u: Vec<f64> = xs.iter().map(|x| (level - slope * (x - root)).clamp(0.0, 1.0)).collect();
        let x = extract_front_on(&u, -4.0, 1.0, level, Side::Right).unwrap().unwrap();
        prop_assert!((x - root).abs() < 1e-12);
        let mirrored: Vec<f64> = u.iter().rev().copied().collect();
        let xl = extract_front_on(&mirrored, -4.0, 1.0, level, Side::Left).unwrap().unwrap();
        prop_assert!((xl + root).abs() < 1e-12);
    }

    #[test]
    fn fits_recover_synthetic_traces(a in -5.0f64..5.0, sigma in 0.1f64..4.0, b in 0.5f64..10.0, rate in 0.05f64..1.0, n in 5usize..60) {
        let lin = FrontTrace::from_samples(0.9, 0.5, Side::Right, (0..n).map(|i| (0.5 * i as f64, a + sigma * 0.5 * i as f64)).collect());
        let f = fit_linear(&lin, (0.0, 0.5 * (n - 1) as f64)).unwrap();
        prop_assert!((f.slope - sigma).abs() < 1e-10 && (f.intercept - a).abs() < 1e-9);
        let ex = FrontTrace::from_samples(0.9, 0.5, Side::Right, (0..n).map(|i| (0.5 * i as f64, b * (rate * 0.5 * i as f64).exp())).collect());
        let g = fit_exponential(&ex, (0.0, 0.5 * (n - 1) as f64)).unwrap();
        prop_assert!((g.slope - rate).abs() < 1e-10);
    }

    #[test]
    fn crossover_of_linear_trace_is_absent(a in 0.0f64..5.0, sigma in 0.5f64..3.0) {
        let tr = FrontTrace::from_samples(0.99, 0.5, Side::Right, (0..40).map(|i| (i as f64, a + sigma * i as f64 + 1e-3)).collect());
        let f = fit_linear(&tr, (0.0, 39.0)).unwrap();
        prop_assert_eq!(crossover_time(&tr, &f, 0.0), None);
    }

    #[test]
    fn crossover_brackets_the_switch(speed in 1.0f64..3.0, t_switch in 6.0f64..12.0, rate in 0.3f64..1.0) {
        let x_switch = speed * t_switch;
        let tr = FrontTrace::from_samples(0.99, 0.5, Side::Right, (0..=300).map(|i| {
            let t = 0.1 * i as f64;
            (t, if t <= t_switch { speed * t } else { x_switch * (rate * (t - t_switch)).exp() })
        }).collect());
        let fit = fit_regimes(&tr, (1.0, t_switch - 1.0), (25.0, 30.0)).unwrap();
        if let Some(tc) = fit.crossover_time {
            prop_assert!(tc > t_switch);
            let x = tr.samples.iter().find(|s| s.0 >= tc).unwrap().1;
            prop_assert!(x >= 2.0 * speed * tc - 1e-6 * x);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn solver_keeps_range(alpha in 0.5f64..=1.0, eps in 0.05f64..=1.0, r0 in 1.0f64..10.0, ramp_frac in 0.3f64..1.0) {
        let mut cfg = SolverConfig::new(p1(alpha), 100.0, 1 << 12, 0.02, 3.0, 0.5).unwrap();
        cfg.edge_guard = 0.9;
        let datum = InitialDatum::SmoothBump { eps, r0, ramp: 2.0 * ramp_frac.min(1.0) * r0.min(2.0) };
        let init = make_initial_datum(&datum, &cfg).unwrap();
        let mut bad = None;
        let m = run_observed(&cfg, init, None, |s| {
            if let Some(v) = s.u.iter().find(|v| !(**v >= -1e-10 && **v <= 1.0 + 1e-10)) {
                bad = Some(*v);
            }
        }).unwrap();
        prop_assert!(bad.is_none(), "{:?}", bad);
        prop_assert!(m.snapshots.iter().all(|d| d.umin >= -1e-10 && d.umax <= 1.0 + 1e-10));
    }

    #[test]
    fn plateau_left_edge_stays_monotone(alpha in 0.55f64..=1.0, width in 20.0f64..60.0) {
        let cfg = SolverConfig::new(p1(alpha), 200.0, 1 << 13, 0.02, 3.0, 0.25).unwrap();
        let datum = InitialDatum::PlateauStretchedExp { width, alpha };
        let init = make_initial_datum(&datum, &cfg).unwrap();
        let mut worst: f64 = 0.0;
        run_observed(&cfg, init, None, |s| {
            let left: Vec<f64> = (0..cfg.n).filter(|i| cfg.x(*i) <= -width).map(|i| s.u[i]).collect();
            for w in left.windows(2) {
                worst = worst.max(w[0] - w[1]);
            }
        }).unwrap();
        prop_assert!(worst <= 1e-9, "defect {}", worst);
    }

    #[test]
    fn compact_front_never_recedes(alpha in 0.6f64..=1.0, level in 0.1f64..0.6) {
        let cfg = SolverConfig::new(p1(alpha), 200.0, 1 << 13, 0.02, 6.0, 0.25).unwrap();
        let datum = InitialDatum::SmoothBump { eps: 1.0, r0: 3.0, ramp: 2.0 };
        let (trace, _) = trace_run(&cfg, &datum, level, Side::Right).unwrap();
        prop_assert!(trace.samples.len() > 5);
        for w in trace.samples.windows(2) {
            prop_assert!(w[1].1 >= w[0].1 - 1e-9, "{:?}", w);
        }
    }
}

#[test]
fn timestep_refinement_is_second_order() {
    let base = SolverConfig::new(p1(0.75), 100.0, 1 << 12, 0.1, 5.0, 5.0).unwrap();
    let datum = InitialDatum::SmoothBump { eps: 0.5, r0: 3.0, ramp: 2.0 };
    let at_end = |dt: f64| {
        let mut c = base.clone();
        c.dt = dt;
        let init = make_initial_datum(&datum, &c).unwrap();
        run(&c, init).unwrap().snapshots.pop().unwrap().u
    };
    let reference = at_end(0.1 / 32.0);
    let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025]
        .iter()
        .map(|dt| {
            let e = at_end(*dt)
                .iter()
                .zip(&reference)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            (dt.ln(), e.ln())
        })
        .collect();
    let slope = least_squares(&pts).unwrap().slope;
    assert!((1.7..=2.3).contains(&slope), "{slope}");
}
