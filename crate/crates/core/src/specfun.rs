//! Gamma, Bessel `J_ν`, Whittaker `W_{0,ν}` and the constant `D_α`.
//!
//! `J_ν` and `W_{0,ν}` are evaluated from their integral representations, real
//! arguments only.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::kernel::FracParams;
use crate::quadrature::{adaptive_panels, integrate_adaptive, QuadSpec};

/// Bessel/Whittaker order, `ν > -1/2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NuOrder(f64);

impl NuOrder {
    pub fn new(nu: f64) -> Result<Self> {
        if nu > -0.5 && nu.is_finite() {
            Ok(Self(nu))
        } else {
            Err(Error::Domain(format!("order nu must exceed -1/2, got {nu}")))
        }
    }

    /// Order `d/2 - 1` of the radial Hankel transform in dimension `d ≥ 1`.
    pub fn for_dimension(d: u32) -> Result<Self> {
        Self::new(d as f64 / 2.0 - 1.0)
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * lanczos_gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = LANCZOS[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, c) in LANCZOS.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

/// `Γ(x)` for `x > 0`.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_nan() {
        return Err(Error::Domain(format!("gamma_fn needs x > 0, got {x}")));
    }
    if x > 171.6 {
        return Ok(f64::INFINITY);
    }
    // exact at small integers
    if x == x.floor() && x <= 30.0 {
        let mut f = 1.0;
        let mut k = 2.0;
        while k < x {
            f *= k;
            k += 1.0;
        }
        return Ok(f);
    }
    Ok(lanczos_gamma(x))
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_nan() {
        return Err(Error::Domain(format!("ln_gamma needs x > 0, got {x}")));
    }
    if x < 100.0 {
        return Ok(gamma_fn(x)?.ln());
    }
    // Stirling series
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
    Ok((x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + series)
}

fn special_spec(abs_tol: f64) -> QuadSpec {
    QuadSpec {
        abs_tol,
        rel_tol: 1e-14,
        max_subdivisions: 4000,
        max_zeros: 1000,
    }
}

/// `J_ν(z)` from the Poisson integral
/// `(z/2)^ν / (Γ(ν+1/2)√π) ∫_{-1}^{1} (1-t²)^{ν-1/2} cos(zt) dt`.
///
/// The weight is singular at `t = ±1` for `ν < 1/2`; there `t = 1 - s^q`,
/// `q = 1/(ν+1/2)` absorbs it exactly. For `ν > 1/2`, `t = cos θ` is used instead.
pub fn bessel_j(nu: NuOrder, z: f64) -> Result<f64> {
    let nu = nu.get();
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("bessel_j needs finite z >= 0, got {z}")));
    }
    if z == 0.0 {
        return if nu == 0.0 {
            Ok(1.0)
        } else if nu > 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Domain(format!("J_{nu}(0) is unbounded")))
        };
    }
    let prefactor = 2.0 * (0.5 * z).powf(nu) / (gamma_fn(nu + 0.5)? * PI.sqrt());
    let target = 1e-11 / prefactor.max(1.0);
    let spec = special_spec(target);
    let pieces = (z / PI).ceil() as usize + 1;

    let outcome = if nu <= 0.5 {
        let q = 1.0 / (nu + 0.5);
        let expo = nu - 0.5;
        let f = move |s: f64| {
            let sq = s.powf(q);
            q * (2.0 - sq).powf(expo) * (z * (1.0 - sq)).cos()
        };
        let bp: Vec<f64> = (0..=pieces).map(|i| i as f64 / pieces as f64).collect();
        adaptive_panels(&f, &bp, &spec)
    } else {
        let two_nu = 2.0 * nu;
        let f = move |th: f64| th.sin().powf(two_nu) * (z * th.cos()).cos();
        let bp: Vec<f64> = (0..=pieces).map(|i| 0.5 * PI * i as f64 / pieces as f64).collect();
        adaptive_panels(&f, &bp, &spec)
    };
    if !outcome.converged {
        return Err(Error::AccuracyNotReached(format!(
            "J_{nu}({z}): integral error estimate {:e}",
            outcome.err_est
        )));
    }
    Ok(prefactor * outcome.value)
}

/// Whittaker `W_{0,ν}(z)` for real `z > 0`:
/// `e^{-z/2}/Γ(ν+1/2) ∫_0^∞ [t(1+t/z)]^{ν-1/2} e^{-t} dt`.
pub fn whittaker_w0(nu: NuOrder, z: f64) -> Result<f64> {
    let nu = nu.get();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Domain(format!("whittaker_w0 needs finite z > 0, got {z}")));
    }
    let expo = nu - 0.5;
    let spec = special_spec(1e-13);

    // [0, 1]: t = s^q removes the t^{ν-1/2} endpoint behaviour.
    let head = if nu < 0.5 {
        let q = 1.0 / (nu + 0.5);
        let f = move |s: f64| {
            let t = s.powf(q);
            q * (1.0 + t / z).powf(expo) * (-t).exp()
        };
        integrate_adaptive(f, 0.0, 1.0, &spec)
    } else {
        let f = move |t: f64| (t * (1.0 + t / z)).powf(expo) * (-t).exp();
        integrate_adaptive(f, 0.0, 1.0, &spec)
    };
    let tail = integrate_adaptive(
        move |t: f64| (t * (1.0 + t / z)).powf(expo) * (-t).exp(),
        1.0,
        f64::INFINITY,
        &spec,
    );
    let to_accuracy = |e: Error| match e {
        Error::NonConvergence { err_est, .. } => {
            Error::AccuracyNotReached(format!("W_0,{nu}({z}): error estimate {err_est:e}"))
        }
        other => other,
    };
    let (h, _) = head.map_err(to_accuracy)?;
    let (t, _) = tail.map_err(to_accuracy)?;
    Ok((-0.5 * z).exp() / gamma_fn(nu + 0.5)? * (h + t))
}

/// Closed form `D_α = 2^{2α+d/2-2} Γ(α+(d-1)/2) Γ(α+1/2)`.
pub fn d_alpha(params: FracParams) -> Result<f64> {
    let a = params.alpha();
    let d = params.d() as f64;
    if !(a < 1.0) {
        return Err(Error::Domain(format!("d_alpha needs alpha < 1, got {a}")));
    }
    Ok(2f64.powf(2.0 * a + 0.5 * d - 2.0) * gamma_fn(a + 0.5 * (d - 1.0))? * gamma_fn(a + 0.5)?)
}

/// `D_α` from its defining integral
/// `∫_0^∞ u^{2α+(d-1)/2} 2^{-(2α+(d-1)/2)} W_{0,d/2-1}(u) du`.
pub fn d_alpha_by_quadrature(params: FracParams) -> Result<f64> {
    let a = params.alpha();
    let d = params.d();
    if d < 2 {
        return Err(Error::Domain("the Whittaker integral for D_alpha needs d >= 2".into()));
    }
    let nu = NuOrder::for_dimension(d)?;
    let p = 2.0 * a + 0.5 * (d as f64 - 1.0);
    let scale = 2f64.powf(-p);
    let f = |u: f64| {
        if u == 0.0 {
            return 0.0;
        }
        match whittaker_w0(nu, u) {
            Ok(w) => u.powf(p) * scale * w,
            Err(_) => f64::NAN,
        }
    };
    let spec = QuadSpec {
        abs_tol: 1e-11,
        rel_tol: 1e-10,
        max_subdivisions: 400,
        max_zeros: 1000,
    };
    let (head, _) = integrate_adaptive(f, 0.0, 1.0, &spec)?;
    let (tail, _) = integrate_adaptive(f, 1.0, f64::INFINITY, &spec)?;
    let v = head + tail;
    if !v.is_finite() {
        return Err(Error::AccuracyNotReached("Whittaker evaluation failed inside D_alpha".into()));
    }
    Ok(v)
}

/// Area of the unit sphere `S^{n}` in `R^{n+1}`: `2π^{(n+1)/2}/Γ((n+1)/2)`.
pub fn sphere_area(n: u32) -> f64 {
    let h = 0.5 * (n as f64 + 1.0);
    2.0 * PI.powf(h) / lanczos_gamma(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j_series(nu: f64, z: f64) -> f64 {
        // Σ (-1)^k (z/2)^{2k+ν} / (k! Γ(k+ν+1))
        let mut s = 0.0;
        let mut k = 0;
        loop {
            let term = (-1f64).powi(k) * (0.5 * z).powf(2.0 * k as f64 + nu)
                / (gamma_fn(k as f64 + 1.0).unwrap() * gamma_fn(k as f64 + nu + 1.0).unwrap());
            s += term;
            if term.abs() < 1e-18 && k > 5 {
                return s;
            }
            k += 1;
        }
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_fn(1.0).unwrap(), 1.0);
        assert!((gamma_fn(0.5).unwrap() - 1.772_453_850_905_516).abs() < 1e-15);
        assert!((gamma_fn(3.5).unwrap() - 3.323_350_970_447_842_6).abs() < 1e-14);
        assert_eq!(gamma_fn(6.0).unwrap(), 120.0);
        assert!(gamma_fn(0.0).is_err());
        assert!(gamma_fn(-1.5).is_err());
    }

    #[test]
    fn ln_gamma_matches_stirling_region() {
        // reference values from 30-digit arithmetic
        for (x, want) in [
            (99.5, 356.835_382_823_613_07),
            (150.0, 600.009_470_555_327_4),
            (250.0, 1_128.523_770_872_990_7),
        ] {
            let v = ln_gamma(x).unwrap();
            assert!(((v - want) / want).abs() < 1e-13, "{x}: {v} vs {want}");
        }
    }

    #[test]
    fn gamma_recurrence_grid() {
        let mut x = 0.1;
        while x <= 20.0 {
            let g1 = gamma_fn(x + 1.0).unwrap();
            let g = gamma_fn(x).unwrap();
            assert!((g1 - x * g).abs() / g1 <= 1e-12, "x = {x}");
            x += 0.037;
        }
    }

    #[test]
    fn nu_order_domain() {
        assert!(NuOrder::new(-0.5).is_err());
        assert!(NuOrder::new(f64::NAN).is_err());
        assert!(NuOrder::new(-0.49).is_ok());
        assert_eq!(NuOrder::for_dimension(2).unwrap().get(), 0.0);
    }

    #[test]
    fn bessel_examples() {
        assert_eq!(bessel_j(NuOrder::new(0.0).unwrap(), 0.0).unwrap(), 1.0);
        assert!(bessel_j(NuOrder::new(0.5).unwrap(), PI).unwrap().abs() < 1e-10);
        let z = 2.0;
        let expected = j_series(1.0, z);
        let v = bessel_j(NuOrder::new(1.0).unwrap(), z).unwrap();
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
        assert!(bessel_j(NuOrder::new(-0.25).unwrap(), 0.0).is_err());
        assert!(bessel_j(NuOrder::new(0.0).unwrap(), -1.0).is_err());
    }

    #[test]
    fn bessel_large_argument_reference() {
        // reference from 30-digit arithmetic
        let v = bessel_j(NuOrder::new(-0.3).unwrap(), 17.0).unwrap();
        assert!((v + 0.108_871_047_093_318_07).abs() < 1e-12, "{v}");
    }

    #[test]
    fn bessel_against_series_various_orders() {
        for nu in [-0.3, 0.0, 0.25, 0.5, 1.0, 1.5, 2.7] {
            // the power series cancels badly beyond z ~ 10
            for z in [0.01, 0.7, 3.0, 9.5] {
                let v = bessel_j(NuOrder::new(nu).unwrap(), z).unwrap();
                let s = j_series(nu, z);
                assert!((v - s).abs() < 1e-10, "nu={nu} z={z}: {v} vs {s}");
            }
        }
    }

    #[test]
    fn bessel_half_order_closed_form_large_arguments() {
        let nu = NuOrder::new(0.5).unwrap();
        for z in [25.0, 99.3, 250.0, 640.0, 1000.0] {
            let v = bessel_j(nu, z).unwrap();
            let exact = (2.0 / (PI * z)).sqrt() * z.sin();
            assert!((v - exact).abs() < 1e-10, "z={z}");
        }
    }

    #[test]
    fn whittaker_examples() {
        let h = NuOrder::new(0.5).unwrap();
        assert!((whittaker_w0(h, 2.0).unwrap() - 0.367_879_441_171_442_33).abs() < 1e-12);
        assert!((whittaker_w0(h, 4.0).unwrap() - 0.135_335_283_236_612_7).abs() < 1e-12);
        assert!(whittaker_w0(h, 0.0).is_err());
        assert!(whittaker_w0(h, -2.0).is_err());
    }

    #[test]
    fn whittaker_order_zero_brute_force() {
        // Composite midpoint rule, 10^6 panels after t = s^2 (removes t^{-1/2}),
        // on [0, 1], plus 10^6 panels on [1, 60].
        let z = 1.0;
        let n = 1_000_000;
        let mut head = 0.0;
        let h = 1.0 / n as f64;
        for i in 0..n {
            let s = (i as f64 + 0.5) * h;
            let t = s * s;
            head += 2.0 * (1.0 + t / z).powf(-0.5) * (-t).exp();
        }
        head *= h;
        let mut tail = 0.0;
        let h2 = 59.0 / n as f64;
        for i in 0..n {
            let t = 1.0 + (i as f64 + 0.5) * h2;
            tail += (t * (1.0 + t / z)).powf(-0.5) * (-t).exp();
        }
        tail *= h2;
        let oracle = (-0.5f64).exp() / PI.sqrt() * (head + tail);
        let v = whittaker_w0(NuOrder::new(0.0).unwrap(), z).unwrap();
        assert!((v - oracle).abs() < 1e-9, "{v} vs {oracle}");
    }

    #[test]
    fn whittaker_half_order_is_exponential() {
        let h = NuOrder::new(0.5).unwrap();
        let mut z = 0.1;
        while z <= 50.0 {
            let v = whittaker_w0(h, z).unwrap();
            assert!((v - (-0.5 * z).exp()).abs() <= 1e-10, "z={z}");
            z += 1.7;
        }
    }

    #[test]
    fn d_alpha_closed_form_examples() {
        let v = d_alpha(FracParams::new(0.5, 2).unwrap()).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        let v = d_alpha(FracParams::new(0.75, 3).unwrap()).unwrap();
        let expected = 2.0 * gamma_fn(1.75).unwrap() * gamma_fn(1.25).unwrap();
        assert!((v - expected).abs() < 1e-14);
        assert!(d_alpha(FracParams::new(1.0, 2).unwrap()).is_err());
    }

    #[test]
    fn d_alpha_whittaker_integral_reference() {
        // integral reference values from 25-digit arithmetic
        for &(a, d, want) in &[(0.6, 2, 2.926_914_841_590_178_8), (0.75, 3, 6.646_701_940_895_685_6)] {
            let quad = d_alpha_by_quadrature(FracParams::new(a, d).unwrap()).unwrap();
            assert!(((quad - want) / want).abs() < 1e-8, "alpha={a} d={d}: {quad} vs {want}");
        }
    }

    #[test]
    fn d_alpha_closed_form_differs_from_integral() {
        // at alpha = 1/2, d = 2 the closed form is 1 and the integral is sqrt(2 pi)
        let p = FracParams::new(0.5, 2).unwrap();
        let quad = d_alpha_by_quadrature(p).unwrap();
        assert!((quad - (2.0 * PI).sqrt()).abs() < 1e-8, "{quad}");
        assert_eq!(d_alpha(p).unwrap(), 1.0);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(0) - 2.0).abs() < 1e-14);
        assert!((sphere_area(1) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-13);
    }
}
