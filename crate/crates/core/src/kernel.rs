//! The fractional heat kernel `p(x, t) = F^{-1}(e^{-|ξ|^{2α} t})` in dimension `d ≥ 1`.
//!
//! Two independent evaluation paths:
//!
//! * quadrature — pointwise, high accuracy: the cosine transform in 1D and the radial
//!   Hankel transform with `J_{d/2-1}` in higher dimension;
//! * spectral — the symbol sampled on the frequency lattice of the periodic box
//!   `[-L, L)^d` and inverted by a discrete Fourier sum (FFT for 1D tables).
//!
//! The spectral values are periodizations of the true kernel; away from the box edge
//! (`|x| ≤ L/4`) the algebraic tail keeps the difference small but nonzero.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use realfft::RealFftPlanner;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_adaptive, integrate_oscillatory_cos, oscillation_panel, AlternatingSum, QuadSpec};
use crate::specfun::{bessel_j, gamma_fn, ln_gamma, sphere_area, NuOrder};

/// Fractional order `α ∈ (0, 1]` and dimension `d ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracParams {
    alpha: f64,
    d: u32,
}

impl FracParams {
    pub fn new(alpha: f64, d: u32) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if d == 0 {
            return Err(Error::Domain("dimension d must be at least 1".into()));
        }
        Ok(Self { alpha, d })
    }

    pub fn one_d(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// `α = 1`: the Gaussian heat kernel.
    pub fn is_classical(&self) -> bool {
        self.alpha == 1.0
    }
}

static CLAMPED: AtomicUsize = AtomicUsize::new(0);

/// Number of slightly negative kernel values (≥ -1e-12) clamped to zero so far.
pub fn clamp_count() -> usize {
    CLAMPED.load(Ordering::Relaxed)
}

const NEGATIVE_SLACK: f64 = 1e-12;

fn clamp_nonnegative(v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v >= -NEGATIVE_SLACK {
        CLAMPED.fetch_add(1, Ordering::Relaxed);
        Ok(0.0)
    } else {
        Err(Error::AccuracyNotReached(format!("kernel quadrature returned {v:e} < 0")))
    }
}

/// Tolerances used by the pointwise kernel quadrature.
pub fn kernel_quad_spec() -> QuadSpec {
    QuadSpec {
        abs_tol: 1e-17,
        rel_tol: 1e-14,
        max_subdivisions: 2000,
        max_zeros: 2_000_000,
    }
}

fn gaussian_profile(d: u32, r: f64) -> f64 {
    (4.0 * PI).powf(-0.5 * d as f64) * (-0.25 * r * r).exp()
}

/// `p_α(0)`: `Γ(1/(2α)+1)/π` for `d = 1`, `(2π)^{-d} S_{d-1} Γ(d/(2α))/(2α)` otherwise.
pub fn kernel_at_zero(params: FracParams) -> f64 {
    let a = params.alpha();
    let d = params.d();
    if d == 1 {
        lanczos(1.0 / (2.0 * a) + 1.0) / PI
    } else {
        let df = d as f64;
        (2.0 * PI).powf(-df) * sphere_area(d - 1) * lanczos(df / (2.0 * a)) / (2.0 * a)
    }
}

fn lanczos(x: f64) -> f64 {
    gamma_fn(x).expect("positive argument")
}

/// `p_α(x) = (1/π) ∫_0^∞ e^{-r^{2α}} cos(r|x|) dr` (d = 1).
pub fn kernel_profile_1d(params: FracParams, x: f64) -> Result<f64> {
    if params.d() != 1 {
        return Err(Error::Domain(format!("kernel_profile_1d needs d = 1, got {}", params.d())));
    }
    if !x.is_finite() {
        return Err(Error::Domain(format!("non-finite x {x}")));
    }
    let x = x.abs();
    if params.is_classical() {
        return Ok(gaussian_profile(1, x));
    }
    if x == 0.0 {
        return Ok(kernel_at_zero(params));
    }
    let two_a = 2.0 * params.alpha();
    let v = integrate_oscillatory_cos(|r: f64| (-r.powf(two_a)).exp(), x, &kernel_quad_spec())?;
    clamp_nonnegative(v / PI)
}

/// Initial bracket for the `k`-th positive zero of `J_ν` (McMahon's leading term).
pub fn bessel_zero_estimate(nu: f64, k: usize) -> f64 {
    (k as f64 + 0.5 * nu - 0.25) * PI
}

/// `j_{ν,k}` refined by bisection around the McMahon estimate. Falls back to the estimate
/// if the bracket shows no sign change.
pub fn bessel_zero(nu: NuOrder, k: usize) -> Result<f64> {
    let beta = bessel_zero_estimate(nu.get(), k);
    let mut lo = (beta - 0.25 * PI).max(1e-12);
    let mut hi = beta + 0.25 * PI;
    let mut flo = bessel_j(nu, lo)?;
    let fhi = bessel_j(nu, hi)?;
    if flo * fhi > 0.0 {
        return Ok(beta);
    }
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        let fm = bessel_j(nu, mid)?;
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Radial profile for `d ≥ 2`:
/// `p_α(r) = (2π)^{-d/2} r^{1-d/2} ∫_0^∞ e^{-ρ^{2α}} J_{d/2-1}(rρ) ρ^{d/2} dρ`,
/// summed lobe by lobe between the zeros of the Bessel factor.
pub fn kernel_profile_dd(params: FracParams, r: f64) -> Result<f64> {
    let d = params.d();
    if d < 2 {
        return Err(Error::Domain("kernel_profile_dd needs d >= 2".into()));
    }
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("radius must be finite and >= 0, got {r}")));
    }
    if params.is_classical() {
        return Ok(gaussian_profile(d, r));
    }
    if r == 0.0 {
        return Ok(kernel_at_zero(params));
    }
    let nu = NuOrder::for_dimension(d)?;
    let two_a = 2.0 * params.alpha();
    let half_d = 0.5 * d as f64;
    let integrand = |rho: f64| {
        if rho == 0.0 {
            return 0.0;
        }
        let g = (-rho.powf(two_a)).exp();
        if g == 0.0 {
            return 0.0;
        }
        match bessel_j(nu, r * rho) {
            Ok(j) => g * j * rho.powf(half_d),
            Err(_) => f64::NAN,
        }
    };
    let spec = QuadSpec {
        abs_tol: 1e-14,
        rel_tol: 1e-12,
        max_subdivisions: 2000,
        max_zeros: 200_000,
    };
    let panel_spec = QuadSpec {
        abs_tol: 1e-16,
        rel_tol: 1e-12,
        ..spec
    };
    let mut acc = AlternatingSum::new(spec);
    let mut a = 0.0;
    let mut k = 1;
    let value = loop {
        let b = bessel_zero(nu, k)? / r;
        let term = oscillation_panel(&integrand, a, b, &panel_spec)?;
        if !term.is_finite() {
            return Err(Error::AccuracyNotReached(format!("Bessel evaluation failed near rho = {b}")));
        }
        if let Some((v, _)) = acc.push(term)? {
            break v;
        }
        a = b;
        k += 1;
    };
    clamp_nonnegative((2.0 * PI).powf(-half_d) * r.powf(1.0 - half_d) * value)
}

/// Radial profile in any dimension.
pub fn kernel_profile(params: FracParams, r: f64) -> Result<f64> {
    if params.d() == 1 {
        kernel_profile_1d(params, r)
    } else {
        kernel_profile_dd(params, r.abs())
    }
}

/// `p(x, t) = t^{-d/(2α)} p_α(|x| t^{-1/(2α)})`.
pub fn kernel_spacetime(params: FracParams, radius: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    let s = t.powf(-1.0 / (2.0 * params.alpha()));
    Ok(s.powi(params.d() as i32) * kernel_profile(params, radius.abs() * s)?)
}

/// [`kernel_spacetime`] at a point of `R^d` given by its coordinates.
pub fn kernel_spacetime_at(params: FracParams, x: &[f64], t: f64) -> Result<f64> {
    if x.len() != params.d() as usize {
        return Err(Error::Domain(format!(
            "point has {} coordinates, dimension is {}",
            x.len(),
            params.d()
        )));
    }
    let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
    kernel_spacetime(params, r, t)
}

/// Coefficient of `r^{-(2αk+d)}` in the large-`r` expansion of the stable density,
/// `(-1)^{k+1}/k! · 2^{2αk} Γ(αk+d/2) Γ(αk+1) sin(παk) / π^{d/2+1}`.
pub fn tail_series_coefficient(params: FracParams, k: usize) -> Result<f64> {
    let (magnitude, phase) = coefficient_parts(params, k)?;
    Ok(magnitude * phase)
}

/// `|c_k| / |sin(παk)|` and the signed sine factor, kept apart so the truncation
/// rule is not fooled by a nearly vanishing sine.
fn coefficient_parts(params: FracParams, k: usize) -> Result<(f64, f64)> {
    let a = params.alpha();
    let kf = k as f64;
    let half_d = 0.5 * params.d() as f64;
    let log_mag = 2.0 * a * kf * 2f64.ln() + ln_gamma(a * kf + half_d)? + ln_gamma(a * kf + 1.0)?
        - ln_gamma(kf + 1.0)?
        - (half_d + 1.0) * PI.ln();
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    let sine = (PI * a * kf).sin();
    let phase = if sine.abs() < 1e-12 { 0.0 } else { sign * sine };
    Ok((log_mag.exp(), phase))
}

/// Truncated large-`r` expansion of `p_α(r)`, stopped at its smallest term.
/// Returns `(value, magnitude of the first omitted term)`.
pub fn tail_series(params: FracParams, r: f64, max_terms: usize) -> Result<(f64, f64)> {
    let exponent = |k: usize| 2.0 * params.alpha() * k as f64 + params.d() as f64;
    series_sum(params, max_terms, |k, c| c * r.powf(-exponent(k)))
}

/// Mass of the kernel outside the ball of radius `radius`, from the tail expansion
/// integrated term by term: `S_{d-1} Σ c_k R^{-2αk}/(2αk)`.
pub fn tail_mass_beyond(params: FracParams, radius: f64, max_terms: usize) -> Result<(f64, f64)> {
    let a = params.alpha();
    let area = sphere_area(params.d() - 1);
    let (v, e) = series_sum(params, max_terms, |k, c| {
        let kf = k as f64;
        c * radius.powf(-2.0 * a * kf) / (2.0 * a * kf)
    })?;
    Ok((area * v, area * e))
}

fn series_sum(params: FracParams, max_terms: usize, term: impl Fn(usize, f64) -> f64) -> Result<(f64, f64)> {
    if params.is_classical() {
        return Ok((0.0, 0.0));
    }
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    for k in 1..=max_terms {
        let (magnitude, phase) = coefficient_parts(params, k)?;
        let envelope = term(k, magnitude).abs();
        // asymptotic series: stop before the terms turn around
        if envelope > prev {
            return Ok((sum, envelope));
        }
        sum += term(k, magnitude * phase);
        prev = envelope;
        if prev < 1e-20 * sum.abs() {
            return Ok((sum, prev));
        }
    }
    Ok((sum, prev))
}

/// Total mass `S_{d-1} ∫_0^∞ p_α(r) r^{d-1} dr`: adaptive quadrature on `[0, split]`
/// and the tail expansion beyond.
pub fn kernel_mass(params: FracParams, split: f64, spec: &QuadSpec) -> Result<f64> {
    let d = params.d();
    let area = sphere_area(d - 1);
    let f = |r: f64| match kernel_profile(params, r) {
        Ok(p) => p * r.powi(d as i32 - 1),
        Err(_) => f64::NAN,
    };
    let (inner, _) = integrate_adaptive(f, 0.0, split, spec)?;
    if !inner.is_finite() {
        return Err(Error::AccuracyNotReached("kernel evaluation failed inside mass integral".into()));
    }
    let (tail, _) = tail_mass_beyond(params, split, 60)?;
    Ok(area * inner + tail)
}

/// Which evaluation path produced a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMethod {
    Quadrature,
    Spectral,
}

impl KernelMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            KernelMethod::Quadrature => "quadrature",
            KernelMethod::Spectral => "spectral",
        }
    }
}

/// Radial samples of `p(·, t)`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    params: FracParams,
    t: f64,
    xs: Vec<f64>,
    values: Vec<f64>,
    method: KernelMethod,
}

impl KernelTable {
    /// Builds a table, checking that the radii are non-negative and strictly increasing
    /// and that no value is negative.
    pub fn new(params: FracParams, t: f64, xs: Vec<f64>, values: Vec<f64>, method: KernelMethod) -> Result<Self> {
        if xs.len() != values.len() {
            return Err(Error::Domain("radii and values differ in length".into()));
        }
        if !(t > 0.0) {
            return Err(Error::Domain(format!("time must be positive, got {t}")));
        }
        if xs.first().is_some_and(|x| *x < 0.0) || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("radii must be non-negative and strictly increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Domain(format!("negative or NaN kernel value {v}")));
        }
        Ok(Self {
            params,
            t,
            xs,
            values,
            method,
        })
    }

    pub fn params(&self) -> FracParams {
        self.params
    }
    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn method(&self) -> KernelMethod {
        self.method
    }

    /// Value at a tabulated radius, if present.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        self.xs
            .binary_search_by(|probe| probe.total_cmp(&x))
            .ok()
            .map(|i| self.values[i])
    }

    /// Largest violation of radial monotonicity (0 when nonincreasing).
    pub fn monotonicity_defect(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Trapezoidal mass of the full `d`-dimensional density over the tabulated radii.
    pub fn trapezoid_mass(&self) -> f64 {
        let d = self.params.d() as i32;
        let area = sphere_area(self.params.d() - 1);
        let f: Vec<f64> = self
            .xs
            .iter()
            .zip(&self.values)
            .map(|(x, v)| v * x.powi(d - 1))
            .collect();
        let mut s = 0.0;
        for i in 1..f.len() {
            s += 0.5 * (f[i] + f[i - 1]) * (self.xs[i] - self.xs[i - 1]);
        }
        area * s
    }

    /// Positivity, monotonicity (up to `mono_slack`) and mass ≤ 1 + 1e-6.
    pub fn check_invariants(&self, mono_slack: f64) -> Result<()> {
        let defect = self.monotonicity_defect();
        if defect > mono_slack {
            return Err(Error::AccuracyNotReached(format!(
                "kernel table increases by {defect:e} somewhere"
            )));
        }
        let m = self.trapezoid_mass();
        if m > 1.0 + 1e-6 {
            return Err(Error::AccuracyNotReached(format!("kernel table mass {m} exceeds 1")));
        }
        Ok(())
    }

    /// CSV with header `x,p,method,alpha,d,t`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,p,method,alpha,d,t")?;
        for (x, p) in self.xs.iter().zip(&self.values) {
            writeln!(
                w,
                "{:?},{:?},{},{:?},{},{:?}",
                x,
                p,
                self.method.as_str(),
                self.params.alpha(),
                self.params.d(),
                self.t
            )?;
        }
        Ok(())
    }
}

/// Quadrature table at the given radii.
pub fn tabulate_kernel_quadrature(params: FracParams, t: f64, xs: &[f64]) -> Result<KernelTable> {
    let values = xs
        .iter()
        .map(|x| kernel_spacetime(params, *x, t))
        .collect::<Result<Vec<_>>>()?;
    KernelTable::new(params, t, xs.to_vec(), values, KernelMethod::Quadrature)
}

/// Symbol value at the Nyquist frequency of the `n`-point grid on `[-L, L)`.
pub fn nyquist_symbol(params: FracParams, t: f64, half_width: f64, n: usize) -> f64 {
    let kmax = PI * n as f64 / (2.0 * half_width);
    (-kmax.powf(2.0 * params.alpha()) * t).exp()
}

/// 1D table of `p(·, t)` on the nonnegative half of the `n`-point periodic grid of
/// `[-L, L)`, from an inverse real FFT of the sampled symbol.
pub fn tabulate_kernel_spectral(params: FracParams, t: f64, half_width: f64, n: usize) -> Result<KernelTable> {
    if params.d() != 1 {
        return Err(Error::Domain("spectral tabulation is one-dimensional".into()));
    }
    if !(t > 0.0) || !(half_width > 0.0) {
        return Err(Error::Domain("t and L must be positive".into()));
    }
    if !n.is_power_of_two() || n < 1024 {
        return Err(Error::Domain(format!("N must be a power of two >= 1024, got {n}")));
    }
    let tail = nyquist_symbol(params, t, half_width, n);
    if !(tail < 1e-14) {
        return Err(Error::Resolution(format!(
            "symbol at the grid Nyquist frequency is {tail:e} (needs < 1e-14); refine N or enlarge L"
        )));
    }
    let two_a = 2.0 * params.alpha();
    let mut planner = RealFftPlanner::<f64>::new();
    let c2r = planner.plan_fft_inverse(n);
    let mut spectrum = c2r.make_input_vec();
    for (j, s) in spectrum.iter_mut().enumerate() {
        let k = PI * j as f64 / half_width;
        let sym = (-k.powf(two_a) * t).exp();
        // shift to x_0 = -L
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        *s = Complex64::new(sign * sym, 0.0);
    }
    let mut out = c2r.make_output_vec();
    c2r.process(&mut spectrum, &mut out)
        .map_err(|e| Error::Domain(format!("fft failure: {e}")))?;
    let dx = 2.0 * half_width / n as f64;
    let scale = 1.0 / (2.0 * half_width);
    let mut xs = Vec::with_capacity(n / 2);
    let mut values = Vec::with_capacity(n / 2);
    for (m, v) in out.iter().enumerate().skip(n / 2) {
        xs.push(-half_width + m as f64 * dx);
        values.push(clamp_nonnegative(v * scale)?);
    }
    // exact zero at the centre
    xs[0] = 0.0;
    KernelTable::new(params, t, xs, values, KernelMethod::Spectral)
}

/// Spectral value at a single radius in any dimension: the Fourier series of the
/// `2L`-periodic box evaluated directly, lattice truncated where the symbol drops
/// below 1e-17.
pub fn kernel_spectral_point(params: FracParams, radius: f64, t: f64, half_width: f64) -> Result<f64> {
    if !(t > 0.0) || !(half_width > 0.0) {
        return Err(Error::Domain("t and L must be positive".into()));
    }
    let a = params.alpha();
    let kcut = (39.0 / t).powf(1.0 / (2.0 * a));
    let dk = PI / half_width;
    let jmax = (kcut / dk).ceil() as i64;
    let d = params.d();
    if d > 3 {
        return Err(Error::Domain("spectral point evaluation supports d <= 3".into()));
    }
    if (2 * jmax + 1).pow(d) > 400_000_000 {
        return Err(Error::Resolution("spectral lattice too large; reduce L".into()));
    }
    let sym = |k2: f64| (-k2.powf(a) * t).exp();
    // Σ over the transverse lattice, grouped by squared index norm.
    let transverse: Vec<(f64, f64)> = match d {
        1 => vec![(0.0, 1.0)],
        2 => (-jmax..=jmax).map(|j| ((j * j) as f64, 1.0)).collect(),
        _ => {
            let mut counts = std::collections::BTreeMap::<i64, f64>::new();
            for j2 in -jmax..=jmax {
                for j3 in -jmax..=jmax {
                    *counts.entry(j2 * j2 + j3 * j3).or_default() += 1.0;
                }
            }
            counts.into_iter().map(|(m, c)| (m as f64, c)).collect()
        }
    };
    let mut total = 0.0;
    for j1 in 0..=jmax {
        let k1 = j1 as f64 * dk;
        let mut inner = 0.0;
        for (m, c) in &transverse {
            inner += c * sym(k1 * k1 + m * dk * dk);
        }
        let w = if j1 == 0 { 1.0 } else { 2.0 };
        total += w * inner * (k1 * radius).cos();
    }
    clamp_nonnegative(total * (2.0 * half_width).powi(-(d as i32)))
}

/// Largest absolute difference between the two evaluation paths at the given radii.
pub fn cross_validate(params: FracParams, t: f64, radii: &[f64], half_width: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for r in radii {
        let q = kernel_spacetime(params, *r, t)?;
        let s = kernel_spectral_point(params, *r, t, half_width)?;
        worst = worst.max((q - s).abs());
    }
    Ok(worst)
}
