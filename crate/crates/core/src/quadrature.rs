//! Numerical integration engines.
//!
//! * [`integrate_adaptive`]: globally adaptive 21-point Gauss–Kronrod on finite or
//!   semi-infinite ranges (`t = a + s/(1-s)` maps `[a, ∞)` onto `[0, 1)`).
//! * [`integrate_oscillatory_cos`]: `∫_0^∞ g(r) cos(ωr) dr` for positive, eventually
//!   decreasing `g`, summed panel by panel between the zeros of the cosine as an
//!   alternating series ([`AlternatingSum`]).
//!
//! Integrand callbacks are plain `Fn(f64) -> f64`; they must be reentrant if the caller
//! integrates from several threads.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Tolerances and work limits shared by every integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
    /// Maximum number of inter-zero panels in oscillatory mode.
    pub max_zeros: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_subdivisions: 2000,
            max_zeros: 200_000,
        }
    }
}

impl QuadSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize, max_zeros: usize) -> Result<Self> {
        let spec = Self {
            abs_tol,
            rel_tol,
            max_subdivisions,
            max_zeros,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Default limits with the given tolerances.
    pub fn with_tol(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol >= 0.0 && self.rel_tol >= 0.0) || !(self.abs_tol + self.rel_tol > 0.0) {
            return Err(Error::Domain(format!(
                "tolerances must be non-negative with a positive sum (abs {}, rel {})",
                self.abs_tol, self.rel_tol
            )));
        }
        if self.max_subdivisions < 8 {
            return Err(Error::Domain("max_subdivisions must be at least 8".into()));
        }
        if self.max_zeros < 16 {
            return Err(Error::Domain("max_zeros must be at least 16".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn tolerance(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_958_109_831,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Panel { a, b, value, err }
}

/// Outcome of an adaptive run, converged or not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOutcome {
    pub value: f64,
    pub err_est: f64,
    pub converged: bool,
    pub evaluations: usize,
}

impl AdaptiveOutcome {
    pub fn into_result(self) -> Result<(f64, f64)> {
        if self.converged {
            Ok((self.value, self.err_est))
        } else {
            Err(Error::NonConvergence {
                value: self.value,
                err_est: self.err_est,
            })
        }
    }
}

/// Globally adaptive Gauss–Kronrod on a finite range with caller-supplied initial
/// breakpoints (sorted, at least two). Never fails; inspect `converged`.
pub fn adaptive_panels<F: Fn(f64) -> f64>(f: &F, breakpoints: &[f64], spec: &QuadSpec) -> AdaptiveOutcome {
    debug_assert!(breakpoints.len() >= 2);
    let mut heap = BinaryHeap::with_capacity(spec.max_subdivisions + breakpoints.len());
    let mut frozen_value = 0.0;
    let mut frozen_err = 0.0;
    let mut evaluations = 0;
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            heap.push(gk21(f, w[0], w[1]));
            evaluations += 21;
        }
    }
    let totals = |heap: &BinaryHeap<Panel>, fv: f64, fe: f64| {
        let (v, e) = heap.iter().fold((fv, fe), |(v, e), p| (v + p.value, e + p.err));
        (v, e)
    };
    let (mut value, mut err) = totals(&heap, frozen_value, frozen_err);
    let mut intervals = heap.len();
    while err > spec.tolerance(value) && intervals < spec.max_subdivisions {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        let scale = worst.a.abs().max(worst.b.abs()).max(f64::MIN_POSITIVE);
        if !(mid > worst.a && mid < worst.b) || (worst.b - worst.a) < 1e3 * f64::EPSILON * scale {
            // Too narrow to split further; keep its contribution as is.
            frozen_value += worst.value;
            frozen_err += worst.err;
            if heap.is_empty() {
                break;
            }
            continue;
        }
        let left = gk21(f, worst.a, mid);
        let right = gk21(f, mid, worst.b);
        evaluations += 42;
        value += left.value + right.value - worst.value;
        err += left.err + right.err - worst.err;
        heap.push(left);
        heap.push(right);
        intervals += 1;
        if intervals % 64 == 0 {
            let t = totals(&heap, frozen_value, frozen_err);
            value = t.0;
            err = t.1;
        }
    }
    let (value, err) = totals(&heap, frozen_value, frozen_err);
    AdaptiveOutcome {
        value,
        err_est: err,
        converged: err <= spec.tolerance(value),
        evaluations,
    }
}

/// Adaptive integral of `f` over `[a, b]`; `b` may be `f64::INFINITY`.
///
/// Returns `(value, err_est)`. When the subdivision budget runs out the error carries
/// the best value and its estimate.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    if a.is_nan() || b.is_nan() || !a.is_finite() {
        return Err(Error::Domain(format!("invalid integration range [{a}, {b}]")));
    }
    if b == f64::INFINITY {
        let mapped = |s: f64| {
            let om = 1.0 - s;
            let v = f(a + s / om);
            if v == 0.0 {
                0.0
            } else {
                v / (om * om)
            }
        };
        return adaptive_panels(&mapped, &[0.0, 1.0], spec).into_result();
    }
    if !b.is_finite() {
        return Err(Error::Domain(format!("invalid upper limit {b}")));
    }
    if a == b {
        return Ok((0.0, 0.0));
    }
    if b < a {
        let (v, e) = adaptive_panels(&f, &[b, a], spec).into_result()?;
        return Ok((-v, e));
    }
    adaptive_panels(&f, &[a, b], spec).into_result()
}

/// Like [`integrate_adaptive`] on a finite range, starting from the given breakpoints.
pub fn integrate_breakpoints<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64], spec: &QuadSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    if breakpoints.len() < 2 || breakpoints.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::Domain("breakpoints must be sorted with at least two entries".into()));
    }
    adaptive_panels(&f, breakpoints, spec).into_result()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Order of the fixed rule used on inter-zero panels.
pub const PANEL_ORDER: usize = 20;

fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_ORDER))
}

/// Fixed-order Gauss–Legendre on `[a, b]` with [`PANEL_ORDER`] nodes.
pub fn gauss_legendre_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (x, w) = panel_rule();
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for (xi, wi) in x.iter().zip(w) {
        s += wi * f(c + h * xi);
    }
    s * h
}

/// Panel integral for the inter-zero series: fixed Gauss–Legendre away from the origin,
/// adaptive Gauss–Kronrod where the panel sits close to `r = 0` (the integrands have
/// their only non-analytic point there).
pub(crate) fn oscillation_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, spec: &QuadSpec) -> Result<f64> {
    if a >= 4.0 * (b - a) {
        return Ok(gauss_legendre_panel(f, a, b));
    }
    // geometric breakpoints toward the origin so that features far smaller than the
    // panel are seen
    let mut breaks = vec![b];
    let mut p = b;
    while p > a + 1e-18 * b && breaks.len() < 32 {
        p = a + 0.25 * (p - a);
        breaks.push(p);
    }
    breaks.push(a);
    breaks.reverse();
    let out = adaptive_panels(f, &breaks, spec);
    if out.converged || out.err_est <= 1e3 * spec.tolerance(out.value) {
        Ok(out.value)
    } else {
        Err(Error::NonConvergence {
            value: out.value,
            err_est: out.err_est,
        })
    }
}

/// Which extrapolation produced the result of an [`AlternatingSum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesMethod {
    Direct,
    Euler,
    Epsilon,
}

/// Partial-sum accumulator for an alternating series with Euler and Wynn-ε acceleration.
///
/// Feed terms with [`AlternatingSum::push`]; it reports a value as soon as either the
/// terms themselves fall below tolerance (the alternating-series bound makes the direct
/// sum exact to that level) or an accelerated estimate settles.
#[derive(Debug, Clone)]
pub struct AlternatingSum {
    spec: QuadSpec,
    sum: f64,
    comp: f64,
    partials: Vec<f64>,
    terms: usize,
    last_abs: Vec<f64>,
    euler_prev: Option<f64>,
    euler_delta_prev: f64,
    euler_stable: usize,
    euler_stall: usize,
    use_epsilon: bool,
    eps_prev: Option<f64>,
    eps_stable: usize,
    growth_run: usize,
}

const PARTIAL_WINDOW: usize = 40;
const EULER_DEPTH: usize = 16;
const ACCEL_START: usize = 24;
// lobes of radial integrands may grow for a while before the envelope decays
const GROWTH_START: usize = 64;

impl AlternatingSum {
    pub fn new(spec: QuadSpec) -> Self {
        Self {
            spec,
            sum: 0.0,
            comp: 0.0,
            partials: Vec::with_capacity(PARTIAL_WINDOW),
            terms: 0,
            last_abs: Vec::new(),
            euler_prev: None,
            euler_delta_prev: f64::INFINITY,
            euler_stable: 0,
            euler_stall: 0,
            use_epsilon: false,
            eps_prev: None,
            eps_stable: 0,
            growth_run: 0,
        }
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn partial_sum(&self) -> f64 {
        self.sum + self.comp
    }

    /// Adds a term. `Ok(Some(..))` once converged, `Ok(None)` to continue.
    pub fn push(&mut self, term: f64) -> Result<Option<(f64, SeriesMethod)>> {
        if !term.is_finite() {
            return Err(Error::Domain(format!("non-finite series term {term}")));
        }
        // Neumaier summation
        let t = self.sum + term;
        if self.sum.abs() >= term.abs() {
            self.comp += (self.sum - t) + term;
        } else {
            self.comp += (term - t) + self.sum;
        }
        self.sum = t;
        self.terms += 1;
        let s = self.partial_sum();
        if self.partials.len() == PARTIAL_WINDOW {
            self.partials.remove(0);
        }
        self.partials.push(s);

        let tol = self.spec.tolerance(s);
        self.last_abs.push(term.abs());
        if self.last_abs.len() > 3 {
            self.last_abs.remove(0);
        }
        if self.terms >= 2 && self.last_abs.iter().rev().take(2).all(|a| *a <= tol) {
            return Ok(Some((s, SeriesMethod::Direct)));
        }

        let n = self.last_abs.len();
        let growing = n >= 2 && self.last_abs[n - 1] > self.last_abs[n - 2] * (1.0 + 1e-9);
        if self.terms >= 3 {
            if growing && self.terms > GROWTH_START {
                self.growth_run += 1;
            } else {
                self.growth_run = 0;
            }
            if self.growth_run >= 8 {
                return Err(Error::Stagnation {
                    value: s,
                    terms: self.terms,
                });
            }
        }

        if growing {
            // acceleration would sum a divergent series; wait for the terms to turn
            self.euler_stable = 0;
            self.eps_stable = 0;
        } else if self.terms >= ACCEL_START {
            if !self.use_epsilon {
                let e = euler_estimate(&self.partials);
                if let Some(prev) = self.euler_prev {
                    let delta = (e - prev).abs();
                    if delta <= 0.1 * self.spec.tolerance(e) {
                        self.euler_stable += 1;
                        if self.euler_stable >= 3 {
                            return Ok(Some((e, SeriesMethod::Euler)));
                        }
                    } else {
                        self.euler_stable = 0;
                    }
                    if delta >= self.euler_delta_prev {
                        self.euler_stall += 1;
                        if self.euler_stall >= 5 {
                            self.use_epsilon = true;
                        }
                    } else {
                        self.euler_stall = 0;
                    }
                    self.euler_delta_prev = delta;
                }
                self.euler_prev = Some(e);
            } else if let Some(e) = wynn_epsilon(&self.partials) {
                if let Some(prev) = self.eps_prev {
                    if (e - prev).abs() <= 0.1 * self.spec.tolerance(e) {
                        self.eps_stable += 1;
                        if self.eps_stable >= 3 {
                            return Ok(Some((e, SeriesMethod::Epsilon)));
                        }
                    } else {
                        self.eps_stable = 0;
                    }
                }
                self.eps_prev = Some(e);
            }
        }

        if self.terms >= self.spec.max_zeros {
            return Err(Error::Stagnation {
                value: self.best_estimate(),
                terms: self.terms,
            });
        }
        Ok(None)
    }

    fn best_estimate(&self) -> f64 {
        if self.use_epsilon {
            self.eps_prev.unwrap_or(self.partial_sum())
        } else {
            self.euler_prev.unwrap_or(self.partial_sum())
        }
    }
}

/// Euler transform of the tail as repeated averaging of the last partial sums.
fn euler_estimate(partials: &[f64]) -> f64 {
    let m = partials.len().min(EULER_DEPTH + 1);
    let mut row: Vec<f64> = partials[partials.len() - m..].to_vec();
    while row.len() > 1 {
        for i in 0..row.len() - 1 {
            row[i] = 0.5 * (row[i] + row[i + 1]);
        }
        row.pop();
    }
    row[0]
}

/// Wynn's ε-algorithm on a sequence of partial sums; returns the highest even column.
fn wynn_epsilon(partials: &[f64]) -> Option<f64> {
    let n = partials.len();
    if n < 3 {
        return None;
    }
    let mut prev: Vec<f64> = vec![0.0; n + 1];
    let mut cur: Vec<f64> = partials.to_vec();
    let mut best = *partials.last()?;
    let mut col = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let d = cur[i + 1] - cur[i];
            if d == 0.0 {
                return Some(best);
            }
            next.push(prev[i + 1] + 1.0 / d);
        }
        prev = cur;
        cur = next;
        col += 1;
        if col % 2 == 0 {
            if let Some(v) = cur.last() {
                if v.is_finite() {
                    best = *v;
                }
            }
        }
    }
    Some(best)
}

/// `∫_0^∞ g(r) cos(ωr) dr` for `g` positive and eventually decreasing to zero.
///
/// Integrates exactly between consecutive zeros `(k + 1/2)π/ω` of the cosine and sums
/// the resulting alternating series, accelerating when the terms decay slowly.
pub fn integrate_oscillatory_cos<G: Fn(f64) -> f64>(g: G, omega: f64, spec: &QuadSpec) -> Result<f64> {
    integrate_oscillatory_cos_traced(g, omega, spec).map(|(v, _, _)| v)
}

/// As [`integrate_oscillatory_cos`], also reporting the panel count and the method.
pub fn integrate_oscillatory_cos_traced<G: Fn(f64) -> f64>(
    g: G,
    omega: f64,
    spec: &QuadSpec,
) -> Result<(f64, usize, SeriesMethod)> {
    spec.validate()?;
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!("omega must be positive and finite, got {omega}")));
    }
    let integrand = |r: f64| g(r) * (omega * r).cos();
    let half = PI / omega;
    // panels need a tighter budget than the total
    let panel_spec = QuadSpec {
        abs_tol: spec.abs_tol * 1e-2,
        rel_tol: (spec.rel_tol * 1e-2).max(200.0 * f64::EPSILON),
        ..*spec
    };
    let mut acc = AlternatingSum::new(*spec);
    let mut a = 0.0;
    let mut k = 0usize;
    loop {
        let b = (k as f64 + 0.5) * half;
        let term = oscillation_panel(&integrand, a, b, &panel_spec)?;
        if let Some((v, method)) = acc.push(term)? {
            return Ok((v, acc.terms(), method));
        }
        a = b;
        k += 1;
    }
}
