//! Special functions and quadrature.
//!
//! Modified Bessel functions are only ever evaluated in exponentially scaled
//! form, `e^{-x} I_n(x)`, since every closed form downstream pairs them with a
//! matching exponential and the arguments reach the thousands. The adaptive
//! integrator is a global-subdivision Gauss-Kronrod (7/15) scheme.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Switch point between the power series and the large-argument expansion.
const SERIES_LIMIT: f64 = 15.0;

/// Tolerances and subdivision budget for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        if !(abs_tol > 0.0 && abs_tol.is_finite()) {
            return Err(Error::domain(format!("abs_tol must be positive, got {abs_tol}")));
        }
        if !(rel_tol > 0.0 && rel_tol.is_finite()) {
            return Err(Error::domain(format!("rel_tol must be positive, got {rel_tol}")));
        }
        if max_subdivisions == 0 {
            return Err(Error::domain("max_subdivisions must be at least 1"));
        }
        Ok(Self {
            abs_tol,
            rel_tol,
            max_subdivisions,
        })
    }

    fn tolerance_for(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_subdivisions: 2000,
        }
    }
}

/// Result of a quadrature: the estimate and its error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

fn check_bessel_arg(x: f64) -> Result<()> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::domain(format!(
            "Bessel argument must be finite and nonnegative, got {x}"
        )));
    }
    Ok(())
}

/// `e^{-x} I₀(x)` for `x ≥ 0`.
pub fn bessel_i0_scaled(x: f64) -> Result<f64> {
    check_bessel_arg(x)?;
    Ok(i0e(x))
}

/// `e^{-x} I₁(x)` for `x ≥ 0`.
pub fn bessel_i1_scaled(x: f64) -> Result<f64> {
    check_bessel_arg(x)?;
    Ok(i1e(x))
}

/// Unchecked `e^{-x} I₀(x)`; callers guarantee `x ≥ 0` and finite.
pub(crate) fn i0e(x: f64) -> f64 {
    if x < SERIES_LIMIT {
        scaled_series(x, 0)
    } else {
        scaled_asymptotic(x, 0)
    }
}

pub(crate) fn i1e(x: f64) -> f64 {
    if x < SERIES_LIMIT {
        scaled_series(x, 1)
    } else {
        scaled_asymptotic(x, 1)
    }
}

/// `1 - e^{-x} I₀(x)` without cancellation at small `x`.
pub(crate) fn one_minus_i0e(x: f64) -> f64 {
    if x > 0.5 {
        return 1.0 - i0e(x);
    }
    // 1 - e^{-x} I0 = (1 - e^{-x}) - e^{-x} (I0 - 1)
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut tail = 0.0;
    for k in 1..40 {
        let kf = k as f64;
        term *= q / (kf * kf);
        tail += term;
        if term < tail * 1e-17 {
            break;
        }
    }
    -(-x).exp_m1() - (-x).exp() * tail
}

/// Power series for `I_n(x)`, `n ∈ {0, 1}`, multiplied by `e^{-x}`.
fn scaled_series(x: f64, order: u32) -> f64 {
    let half = 0.5 * x;
    let q = half * half;
    let mut term = if order == 0 { 1.0 } else { half };
    let mut sum = term;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * (kf + order as f64));
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum * (-x).exp()
}

/// Large-argument expansion `e^{-x} I_n(x) ~ (2πx)^{-1/2} Σ_k (-1)^k a_k(n) / x^k`,
/// summed until the terms stop decreasing.
fn scaled_asymptotic(x: f64, order: u32) -> f64 {
    let mu = 4.0 * (order * order) as f64;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (8.0 * k as f64 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum / (2.0 * PI * x).sqrt()
}

// Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let f_center = f(center);
    let mut kronrod = f_center * WGK[7];
    let mut gauss = f_center * WG[3];
    let mut abs_sum = kronrod.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * half;
    let res_abs = abs_sum * half.abs();
    let res_asc = asc * half.abs();
    let mut err = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

#[derive(Debug)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive quadrature of `f` over `[lo, hi]`.
///
/// The interval with the largest error estimate is bisected until the summed
/// error meets `max(abs_tol, rel_tol·|value|)`. Running out of subdivisions (or
/// bisecting below floating-point resolution) yields [`Error::Convergence`]
/// carrying the best estimate.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, spec: &QuadratureSpec) -> Result<Integral> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::domain(format!("integration bounds must be finite, got [{lo}, {hi}]")));
    }
    if lo > hi {
        return Err(Error::domain(format!("lower bound {lo} exceeds upper bound {hi}")));
    }
    if lo == hi {
        return Ok(Integral { value: 0.0, error: 0.0 });
    }
    let (value, error) = gk15(&f, lo, hi);
    if !value.is_finite() {
        return Err(Error::Convergence {
            estimate: value,
            error: f64::INFINITY,
        });
    }
    let mut total = value;
    let mut total_err = error;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { lo, hi, value, error });
    let mut splits = 1;
    while total_err > spec.tolerance_for(total) {
        if splits >= spec.max_subdivisions {
            return Err(Error::Convergence {
                estimate: total,
                error: total_err,
            });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            return Err(Error::Convergence {
                estimate: total,
                error: total_err,
            });
        }
        let (v1, e1) = gk15(&f, worst.lo, mid);
        let (v2, e2) = gk15(&f, mid, worst.hi);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment { lo: worst.lo, hi: mid, value: v1, error: e1 });
        heap.push(Segment { lo: mid, hi: worst.hi, value: v2, error: e2 });
        splits += 1;
    }
    // Re-sum from the leaves to shed drift from the running updates.
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    Ok(Integral { value, error })
}

/// Integral over `[lo, ∞)` through the map `t = lo + u/(1-u)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, lo: f64, spec: &QuadratureSpec) -> Result<Integral> {
    let mapped = |u: f64| {
        let w = 1.0 - u;
        let v = f(lo + u / w) / (w * w);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(mapped, 0.0, 1.0, spec)
}

/// Integral over `[lo, hi]` split at the given interior points.
///
/// Points outside `(lo, hi)` are ignored; each piece is integrated adaptively
/// with the full tolerance and the errors add up.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    spec: &QuadratureSpec,
) -> Result<Integral> {
    let mut edges: Vec<f64> = std::iter::once(lo)
        .chain(breaks.iter().copied().filter(|&b| b > lo && b < hi))
        .chain(std::iter::once(hi))
        .collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let mut out = Integral { value: 0.0, error: 0.0 };
    for pair in edges.windows(2) {
        let piece = integrate(&f, pair[0], pair[1], spec)?;
        out.value += piece.value;
        out.error += piece.error;
    }
    Ok(out)
}

fn check_weber_args(x: f64, z: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::domain(format!("Weber integral needs x > 0, got {x}")));
    }
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::domain(format!("Weber integral needs z >= 0, got {z}")));
    }
    Ok(())
}

/// `e^{-2x} Q̃₀(x, z)`, the overflow-free form of the incomplete Weber integral.
///
/// With `Q̃₀(x,z) = (2x)⁻¹ eˣ ∫₀ᶻ t e^{-t²/4x} I₀(t) dt` the integrand folds into
/// `(t/2x) exp(-(t-2x)²/4x) · e^{-t}I₀(t)`, a bounded bump centred at `t = 2x`.
pub fn incomplete_weber_q0_scaled(x: f64, z: f64, spec: &QuadratureSpec) -> Result<f64> {
    check_weber_args(x, z)?;
    if z == 0.0 {
        return Ok(0.0);
    }
    let centre = 2.0 * x;
    let width = (2.0 * x).sqrt();
    let breaks: Vec<f64> = [-8.0, -4.0, -1.0, 0.0, 1.0, 4.0, 8.0]
        .iter()
        .map(|k| centre + k * width)
        .collect();
    let integrand = |t: f64| {
        let g = (t - centre) / (2.0 * x.sqrt());
        t / (2.0 * x) * (-g * g).exp() * i0e(t)
    };
    let value = integrate_with_breaks(integrand, 0.0, z, &breaks, spec)?.value;
    Ok(value.max(0.0))
}

/// The incomplete Weber integral `Q̃₀(x, z)` itself; overflows to `+∞` once
/// `e^{2x}` leaves the double range.
pub fn incomplete_weber_q0(x: f64, z: f64, spec: &QuadratureSpec) -> Result<f64> {
    let scaled = incomplete_weber_q0_scaled(x, z, spec)?;
    if scaled == 0.0 {
        return Ok(0.0);
    }
    Ok(scaled * (2.0 * x).exp())
}
