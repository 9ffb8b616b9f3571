//! Distribution of the transmission coefficient under beam wandering.
//!
//! The beam centre is a 2-D Gaussian of per-axis deviation `σ` around a point
//! at distance `d` from the aperture centre, so the deflection `r` is Rice
//! distributed. Pushing that through the analytic law `T(r)` gives a
//! log-negative generalized Rice distribution on `[0, T₀]`, which for `d = 0`
//! collapses to a log-negative Weibull. Expectations are integrated against
//! the Rice density in `r`, where nothing is singular.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::aperture::{fit_approx_model, r_of_t, transmission_approx, transmission_exact, ApertureBeam, ApproxModel};
use crate::error::{Error, Result};
use crate::specfun::{i0e, i1e, incomplete_weber_q0_scaled, integrate_with_breaks, one_minus_i0e, QuadratureSpec};

/// Rice integrals stop at `d + TRUNCATION_SIGMAS·σ`; the mass beyond is below `e^{-50}`.
pub const TRUNCATION_SIGMAS: f64 = 10.0;

/// Samples drawn from one generator stream.
pub const SAMPLE_CHUNK: usize = 1 << 16;

/// Deflection statistics of the beam centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WanderStats {
    sigma: f64,
    d: f64,
}

impl WanderStats {
    pub fn new(sigma: f64, d: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!("sigma must be finite and nonnegative, got {sigma}")));
        }
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::domain(format!("offset d must be finite and nonnegative, got {d}")));
        }
        Ok(Self { sigma, d })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    /// Rice density of the deflection distance.
    pub fn rice_pdf(&self, r: f64) -> f64 {
        if r < 0.0 || self.sigma == 0.0 {
            return 0.0;
        }
        let s2 = self.sigma * self.sigma;
        let g = r - self.d;
        r / s2 * i0e(r * self.d / s2) * (-0.5 * g * g / s2).exp()
    }
}

/// How [`Pdtc::exceedance`] is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExceedanceMethod {
    /// Incomplete Weber integral; falls back to the closed form for `d = 0`.
    Exact,
    /// Weibull-type interpolation in `d` with fitted `F₀`, `D`, `μ`.
    Approx,
    /// `1 - exp(-r(T)²/2σ²)`, valid only for `d = 0`.
    ClosedD0,
}

/// Weibull parameters of the log-loss `θ - θ₀` for a centred wander.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLossWeibull {
    /// `2/λ`.
    pub shape: f64,
    /// `(√2 σ/R)^λ`.
    pub scale: f64,
}

/// The transmission-coefficient distribution for one geometry and wander.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pdtc {
    geometry: ApertureBeam,
    model: ApproxModel,
    wander: WanderStats,
}

impl Pdtc {
    pub fn new(geometry: ApertureBeam, wander: WanderStats) -> Result<Self> {
        let model = fit_approx_model(&geometry)?;
        Ok(Self {
            geometry,
            model,
            wander,
        })
    }

    /// Lengths in units of the aperture radius.
    pub fn normalized(w_over_a: f64, sigma_over_a: f64, d_over_a: f64) -> Result<Self> {
        Self::new(ApertureBeam::normalized(w_over_a)?, WanderStats::new(sigma_over_a, d_over_a)?)
    }

    pub fn geometry(&self) -> &ApertureBeam {
        &self.geometry
    }

    pub fn model(&self) -> &ApproxModel {
        &self.model
    }

    pub fn wander(&self) -> &WanderStats {
        &self.wander
    }

    pub fn t0(&self) -> f64 {
        self.model.t0()
    }

    /// `T(r)` under the analytic law.
    pub fn t_of_r(&self, r: f64) -> f64 {
        transmission_approx(r, &self.model).sqrt()
    }

    /// Largest deflection that enters Rice integrals.
    pub fn r_cutoff(&self) -> f64 {
        self.wander.d + TRUNCATION_SIGMAS * self.wander.sigma
    }

    fn breakpoints(&self, hi: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut scale = self.model.scale_r / 8.0;
        while scale < hi {
            out.push(scale);
            scale *= 2.0;
        }
        let (sigma, d) = (self.wander.sigma, self.wander.d);
        for k in -10..=10 {
            out.push(d + f64::from(k) * sigma);
        }
        out.extend([0.125, 0.25, 0.5].iter().map(|k| d + k * sigma));
        out.retain(|&b| b > 0.0 && b < hi);
        out
    }

    /// `∫₀^{r_hi} p_rice(r) g(r) dr`, with `r_hi` clipped at the truncation radius.
    pub fn expect_in_r<G: Fn(f64) -> f64>(&self, g: G, r_hi: f64, spec: &QuadratureSpec) -> Result<f64> {
        if self.wander.sigma == 0.0 {
            return Ok(if self.wander.d <= r_hi { g(self.wander.d) } else { 0.0 });
        }
        let hi = r_hi.min(self.r_cutoff());
        if hi <= 0.0 {
            return Ok(0.0);
        }
        let integrand = |r: f64| {
            let w = self.wander.rice_pdf(r);
            if w == 0.0 {
                0.0
            } else {
                w * g(r)
            }
        };
        Ok(integrate_with_breaks(integrand, 0.0, hi, &self.breakpoints(hi), spec)?.value)
    }

    /// `⟨f(T)⟩` over the full distribution.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F, spec: &QuadratureSpec) -> Result<f64> {
        self.expect_in_r(|r| f(self.t_of_r(r)), f64::INFINITY, spec)
    }

    /// Total probability in the r-measure.
    pub fn normalization(&self, spec: &QuadratureSpec) -> Result<f64> {
        self.expect_in_r(|_| 1.0, f64::INFINITY, spec)
    }

    /// `⟨T^k⟩`.
    pub fn moment(&self, k: u32, spec: &QuadratureSpec) -> Result<f64> {
        if k == 0 {
            return Err(Error::domain("moment order must be at least 1"));
        }
        let half = 0.5 * f64::from(k);
        let lead = self.model.t0_sq.powf(half);
        let (scale, shape) = (self.model.scale_r, self.model.shape_lambda);
        self.expect_in_r(|r| lead * (-half * (r / scale).powf(shape)).exp(), f64::INFINITY, spec)
    }

    /// `⟨ΔT²⟩ = ⟨T²⟩ - ⟨T⟩²`.
    pub fn variance_t(&self, spec: &QuadratureSpec) -> Result<f64> {
        if self.wander.sigma == 0.0 {
            return Ok(0.0);
        }
        let m1 = self.moment(1, spec)?;
        Ok((self.moment(2, spec)? - m1 * m1).max(0.0))
    }

    /// `⟨Δη²⟩ = ⟨T⁴⟩ - ⟨T²⟩²`.
    pub fn variance_eta(&self, spec: &QuadratureSpec) -> Result<f64> {
        if self.wander.sigma == 0.0 {
            return Ok(0.0);
        }
        let m2 = self.moment(2, spec)?;
        Ok((self.moment(4, spec)? - m2 * m2).max(0.0))
    }

    /// Density of `T`; zero outside `(0, T₀)` and for the deterministic channel.
    pub fn pdf(&self, t: f64) -> f64 {
        if !(t > 0.0 && t < self.t0()) || self.wander.sigma == 0.0 {
            return 0.0;
        }
        if self.wander.d == 0.0 {
            self.weibull_pdf(t)
        } else {
            self.rice_form_pdf(t)
        }
    }

    fn log_loss_excess(&self, t: f64) -> f64 {
        (self.model.t0_sq.ln() - 2.0 * t.ln()).max(0.0)
    }

    fn rice_form_pdf(&self, t: f64) -> f64 {
        let (scale, shape) = (self.model.scale_r, self.model.shape_lambda);
        let s2 = self.wander.sigma * self.wander.sigma;
        let d = self.wander.d;
        let u = self.log_loss_excess(t);
        let r = scale * u.powf(1.0 / shape);
        let g = r - d;
        2.0 * scale * scale / (s2 * shape * t)
            * u.powf(2.0 / shape - 1.0)
            * i0e(r * d / s2)
            * (-0.5 * g * g / s2).exp()
    }

    fn weibull_pdf(&self, t: f64) -> f64 {
        let (scale, shape) = (self.model.scale_r, self.model.shape_lambda);
        let s2 = self.wander.sigma * self.wander.sigma;
        let u = self.log_loss_excess(t);
        let v = u.powf(2.0 / shape);
        2.0 * scale * scale / (s2 * shape * t) * v / u * (-0.5 * scale * scale * v / s2).exp()
    }

    /// Density of the log-loss `θ = -ln T²`; zero below `θ₀ = -ln T₀²`.
    pub fn log_loss_pdf(&self, theta: f64) -> f64 {
        let theta0 = -self.model.t0_sq.ln();
        if !(theta >= theta0) || !theta.is_finite() || self.wander.sigma == 0.0 {
            return 0.0;
        }
        let (scale, shape) = (self.model.scale_r, self.model.shape_lambda);
        let s2 = self.wander.sigma * self.wander.sigma;
        let d = self.wander.d;
        let u = theta - theta0;
        let r = scale * u.powf(1.0 / shape);
        let g = r - d;
        scale * scale / (s2 * shape) * u.powf(2.0 / shape - 1.0) * i0e(r * d / s2) * (-0.5 * g * g / s2).exp()
    }

    /// Weibull shape and scale of `θ - θ₀` when `d = 0`.
    pub fn log_loss_weibull(&self) -> Result<LogLossWeibull> {
        if self.wander.d != 0.0 {
            return Err(Error::NotSupported("the log-loss is Weibull only for d = 0".into()));
        }
        if self.wander.sigma == 0.0 {
            return Err(Error::domain("the deterministic channel has no log-loss distribution"));
        }
        let shape_lambda = self.model.shape_lambda;
        Ok(LogLossWeibull {
            shape: 2.0 / shape_lambda,
            scale: (std::f64::consts::SQRT_2 * self.wander.sigma / self.model.scale_r).powf(shape_lambda),
        })
    }

    /// `P(T > t)`.
    pub fn exceedance(&self, t: f64, method: ExceedanceMethod, spec: &QuadratureSpec) -> Result<f64> {
        if method == ExceedanceMethod::ClosedD0 && self.wander.d != 0.0 {
            return Err(Error::NotSupported(format!(
                "closed-form exceedance needs d = 0, got d = {}",
                self.wander.d
            )));
        }
        if t.is_nan() {
            return Err(Error::domain("transmission coefficient is NaN"));
        }
        if t <= 0.0 {
            return Ok(1.0);
        }
        if t >= self.t0() {
            return Ok(0.0);
        }
        let r = r_of_t(t, &self.model)?;
        let (sigma, d) = (self.wander.sigma, self.wander.d);
        if sigma == 0.0 {
            return Ok(if d < r { 1.0 } else { 0.0 });
        }
        let s2 = sigma * sigma;
        let centred = -(-0.5 * r * r / s2).exp_m1();
        if d == 0.0 {
            return Ok(centred);
        }
        let value = match method {
            ExceedanceMethod::Exact | ExceedanceMethod::ClosedD0 => {
                let fine = QuadratureSpec {
                    abs_tol: spec.abs_tol.min(1e-14),
                    ..*spec
                };
                incomplete_weber_q0_scaled(0.5 * d * d / s2, r * d / s2, &fine)?
            }
            ExceedanceMethod::Approx => approx_exceedance(r, d, sigma),
        };
        Ok(value.clamp(0.0, 1.0))
    }

    /// Cumulative distribution `P(T ≤ t)`.
    pub fn cdf(&self, t: f64, method: ExceedanceMethod, spec: &QuadratureSpec) -> Result<f64> {
        Ok(1.0 - self.exceedance(t, method, spec)?)
    }

    /// `n` transmission coefficients drawn from the wander model.
    ///
    /// Chunk `c` of [`SAMPLE_CHUNK`] draws uses stream `c` of a ChaCha8 generator
    /// seeded with `seed`, so the output does not depend on the thread count.
    pub fn sample(&self, n: usize, seed: u64, use_exact_t: bool, spec: &QuadratureSpec) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::domain("sample count must be at least 1"));
        }
        let chunks: Vec<Result<Vec<f64>>> = (0..n.div_ceil(SAMPLE_CHUNK))
            .into_par_iter()
            .map(|c| {
                let len = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
                let radii = self.sample_radii(seed, c as u64, len);
                if use_exact_t {
                    radii
                        .into_iter()
                        .map(|r| Ok(transmission_exact(r, &self.geometry, spec)?.t_sq.sqrt()))
                        .collect()
                } else {
                    Ok(radii.into_iter().map(|r| self.t_of_r(r)).collect())
                }
            })
            .collect();
        let mut out = Vec::with_capacity(n);
        for chunk in chunks {
            out.extend(chunk?);
        }
        Ok(out)
    }

    /// Beam-centre distances for one generator stream.
    pub fn sample_radii(&self, seed: u64, stream: u64, len: usize) -> Vec<f64> {
        let mut rng = stream_rng(seed, stream);
        let (sigma, d) = (self.wander.sigma, self.wander.d);
        (0..len)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                let y: f64 = StandardNormal.sample(&mut rng);
                (d + sigma * x).hypot(sigma * y)
            })
            .collect()
    }
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `F₀ exp[-(d/D)^μ]` with `F₀`, `D`, `μ` fixed by the `d = 0` value and the
/// value and slope at `d = r`.
fn approx_exceedance(r: f64, d: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let y = r * r / s2;
    let f0 = -(-0.5 * y).exp_m1();
    if y < 1e-7 {
        return f0 * (-0.5 * d * d / s2).exp();
    }
    let clipped = one_minus_i0e(y);
    let log_ratio = ((2.0 * f0 - clipped) / clipped).ln_1p();
    let mu = 2.0 * y * i1e(y) / clipped / log_ratio;
    // (d/D)^μ with D = r·L^{-1/μ}
    f0 * (-log_ratio * (d / r).powf(mu)).exp()
}

/// Beam-wander deviation from pointing jitter: `σ_θ z`.
pub fn sigma_from_pointing(sigma_theta: f64, z: f64) -> Result<f64> {
    if !(sigma_theta >= 0.0 && sigma_theta.is_finite()) {
        return Err(Error::domain(format!("angular jitter must be nonnegative, got {sigma_theta}")));
    }
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::domain(format!("propagation distance must be nonnegative, got {z}")));
    }
    Ok(sigma_theta * z)
}

/// Weak-turbulence beam wander: `sqrt(1.919 C²ₙ z³ (2W₀)^{-1/3})`.
pub fn sigma_from_turbulence(cn2: f64, z: f64, w0: f64) -> Result<f64> {
    if !(cn2 >= 0.0 && cn2.is_finite()) {
        return Err(Error::domain(format!("C_n^2 must be nonnegative, got {cn2}")));
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::domain(format!("propagation distance must be positive, got {z}")));
    }
    if !(w0 > 0.0 && w0.is_finite()) {
        return Err(Error::domain(format!("beam waist must be positive, got {w0}")));
    }
    Ok((1.919 * cn2 * z.powi(3) * (2.0 * w0).powf(-1.0 / 3.0)).sqrt())
}

/// Independent wander sources add in variance.
pub fn combined_sigma(first: f64, second: f64) -> f64 {
    first.hypot(second)
}
