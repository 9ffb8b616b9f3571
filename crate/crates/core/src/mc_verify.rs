//! Monte Carlo cross-checks of the analytic distribution results.
//!
//! Every report compares an analytic value with a sample mean and its
//! standard error, both estimated from the same draws. Samples come in fixed
//! chunks, one generator stream each, and the per-chunk statistics are merged
//! in a fixed pairwise tree, so reports are bit-identical for any thread count.

use std::fmt;

use rayon::prelude::*;

use crate::aperture::transmission_exact;
use crate::channel::TransmissionLaw;
use crate::error::{Error, Result};
use crate::pdtc::{ExceedanceMethod, Pdtc, SAMPLE_CHUNK};
use crate::specfun::QuadratureSpec;
use crate::squeezing::postselect;

/// Smallest sample size accepted by the verifiers.
pub const MIN_SAMPLES: usize = 10_000;

/// Conditional checks with fewer survivors than this are inconclusive.
pub const MIN_SURVIVORS: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Settings shared by all verifiers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub z_threshold: f64,
    /// Draw `T` from the exact aperture integral instead of the fitted law.
    pub use_exact_t: bool,
    pub spec: QuadratureSpec,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            z_threshold: 3.0,
            use_exact_t: false,
            spec: QuadratureSpec::default(),
        }
    }
}

/// Analytic value against its Monte Carlo estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub quantity_name: String,
    pub analytic: f64,
    pub empirical: f64,
    pub std_error: f64,
    /// Draws that entered the mean (the survivors, for conditional checks).
    pub n_samples: u64,
    pub z_score: f64,
    pub verdict: Verdict,
}

impl McReport {
    pub fn pass(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    fn judge(name: String, analytic: f64, stats: Summary, z_threshold: f64) -> Self {
        let std_error = stats.std_error();
        let diff = stats.mean - analytic;
        let z_score = if std_error > 0.0 {
            diff / std_error
        } else if diff.abs() <= 1e-12 * analytic.abs().max(1e-300) {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        let verdict = if z_score.abs() <= z_threshold { Verdict::Pass } else { Verdict::Fail };
        Self {
            quantity_name: name,
            analytic,
            empirical: stats.mean,
            std_error,
            n_samples: stats.count,
            z_score,
            verdict,
        }
    }

    fn inconclusive(name: String, analytic: f64, stats: Summary) -> Self {
        Self {
            quantity_name: name,
            analytic,
            empirical: stats.mean,
            std_error: stats.std_error(),
            n_samples: stats.count,
            z_score: f64::NAN,
            verdict: Verdict::Inconclusive,
        }
    }
}

/// Count, mean and sum of squared deviations of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Summary {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Summary {
    const EMPTY: Summary = Summary {
        count: 0,
        mean: 0.0,
        m2: 0.0,
    };

    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Summary) -> Summary {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let weight = other.count as f64 / count as f64;
        Summary {
            count,
            mean: self.mean + delta * weight,
            m2: self.m2 + other.m2 + delta * delta * self.count as f64 * weight,
        }
    }

    fn std_error(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n = self.count as f64;
        (self.m2 / (n - 1.0) / n).sqrt()
    }
}

fn tree_reduce(parts: &[Summary]) -> Summary {
    match parts.len() {
        0 => Summary::EMPTY,
        1 => parts[0],
        len => tree_reduce(&parts[..len / 2]).merge(tree_reduce(&parts[len / 2..])),
    }
}

/// Summary of `f(T)` over `n` draws, skipping draws where `f` returns `None`.
fn sample_summary<F>(p: &Pdtc, n: usize, seed: u64, config: &McConfig, f: F) -> Result<Summary>
where
    F: Fn(f64) -> Option<f64> + Sync,
{
    let chunks = n.div_ceil(SAMPLE_CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
            let mut s = Summary::EMPTY;
            for r in p.sample_radii(seed, c as u64, len) {
                let t = if config.use_exact_t {
                    transmission_exact(r, p.geometry(), &config.spec)?.t_sq.sqrt()
                } else {
                    p.t_of_r(r)
                };
                if let Some(x) = f(t) {
                    s.push(x);
                }
            }
            Ok(s)
        })
        .collect::<Result<Vec<Summary>>>()?;
    Ok(tree_reduce(&parts))
}

fn check_n(n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::domain(format!("need at least {MIN_SAMPLES} samples, got {n}")));
    }
    Ok(())
}

/// `⟨T^k⟩` against the sample mean of `T^k`.
pub fn verify_moment(k: u32, p: &Pdtc, n: usize, seed: u64, config: &McConfig) -> Result<McReport> {
    check_n(n)?;
    let analytic = p.moment(k, &config.spec)?;
    let stats = sample_summary(p, n, seed, config, |t| Some(t.powi(k as i32)))?;
    Ok(McReport::judge(format!("moment[k={k}]"), analytic, stats, config.z_threshold))
}

/// Exceedance at `t` against the fraction of draws with `T > t`.
pub fn verify_exceedance(t: f64, p: &Pdtc, n: usize, seed: u64, config: &McConfig) -> Result<McReport> {
    check_n(n)?;
    let analytic = p.exceedance(t, ExceedanceMethod::Exact, &config.spec)?;
    let stats = sample_summary(p, n, seed, config, |x| Some(if t <= 0.0 || x > t { 1.0 } else { 0.0 }))?;
    Ok(McReport::judge(format!("exceedance[T={t:.6e}]"), analytic, stats, config.z_threshold))
}

/// Post-selected `⟨T^k⟩` against the mean of `T^k` over draws with `T > t_min`.
pub fn verify_postselection(t_min: f64, k: u32, p: &Pdtc, n: usize, seed: u64, config: &McConfig) -> Result<McReport> {
    check_n(n)?;
    let name = format!("postselected_moment[k={k};t_min={t_min:.6e}]");
    let stats = sample_summary(p, n, seed, config, |x| (t_min <= 0.0 || x > t_min).then(|| x.powi(k as i32)))?;
    let analytic = match postselect(p, t_min, &config.spec) {
        Ok(selected) => selected.t_moment(k, &config.spec)?,
        Err(Error::InfeasiblePostSelection { .. }) => return Ok(McReport::inconclusive(name, f64::NAN, stats)),
        Err(e) => return Err(e),
    };
    if stats.count < MIN_SURVIVORS {
        return Ok(McReport::inconclusive(name, analytic, stats));
    }
    Ok(McReport::judge(name, analytic, stats, config.z_threshold))
}

/// Moments `k = 1, 2, 4`, exceedance at five thresholds and post-selected
/// `⟨T²⟩` at three thresholds, thresholds given as fractions of `T₀`.
pub fn verify_suite(p: &Pdtc, n: usize, seed: u64, config: &McConfig) -> Result<Vec<McReport>> {
    let t0 = p.t0();
    let mut out = Vec::new();
    for k in [1, 2, 4] {
        out.push(verify_moment(k, p, n, seed, config)?);
    }
    for f in [0.1, 0.3, 0.5, 0.7, 0.9] {
        out.push(verify_exceedance(f * t0, p, n, seed, config)?);
    }
    for f in [0.2, 0.5, 0.8] {
        out.push(verify_postselection(f * t0, 2, p, n, seed, config)?);
    }
    Ok(out)
}
