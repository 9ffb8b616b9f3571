//! CHSH test with a parametric down-conversion source sent through the
//! channel to two polarization analysers with on/off detectors.
//!
//! Closed-form coincidence probabilities are averaged over the channel's
//! transmission law; [`FockOracle`] evaluates the same quantities by explicit
//! photon-number summation for a fixed transmission.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::channel::TransmissionLaw;
use crate::error::{Error, Result};
use crate::specfun::QuadratureSpec;

/// Receiver efficiency of the single-telescope setup, 9 dB including the 50% splitter.
pub const ETA_RECEIVER: f64 = 0.125;
/// Stray-light and dark counts per window used for the Bell-parameter curve.
pub const NOISE_CURVE: f64 = 1e-5;
/// Measured noise level of the free-space experiment.
pub const NOISE_EXPERIMENT: f64 = 5e-7;

/// Output port of a polarizing beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Port {
    Transmitted,
    Reflected,
}

/// Which detector clicks on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClickChannelPair {
    pub side_a: Port,
    pub side_b: Port,
}

impl ClickChannelPair {
    pub const ALL: [ClickChannelPair; 4] = [
        ClickChannelPair::new(Port::Transmitted, Port::Transmitted),
        ClickChannelPair::new(Port::Reflected, Port::Reflected),
        ClickChannelPair::new(Port::Transmitted, Port::Reflected),
        ClickChannelPair::new(Port::Reflected, Port::Transmitted),
    ];

    pub const fn new(side_a: Port, side_b: Port) -> Self {
        Self { side_a, side_b }
    }

    pub fn is_same(&self) -> bool {
        self.side_a == self.side_b
    }
}

/// Analyser angles `(θA1, θB1, θA2, θB2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellAngles {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

impl Default for BellAngles {
    /// The maximally violating choice `(0, π/8, π/4, 3π/8)`.
    fn default() -> Self {
        Self {
            a1: 0.0,
            b1: PI / 8.0,
            a2: PI / 4.0,
            b2: 3.0 * PI / 8.0,
        }
    }
}

/// Source squeezing, receiver efficiency and noise of the Bell experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdcBellSetup {
    chi: f64,
    eta: f64,
    noise_n: f64,
    pub angles: BellAngles,
}

impl PdcBellSetup {
    pub fn new(chi: f64, eta: f64, noise_n: f64) -> Result<Self> {
        if !(chi >= 0.0 && chi.is_finite()) {
            return Err(Error::domain(format!("chi must be finite and nonnegative, got {chi}")));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::domain(format!("eta must lie in (0, 1], got {eta}")));
        }
        if !(noise_n >= 0.0 && noise_n.is_finite()) {
            return Err(Error::domain(format!("noise N must be finite and nonnegative, got {noise_n}")));
        }
        Ok(Self {
            chi,
            eta,
            noise_n,
            angles: BellAngles::default(),
        })
    }

    /// `η = 0.125`, `N = 10⁻⁵`.
    pub fn curve_preset(chi: f64) -> Result<Self> {
        Self::new(chi, ETA_RECEIVER, NOISE_CURVE)
    }

    /// `η = 0.125`, `N = 5·10⁻⁷`.
    pub fn experiment_preset(chi: f64) -> Result<Self> {
        Self::new(chi, ETA_RECEIVER, NOISE_EXPERIMENT)
    }

    pub fn with_angles(mut self, angles: BellAngles) -> Self {
        self.angles = angles;
        self
    }

    pub fn with_chi(self, chi: f64) -> Result<Self> {
        Ok(Self::new(chi, self.eta, self.noise_n)?.with_angles(self.angles))
    }

    pub fn chi(&self) -> f64 {
        self.chi
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn noise_n(&self) -> f64 {
        self.noise_n
    }
}

/// The coefficients `C₀`, `C₁`, `C_same`, `C_different` at fixed `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CCoeffs {
    pub c0: f64,
    pub c1: f64,
    pub c_same: f64,
    pub c_diff: f64,
}

pub fn c_coeffs(t: f64, setup: &PdcBellSetup, dtheta: f64) -> CCoeffs {
    let l2 = setup.chi.tanh().powi(2);
    let tau = setup.eta * t * t;
    let inner = tau * tau * l2 - (1.0 + (tau - 1.0) * l2).powi(2);
    let common = tau * tau * l2 * (1.0 - l2).powi(2);
    let residual = (1.0 - tau).powi(2) * l2;
    CCoeffs {
        c0: inner * inner,
        c1: tau * (1.0 - tau) * (1.0 - l2) * l2 * inner,
        c_same: common * (residual - dtheta.sin().powi(2)),
        c_diff: common * (residual - dtheta.cos().powi(2)),
    }
}

/// Coincidence probability at fixed transmission `t`.
///
/// `(1-tanh²χ)⁴ [e^{-2N}/(C₀+2C₁+C_p) - 2e^{-3N}/(C₀+C₁) + e^{-4N}/C₀]`,
/// regrouped so that the near-cancelling terms are formed in closed form.
pub fn click_probability_at(pair: ClickChannelPair, theta_a: f64, theta_b: f64, setup: &PdcBellSetup, t: f64) -> f64 {
    let c = c_coeffs(t, setup, theta_a - theta_b);
    let cp = if pair.is_same() { c.c_same } else { c.c_diff };
    let n = setup.noise_n;
    let a = c.c0 + 2.0 * c.c1 + cp;
    let b = c.c0 + c.c1;
    let em1 = (-n).exp_m1();
    let em2 = (-2.0 * n).exp_m1();
    let bracket = em1 * em1 / b + em2 * c.c1 / (b * c.c0) + (2.0 * c.c1 * c.c1 + cp * (c.c1 - c.c0)) / (c.c0 * a * b);
    let scale = (1.0 - setup.chi.tanh().powi(2)).powi(4);
    (scale * (-2.0 * n).exp() * bracket).clamp(0.0, 1.0)
}

/// Relative-accuracy version of `spec` for averages of probabilities near `N²`.
fn probability_spec(spec: &QuadratureSpec) -> QuadratureSpec {
    QuadratureSpec {
        abs_tol: spec.abs_tol.min(1e-300),
        ..*spec
    }
}

/// Coincidence probability averaged over the channel.
pub fn click_probability(
    pair: ClickChannelPair,
    theta_a: f64,
    theta_b: f64,
    setup: &PdcBellSetup,
    channel: &dyn TransmissionLaw,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let p = channel.average(&|t| click_probability_at(pair, theta_a, theta_b, setup, t), &probability_spec(spec))?;
    Ok(p.clamp(0.0, 1.0))
}

/// `E = (P_same - P_diff)/(P_same + P_diff)`.
pub fn correlation(
    theta_a: f64,
    theta_b: f64,
    setup: &PdcBellSetup,
    channel: &dyn TransmissionLaw,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let spec = probability_spec(spec);
    let sums = |t: f64| {
        ClickChannelPair::ALL.iter().fold((0.0, 0.0), |(same, diff), pair| {
            let p = click_probability_at(*pair, theta_a, theta_b, setup, t);
            if pair.is_same() {
                (same + p, diff)
            } else {
                (same, diff + p)
            }
        })
    };
    let same = channel.average(&|t| sums(t).0, &spec)?;
    let diff = channel.average(&|t| sums(t).1, &spec)?;
    let total = same + diff;
    if !(total > 0.0) {
        return Err(Error::UndefinedCorrelation { theta_a, theta_b });
    }
    Ok(((same - diff) / total).clamp(-1.0, 1.0))
}

/// `B = |E(a1,b1) - E(a1,b2)| + |E(a2,b2) + E(a2,b1)|`.
pub fn bell_parameter(setup: &PdcBellSetup, channel: &dyn TransmissionLaw, spec: &QuadratureSpec) -> Result<f64> {
    let g = setup.angles;
    let e = |a: f64, b: f64| correlation(a, b, setup, channel, spec);
    Ok((e(g.a1, g.b1)? - e(g.a1, g.b2)?).abs() + (e(g.a2, g.b2)? + e(g.a2, g.b1)?).abs())
}

/// `(χ, B)` along `chi_grid`, in grid order.
pub fn bell_scan(
    template: &PdcBellSetup,
    channel: &dyn TransmissionLaw,
    chi_grid: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<(f64, f64)>> {
    if chi_grid.is_empty() {
        return Err(Error::domain("chi grid is empty"));
    }
    if chi_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("chi grid must be strictly increasing"));
    }
    chi_grid
        .par_iter()
        .map(|&chi| {
            let setup = template.with_chi(chi)?;
            if chi == 0.0 {
                return Ok((chi, 0.0));
            }
            Ok((chi, bell_parameter(&setup, channel, spec)?))
        })
        .collect()
}

/// One photon-number configuration of the four detectors.
#[derive(Debug, Clone, Copy)]
struct OracleTerm {
    weight: f64,
    clicks: [u32; 2],
    idle: [u32; 2],
}

/// Fock-space evaluation of a coincidence probability at fixed transmission.
///
/// The source state `Σₙ cₙ |ψₙ⟩` is truncated at `nmax` pairs; each `|ψₙ⟩` is
/// rotated into the analyser bases and the on/off detector POVM is applied to
/// the resulting photon counts. Losses and noise enter only at evaluation time
/// through `τ = ηT²` and `N`, so one oracle serves any transmission.
#[derive(Debug, Clone)]
pub struct FockOracle {
    terms: Vec<OracleTerm>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// `|p⟩_H |q⟩_V` in the basis rotated by `theta`, as amplitudes over the
/// transmitted photon number (the rest is reflected).
fn rotate(p: usize, q: usize, theta: f64) -> Vec<f64> {
    let (c, s) = (theta.cos(), theta.sin());
    let mut out = vec![0.0; p + q + 1];
    for i in 0..=p {
        for j in 0..=q {
            let coeff = binomial(p, i) * c.powi(i as i32) * (-s).powi((p - i) as i32)
                * binomial(q, j)
                * s.powi(j as i32)
                * c.powi((q - j) as i32);
            let transmitted = i + j;
            let reflected = p + q - transmitted;
            out[transmitted] += coeff * (factorial(transmitted) * factorial(reflected) / (factorial(p) * factorial(q))).sqrt();
        }
    }
    out
}

impl FockOracle {
    pub fn new(pair: ClickChannelPair, theta_a: f64, theta_b: f64, chi: f64, nmax: usize) -> Result<Self> {
        if nmax < 4 {
            return Err(Error::domain(format!("nmax must be at least 4, got {nmax}")));
        }
        if !(chi >= 0.0 && chi.is_finite()) {
            return Err(Error::domain(format!("chi must be finite and nonnegative, got {chi}")));
        }
        let l2 = chi.tanh().powi(2);
        let pair_weight = |n: usize| (1.0 - l2).powi(2) * (n + 1) as f64 * l2.powi(n as i32);
        let norm: f64 = (0..=nmax).map(pair_weight).sum();
        if norm < 1.0 - 1e-10 {
            return Err(Error::Truncation { nmax, norm });
        }
        let mut terms = Vec::new();
        for n in 0..=nmax {
            let cn2 = pair_weight(n);
            if cn2 == 0.0 {
                continue;
            }
            let mut psi = vec![0.0; (n + 1) * (n + 1)];
            for m in 0..=n {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 } / ((n + 1) as f64).sqrt();
                let side_a = rotate(n - m, m, theta_a);
                let side_b = rotate(m, n - m, theta_b);
                for (pa, va) in side_a.iter().enumerate() {
                    for (pb, vb) in side_b.iter().enumerate() {
                        psi[pa * (n + 1) + pb] += sign * va * vb;
                    }
                }
            }
            for pa in 0..=n {
                for pb in 0..=n {
                    let weight = cn2 * psi[pa * (n + 1) + pb].powi(2);
                    if weight == 0.0 {
                        continue;
                    }
                    let split = |port: Port, transmitted: usize| match port {
                        Port::Transmitted => (transmitted as u32, (n - transmitted) as u32),
                        Port::Reflected => ((n - transmitted) as u32, transmitted as u32),
                    };
                    let (click_a, idle_a) = split(pair.side_a, pa);
                    let (click_b, idle_b) = split(pair.side_b, pb);
                    terms.push(OracleTerm {
                        weight,
                        clicks: [click_a, click_b],
                        idle: [idle_a, idle_b],
                    });
                }
            }
        }
        Ok(Self { terms })
    }

    /// Probability that both chosen detectors click and their partners stay dark.
    pub fn probability(&self, t: f64, eta: f64, noise_n: f64) -> f64 {
        let keep = 1.0 - eta * t * t;
        let dark = (-noise_n).exp();
        let silent = |count: u32| dark * keep.powi(count as i32);
        self.terms
            .iter()
            .map(|term| {
                term.weight
                    * (1.0 - silent(term.clicks[0]))
                    * (1.0 - silent(term.clicks[1]))
                    * silent(term.idle[0])
                    * silent(term.idle[1])
            })
            .sum()
    }
}

/// Oracle coincidence probability for a constant transmission `t`.
pub fn click_probability_oracle(
    pair: ClickChannelPair,
    theta_a: f64,
    theta_b: f64,
    setup: &PdcBellSetup,
    t: f64,
    nmax: usize,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("transmission coefficient must lie in [0, 1], got {t}")));
    }
    let oracle = FockOracle::new(pair, theta_a, theta_b, setup.chi, nmax)?;
    Ok(oracle.probability(t, setup.eta, setup.noise_n))
}
