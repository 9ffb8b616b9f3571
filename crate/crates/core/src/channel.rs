//! Input-output relations of the fluctuating-loss channel for normally
//! ordered moments, `⟨â†ⁿâᵐ⟩_out = ⟨T^{n+m}⟩ ⟨â†ⁿâᵐ⟩_in`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::pdtc::Pdtc;
use crate::specfun::QuadratureSpec;

/// Highest moment order the Gaussian-state factory supports.
pub const MAX_GAUSSIAN_ORDER: usize = 40;

/// Any distribution of the transmission coefficient that can be averaged over.
pub trait TransmissionLaw: Sync {
    /// `⟨f(T)⟩`.
    fn average(&self, f: &dyn Fn(f64) -> f64, spec: &QuadratureSpec) -> Result<f64>;

    /// `⟨T^k⟩`, with `⟨T⁰⟩ = 1`.
    fn t_moment(&self, k: u32, spec: &QuadratureSpec) -> Result<f64> {
        if k == 0 {
            return Ok(1.0);
        }
        self.average(&|t| t.powi(k as i32), spec)
    }
}

impl TransmissionLaw for Pdtc {
    fn average(&self, f: &dyn Fn(f64) -> f64, spec: &QuadratureSpec) -> Result<f64> {
        self.expect(f, spec)
    }

    fn t_moment(&self, k: u32, spec: &QuadratureSpec) -> Result<f64> {
        if k == 0 {
            return Ok(1.0);
        }
        self.moment(k, spec)
    }
}

/// A channel with fixed transmission coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass {
    t: f64,
}

impl PointMass {
    pub fn new(t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::domain(format!("transmission coefficient must lie in [0, 1], got {t}")));
        }
        Ok(Self { t })
    }

    /// The constant channel with efficiency `T² = eta`.
    pub fn from_efficiency(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::domain(format!("efficiency must lie in [0, 1], got {eta}")));
        }
        Self::new(eta.sqrt())
    }

    pub fn t(&self) -> f64 {
        self.t
    }
}

impl TransmissionLaw for PointMass {
    fn average(&self, f: &dyn Fn(f64) -> f64, _spec: &QuadratureSpec) -> Result<f64> {
        Ok(f(self.t))
    }

    fn t_moment(&self, k: u32, _spec: &QuadratureSpec) -> Result<f64> {
        Ok(self.t.powi(k as i32))
    }
}

/// Normally ordered moments `M_{n,m} = ⟨â†ⁿ âᵐ⟩` for `n + m ≤ order`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    order: usize,
    entries: Vec<Complex64>,
}

impl MomentTable {
    /// Tabulate `f(n, m)` on the triangle `n + m ≤ order`.
    pub fn from_fn(order: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let side = order + 1;
        let mut entries = vec![Complex64::new(0.0, 0.0); side * side];
        for n in 0..=order {
            for m in 0..=order - n {
                entries[n * side + m] = f(n, m);
            }
        }
        Self { order, entries }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, n: usize, m: usize) -> Option<Complex64> {
        (n + m <= self.order).then(|| self.entries[n * (self.order + 1) + m])
    }

    /// Entry that is known to be in range.
    fn at(&self, n: usize, m: usize) -> Complex64 {
        self.entries[n * (self.order + 1) + m]
    }

    /// Checks unit trace, Hermitian symmetry and `⟨n⟩ ≥ |⟨a⟩|²` within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if (self.at(0, 0) - 1.0).norm() > tol {
            return Err(Error::domain(format!("M_00 = {} is not 1", self.at(0, 0))));
        }
        for n in 0..=self.order {
            for m in 0..=self.order - n {
                let gap = (self.at(n, m) - self.at(m, n).conj()).norm();
                if gap > tol * (1.0 + self.at(n, m).norm()) {
                    return Err(Error::domain(format!("M_{n}{m} is not the conjugate of M_{m}{n}")));
                }
            }
        }
        if self.order >= 2 && self.at(1, 1).re < self.at(0, 1).norm_sqr() * (1.0 - tol) - tol {
            return Err(Error::domain("mean photon number below squared mean amplitude"));
        }
        Ok(())
    }

    pub fn mean_photon_number(&self) -> Result<f64> {
        self.require(2)?;
        Ok(self.at(1, 1).re)
    }

    /// `⟨X̂⟩` for `X̂ = â + â†`.
    pub fn mean_quadrature(&self) -> Result<f64> {
        self.require(1)?;
        Ok(2.0 * self.at(0, 1).re)
    }

    /// `⟨:ΔX̂²:⟩`, zero for coherent states.
    pub fn quadrature_variance(&self) -> Result<f64> {
        self.require(2)?;
        let x = self.mean_quadrature()?;
        Ok(2.0 * self.at(0, 2).re + 2.0 * self.at(1, 1).re - x * x)
    }

    /// Mandel `Q = ⟨:Δn̂²:⟩/⟨n̂⟩`.
    pub fn mandel_q(&self) -> Result<f64> {
        self.require(4)?;
        let n = self.at(1, 1).re;
        if n <= 0.0 {
            return Err(Error::domain("Mandel Q is undefined for zero mean photon number"));
        }
        Ok((self.at(2, 2).re - n * n) / n)
    }

    fn require(&self, order: usize) -> Result<()> {
        if self.order < order {
            return Err(Error::domain(format!(
                "table of order {} lacks moments of order {order}",
                self.order
            )));
        }
        Ok(())
    }
}

/// Coherent state: `M_{n,m} = conj(α)ⁿ αᵐ`.
pub fn coherent_moments(alpha: Complex64, order: usize) -> MomentTable {
    MomentTable::from_fn(order, |n, m| alpha.conj().powu(n as u32) * alpha.powu(m as u32))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// `(q-1)!! M^{q/2}` for even `q`, the pairings of `q` like operators.
fn pairings(q: usize, m: f64) -> f64 {
    if q % 2 == 1 {
        return 0.0;
    }
    let double_factorial = (1..q).step_by(2).fold(1.0, |acc, i| acc * i as f64);
    double_factorial * m.powi((q / 2) as i32)
}

/// Pure Gaussian state displaced by real `alpha` and squeezed along the same
/// quadrature by `squeeze_db`, so that `⟨:ΔX̂²:⟩ = 10^{-squeeze_db/10} - 1`.
pub fn displaced_squeezed_moments(alpha: f64, squeeze_db: f64, order: usize) -> Result<MomentTable> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::domain(format!("displacement must be finite and nonnegative, got {alpha}")));
    }
    if !squeeze_db.is_finite() {
        return Err(Error::domain("squeezing in dB must be finite"));
    }
    if order > MAX_GAUSSIAN_ORDER {
        return Err(Error::domain(format!(
            "moment order {order} exceeds the supported maximum {MAX_GAUSSIAN_ORDER}"
        )));
    }
    let s = squeeze_db * std::f64::consts::LN_10 / 20.0;
    let n_th = s.sinh().powi(2);
    let m_sq = -s.sinh() * s.cosh();
    // ⟨δa†ʲ δaᵏ⟩ by Wick's theorem: p cross pairs, the rest paired within each side.
    let central = |j: usize, k: usize| -> f64 {
        (0..=j.min(k))
            .map(|p| {
                binomial(j, p) * binomial(k, p) * factorial(p) * n_th.powi(p as i32)
                    * pairings(j - p, m_sq)
                    * pairings(k - p, m_sq)
            })
            .sum()
    };
    Ok(MomentTable::from_fn(order, |n, m| {
        let mut total = 0.0;
        for j in 0..=n {
            for k in 0..=m {
                total += binomial(n, j) * binomial(m, k) * alpha.powi((n - j + m - k) as i32) * central(j, k);
            }
        }
        Complex64::new(total, 0.0)
    }))
}

/// `M_out(n,m) = ⟨T^{n+m}⟩ M_in(n,m)`.
pub fn propagate_moments(input: &MomentTable, law: &dyn TransmissionLaw, spec: &QuadratureSpec) -> Result<MomentTable> {
    let factors = (0..=input.order)
        .map(|k| law.t_moment(k as u32, spec))
        .collect::<Result<Vec<f64>>>()?;
    Ok(MomentTable::from_fn(input.order, |n, m| input.at(n, m) * factors[n + m]))
}

/// Fock amplitudes `⟨n|ψ⟩`, `n ≤ nmax`, of the displaced squeezed state, by
/// projecting its position wavefunction onto Hermite functions.
///
/// Returns [`Error::Truncation`] if the retained norm falls short of `1 - 1e-10`.
pub fn displaced_squeezed_fock(alpha: f64, squeeze_db: f64, nmax: usize) -> Result<Vec<f64>> {
    if !(alpha.is_finite() && alpha >= 0.0 && squeeze_db.is_finite()) {
        return Err(Error::domain("displacement must be nonnegative and squeezing finite"));
    }
    let q0 = std::f64::consts::SQRT_2 * alpha;
    let var = 0.5 * 10f64.powf(-squeeze_db / 10.0);
    let width = var.sqrt().max((0.5f64).sqrt());
    let (lo, hi) = (q0 - 40.0 * width, q0 + 40.0 * width);
    let steps = 40_000;
    let dq = (hi - lo) / steps as f64;
    let norm_psi = (2.0 * std::f64::consts::PI * var).powf(-0.25);
    let pi_quarter = std::f64::consts::PI.powf(-0.25);
    let mut amps = vec![0.0; nmax + 1];
    for i in 0..=steps {
        let q = lo + dq * i as f64;
        let psi = norm_psi * (-(q - q0).powi(2) / (4.0 * var)).exp();
        if psi == 0.0 {
            continue;
        }
        let weight = if i == 0 || i == steps { 0.5 * dq } else { dq };
        // Hermite functions by the normalized three-term recursion, with a
        // running log scale so that exp(-q²/2) cannot underflow first.
        let mut prev = 0.0;
        let mut cur = 1.0;
        let mut log_scale = -0.5 * q * q + pi_quarter.ln();
        for (n, amp) in amps.iter_mut().enumerate() {
            *amp += weight * psi * cur * log_scale.exp();
            let next = (2.0 / (n + 1) as f64).sqrt() * q * cur - (n as f64 / (n + 1) as f64).sqrt() * prev;
            prev = cur;
            cur = next;
            let size = cur.abs().max(prev.abs());
            if size > 1e100 {
                cur /= size;
                prev /= size;
                log_scale += size.ln();
            }
        }
    }
    let norm: f64 = amps.iter().map(|c| c * c).sum();
    if (1.0 - norm).abs() > 1e-10 {
        return Err(Error::Truncation { nmax, norm });
    }
    Ok(amps)
}

/// `⟨â†ⁿâᵐ⟩` of a real Fock-amplitude vector, for checking moment formulas.
pub fn fock_moment(amps: &[f64], n: usize, m: usize) -> f64 {
    // â^m|k⟩ = sqrt(k!/(k-m)!)|k-m⟩
    let mut total = 0.0;
    for k in m..amps.len() {
        let j = k - m + n;
        if j >= amps.len() {
            break;
        }
        let lower = k - m;
        let ratio_m: f64 = (lower + 1..=k).map(|i| i as f64).product();
        let ratio_n: f64 = (lower + 1..=j).map(|i| i as f64).product();
        total += amps[j] * amps[k] * (ratio_m * ratio_n).sqrt();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::new(1e-14, 1e-12, 4000).unwrap()
    }

    #[test]
    fn coherent_entries() {
        let zero = coherent_moments(Complex64::new(0.0, 0.0), 4);
        assert_eq!(zero.get(0, 0), Some(Complex64::new(1.0, 0.0)));
        assert_eq!(zero.get(2, 1), Some(Complex64::new(0.0, 0.0)));
        let two = coherent_moments(Complex64::new(2.0, 0.0), 4);
        assert_eq!(two.get(1, 1).unwrap().re, 4.0);
        let a = Complex64::new(0.3, -1.2);
        let t = coherent_moments(a, 4);
        assert!((t.get(2, 1).unwrap() - a.conj() * a.conj() * a).norm() < 1e-15);
        assert_eq!(t.get(3, 2), None);
        t.validate(1e-12).unwrap();
        assert!(t.quadrature_variance().unwrap().abs() < 1e-14);
        assert!(t.mandel_q().unwrap().abs() < 1e-14);
    }

    #[test]
    fn vacuum_from_gaussian_factory() {
        let t = displaced_squeezed_moments(0.0, 0.0, 4).unwrap();
        assert_eq!(t.get(1, 1).unwrap().re, 0.0);
        assert_eq!(t.get(0, 0).unwrap().re, 1.0);
        assert!(displaced_squeezed_moments(1.0, 6.0, MAX_GAUSSIAN_ORDER + 1).is_err());
    }

    #[test]
    fn canonical_input_statistics() {
        let t = displaced_squeezed_moments(10.0, 6.0, 4).unwrap();
        t.validate(1e-12).unwrap();
        let qv = t.quadrature_variance().unwrap();
        assert!((qv - (10f64.powf(-0.6) - 1.0)).abs() < 1e-12);
        assert!((qv + 0.748_811_356_849_042_4).abs() < 1e-9);
        let s = 6.0 * std::f64::consts::LN_10 / 20.0;
        let ns = s.sinh().powi(2);
        assert!((t.mean_photon_number().unwrap() - (100.0 + ns)).abs() < 1e-10);
        assert_eq!(t.mean_quadrature().unwrap(), 20.0);
    }

    #[test]
    fn gaussian_moments_match_fock_oracle() {
        let amps = displaced_squeezed_fock(10.0, 6.0, 400).unwrap();
        let table = displaced_squeezed_moments(10.0, 6.0, 4).unwrap();
        for n in 0..=4 {
            for m in 0..=4 - n {
                let oracle = fock_moment(&amps, n, m);
                let wick = table.get(n, m).unwrap().re;
                assert!((oracle - wick).abs() < 1e-9 * wick.abs().max(1.0), "({n},{m}): {oracle} vs {wick}");
            }
        }
        let norm: f64 = amps.iter().map(|c| c * c).sum();
        assert!((norm - 1.0).abs() < 1e-10);
    }

    #[test]
    fn small_fock_truncation_is_reported() {
        assert!(matches!(displaced_squeezed_fock(10.0, 6.0, 60), Err(Error::Truncation { .. })));
    }

    #[test]
    fn identity_channel_leaves_moments() {
        // W ≪ a is the lossless limit; here T₀ is 1 to double precision.
        let p = Pdtc::normalized(0.05, 1e-3, 0.0).unwrap();
        let input = displaced_squeezed_moments(1.5, 3.0, 4).unwrap();
        let out = propagate_moments(&input, &p, &spec()).unwrap();
        for n in 0..=4 {
            for m in 0..=4 - n {
                let (a, b) = (out.get(n, m).unwrap(), input.get(n, m).unwrap());
                assert!((a - b).norm() <= 1e-6 * b.norm().max(1.0));
            }
        }
    }

    #[test]
    fn coherent_amplitude_scales_with_mean_t() {
        let p = Pdtc::normalized(1.1, 2.0, 0.5).unwrap();
        let alpha = Complex64::new(0.7, 0.2);
        let out = propagate_moments(&coherent_moments(alpha, 3), &p, &spec()).unwrap();
        let mean_t = p.moment(1, &spec()).unwrap();
        assert!((out.get(0, 1).unwrap() - alpha * mean_t).norm() < 1e-15);
        assert_eq!(out.get(0, 0).unwrap().re, 1.0);
    }

    #[test]
    fn point_masses_compose() {
        let input = displaced_squeezed_moments(2.0, 4.0, 6).unwrap();
        let (t1, t2) = (0.8, 0.35);
        let once = propagate_moments(&input, &PointMass::new(t1 * t2).unwrap(), &spec()).unwrap();
        let first = propagate_moments(&input, &PointMass::new(t1).unwrap(), &spec()).unwrap();
        let twice = propagate_moments(&first, &PointMass::new(t2).unwrap(), &spec()).unwrap();
        for n in 0..=6 {
            for m in 0..=6 - n {
                let expected = input.get(n, m).unwrap() * (t1 * t2).powi((n + m) as i32);
                assert!((once.get(n, m).unwrap() - expected).norm() < 1e-12 * expected.norm().max(1.0));
                assert!((twice.get(n, m).unwrap() - expected).norm() < 1e-12 * expected.norm().max(1.0));
            }
        }
        assert!(PointMass::new(1.2).is_err());
    }

    #[test]
    fn narrow_wander_acts_as_point_mass() {
        let p = Pdtc::normalized(1.1, 1e-7, 0.4).unwrap();
        let t = p.t_of_r(0.4);
        let input = displaced_squeezed_moments(1.0, 2.0, 4).unwrap();
        let out = propagate_moments(&input, &p, &spec()).unwrap();
        for n in 0..=4 {
            for m in 0..=4 - n {
                let expected = input.get(n, m).unwrap() * t.powi((n + m) as i32);
                assert!((out.get(n, m).unwrap() - expected).norm() < 1e-6 * expected.norm().max(1.0));
            }
        }
    }

    #[test]
    fn propagation_matches_sampled_scaling() {
        let p = Pdtc::normalized(1.1, 1.5, 0.3).unwrap();
        let input = displaced_squeezed_moments(1.0, 3.0, 4).unwrap();
        let out = propagate_moments(&input, &p, &spec()).unwrap();
        let n = 1_000_000;
        let samples = p.sample(n, 11, false, &spec()).unwrap();
        for k in 1..=4u32 {
            let powers: Vec<f64> = samples.iter().map(|t| t.powi(k as i32)).collect();
            let mean = powers.iter().sum::<f64>() / n as f64;
            let var = powers.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            let (i, j) = (k as usize / 2, k as usize - k as usize / 2);
            let analytic = out.get(i, j).unwrap().re / input.get(i, j).unwrap().re;
            assert!((analytic - mean).abs() < 3.0 * se, "k={k}");
        }
    }

    proptest! {
        #[test]
        fn propagation_contracts(w in 0.3f64..3.0, sigma in 0.0f64..5.0, d in 0.0f64..2.0,
                                 alpha in 0.0f64..3.0, db in 0.0f64..8.0) {
            let p = Pdtc::normalized(w, sigma, d).unwrap();
            let input = displaced_squeezed_moments(alpha, db, 4).unwrap();
            let out = propagate_moments(&input, &p, &QuadratureSpec::default()).unwrap();
            out.validate(1e-9).unwrap();
            for n in 0..=4 {
                for m in 0..=4 - n {
                    prop_assert!(out.get(n, m).unwrap().norm() <= input.get(n, m).unwrap().norm() * (1.0 + 1e-12));
                }
            }
        }
    }
}
