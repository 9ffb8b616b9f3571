//! Quadrature and photon-number squeezing behind the channel, and
//! post-selection of high-transmission events.
//!
//! Only the moments `⟨T⟩`, `⟨T²⟩`, `⟨T⁴⟩` of the transmission law enter:
//!
//! ```text
//! Q_out        = (⟨T⁴⟩/⟨T²⟩) Q_in + (⟨Δη²⟩/⟨T²⟩) ⟨n⟩_in
//! ⟨:ΔX²:⟩_out  = ⟨T²⟩ ⟨:ΔX²:⟩_in + ⟨ΔT²⟩ ⟨X⟩²_in
//! ```

use rayon::prelude::*;

use crate::channel::{displaced_squeezed_moments, MomentTable, TransmissionLaw};
use crate::error::{Error, Result};
use crate::pdtc::{ExceedanceMethod, Pdtc};
use crate::specfun::QuadratureSpec;

/// Post-selections keeping less than this fraction of events are rejected.
pub const MIN_EXCEEDANCE: f64 = 1e-300;

/// `-10 log₁₀(v + 1)`, positive for squeezing.
pub fn to_db(value: f64) -> f64 {
    -10.0 * value.ln_1p() / std::f64::consts::LN_10
}

/// Inverse of [`to_db`].
pub fn from_db(db: f64) -> f64 {
    (-db / 10.0 * std::f64::consts::LN_10).exp_m1()
}

/// The single-mode statistics that the squeezing relations act on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezingInput {
    pub mandel_q: f64,
    pub mean_n: f64,
    pub quad_var: f64,
    pub mean_x: f64,
}

impl SqueezingInput {
    pub fn new(mandel_q: f64, mean_n: f64, quad_var: f64, mean_x: f64) -> Result<Self> {
        if !(mandel_q >= -1.0 && mandel_q.is_finite()) {
            return Err(Error::domain(format!("Mandel Q must be finite and at least -1, got {mandel_q}")));
        }
        if !(mean_n >= 0.0 && mean_n.is_finite()) {
            return Err(Error::domain(format!("mean photon number must be nonnegative, got {mean_n}")));
        }
        if !(quad_var >= -1.0 && quad_var.is_finite()) {
            return Err(Error::domain(format!(
                "normally ordered quadrature variance must be at least -1, got {quad_var}"
            )));
        }
        if !mean_x.is_finite() {
            return Err(Error::domain("mean quadrature must be finite"));
        }
        Ok(Self {
            mandel_q,
            mean_n,
            quad_var,
            mean_x,
        })
    }

    pub fn from_moments(table: &MomentTable) -> Result<Self> {
        Self::new(
            table.mandel_q()?,
            table.mean_photon_number()?,
            table.quadrature_variance()?,
            table.mean_quadrature()?,
        )
    }

    /// Coherent amplitude `alpha` squeezed by `squeeze_db` along the displacement.
    pub fn displaced_squeezed(alpha: f64, squeeze_db: f64) -> Result<Self> {
        Self::from_moments(&displaced_squeezed_moments(alpha, squeeze_db, 4)?)
    }

    /// 6 dB amplitude squeezing with displacement 10.
    pub fn canonical() -> Self {
        Self::displaced_squeezed(10.0, 6.0).expect("canonical input is valid")
    }

    pub fn quad_db(&self) -> f64 {
        to_db(self.quad_var)
    }

    pub fn photon_db(&self) -> f64 {
        to_db(self.mandel_q)
    }
}

/// Output statistics after the channel.
pub fn propagate_squeezing(input: &SqueezingInput, law: &dyn TransmissionLaw, spec: &QuadratureSpec) -> Result<SqueezingInput> {
    let m1 = law.t_moment(1, spec)?;
    let m2 = law.t_moment(2, spec)?;
    let m4 = law.t_moment(4, spec)?;
    if !(m2 > 0.0) {
        return Err(Error::domain("channel transmits nothing: <T^2> = 0"));
    }
    let var_t = (m2 - m1 * m1).max(0.0);
    let var_eta = (m4 - m2 * m2).max(0.0);
    Ok(SqueezingInput {
        mandel_q: m4 / m2 * input.mandel_q + var_eta / m2 * input.mean_n,
        mean_n: m2 * input.mean_n,
        quad_var: m2 * input.quad_var + var_t * input.mean_x * input.mean_x,
        mean_x: m1 * input.mean_x,
    })
}

/// Threshold and surviving fraction of a post-selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostSelection {
    pub t_min: f64,
    pub exceedance_at_tmin: f64,
}

/// The distribution conditioned on `T > t_min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostSelected {
    pdtc: Pdtc,
    selection: PostSelection,
    r_max: f64,
}

impl PostSelected {
    pub fn selection(&self) -> PostSelection {
        self.selection
    }

    pub fn pdtc(&self) -> &Pdtc {
        &self.pdtc
    }

    /// Largest deflection that survives the selection.
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
}

impl TransmissionLaw for PostSelected {
    fn average(&self, f: &dyn Fn(f64) -> f64, spec: &QuadratureSpec) -> Result<f64> {
        let p = &self.pdtc;
        let restricted = p.expect_in_r(|r| f(p.t_of_r(r)), self.r_max, spec)?;
        Ok(restricted / self.selection.exceedance_at_tmin)
    }
}

/// Keep only events with `T > t_min`.
pub fn postselect(p: &Pdtc, t_min: f64, spec: &QuadratureSpec) -> Result<PostSelected> {
    if !(t_min >= 0.0 && t_min < p.t0()) {
        return Err(Error::domain(format!("t_min must lie in [0, T0 = {}), got {t_min}", p.t0())));
    }
    let exceedance = p.exceedance(t_min, ExceedanceMethod::Exact, spec)?;
    if !(exceedance > MIN_EXCEEDANCE) {
        return Err(Error::InfeasiblePostSelection { t_min, exceedance });
    }
    let r_max = if t_min == 0.0 {
        f64::INFINITY
    } else {
        crate::aperture::r_of_t(t_min, p.model())?
    };
    Ok(PostSelected {
        pdtc: *p,
        selection: PostSelection {
            t_min,
            exceedance_at_tmin: exceedance,
        },
        r_max,
    })
}

fn check_fbar(fbar: f64) -> Result<()> {
    if !(fbar > 0.0 && fbar <= 1.0) {
        return Err(Error::domain(format!("exceedance must lie in (0, 1], got {fbar}")));
    }
    Ok(())
}

/// Threshold whose exceedance is `fbar`, for a centred wander:
/// `T_min = T₀ exp[-½ (-(2σ²/R²) ln(1 - F̄))^{λ/2}]`.
pub fn tmin_of_exceedance(fbar: f64, p: &Pdtc) -> Result<f64> {
    check_fbar(fbar)?;
    if p.wander().d() != 0.0 {
        return Err(Error::NotSupported(
            "closed-form threshold needs d = 0; use tmin_of_exceedance_numeric".into(),
        ));
    }
    let sigma = p.wander().sigma();
    if sigma == 0.0 {
        return Err(Error::domain("the deterministic channel has no threshold distribution"));
    }
    if fbar == 1.0 {
        return Ok(0.0);
    }
    let model = p.model();
    let ratio = -2.0 * sigma * sigma / (model.scale_r * model.scale_r) * (-fbar).ln_1p();
    Ok(p.t0() * (-0.5 * ratio.powf(0.5 * model.shape_lambda)).exp())
}

/// Threshold by bisection on the exact exceedance; works for any offset `d`.
pub fn tmin_of_exceedance_numeric(fbar: f64, p: &Pdtc, spec: &QuadratureSpec) -> Result<f64> {
    check_fbar(fbar)?;
    if fbar == 1.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, p.t0());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if p.exceedance(mid, ExceedanceMethod::Exact, spec)? > fbar {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One point of the squeezing-versus-exceedance curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow {
    pub fbar: f64,
    pub t_min: f64,
    pub quad_db: f64,
    pub photon_db: f64,
    /// `false` if the selection keeps too few events; the dB columns are then NaN.
    pub feasible: bool,
}

/// Squeezing after post-selection at each exceedance in `fbar_grid`.
pub fn squeezing_vs_exceedance_scan(
    input: &SqueezingInput,
    p: &Pdtc,
    fbar_grid: &[f64],
    spec: &QuadratureSpec,
) -> Result<Vec<ScanRow>> {
    if fbar_grid.is_empty() {
        return Err(Error::domain("exceedance grid is empty"));
    }
    fbar_grid.iter().try_for_each(|&f| check_fbar(f))?;
    fbar_grid
        .par_iter()
        .map(|&fbar| {
            let t_min = if p.wander().d() == 0.0 {
                tmin_of_exceedance(fbar, p)?
            } else {
                tmin_of_exceedance_numeric(fbar, p, spec)?
            };
            match postselect(p, t_min, spec) {
                Ok(selected) => {
                    let out = propagate_squeezing(input, &selected, spec)?;
                    Ok(ScanRow {
                        fbar,
                        t_min,
                        quad_db: out.quad_db(),
                        photon_db: out.photon_db(),
                        feasible: true,
                    })
                }
                Err(Error::InfeasiblePostSelection { .. }) => Ok(ScanRow {
                    fbar,
                    t_min,
                    quad_db: f64::NAN,
                    photon_db: f64::NAN,
                    feasible: false,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}
