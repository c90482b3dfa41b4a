//! Optical physics: Beer–Lambert absorbance, chromophore mixing, scattering,
//! Henyey–Greenstein phase function, diffusion coefficient and the steady-state
//! radiative-transfer residual on a 1-D slab.

mod extinction;
mod quadrature;
mod rte;

pub use extinction::{Chromophore, Concentrations, ExtinctionTable, TYPICAL_WATER_FRACTION};
pub use quadrature::gauss_legendre;
pub use rte::{rte_residual, rte_residual_with_kernel, solve_slab, DirectionSet, RadianceField, ScatteringKernel};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absorbing/scattering properties of a homogeneous medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalMedium {
    /// Absorption coefficient, mm⁻¹.
    pub mu_a: f64,
    /// Scattering coefficient, mm⁻¹.
    pub mu_s: f64,
    /// Anisotropy factor in `[0, 1)`.
    pub g: f64,
    /// Optical path length, mm.
    pub path_length: f64,
}

impl OpticalMedium {
    pub fn new(mu_a: f64, mu_s: f64, g: f64, path_length: f64) -> Result<Self> {
        if !(mu_a >= 0.0) || !(mu_s >= 0.0) {
            return Err(Error::Domain(format!(
                "μ_a and μ_s must be ≥ 0 (got {mu_a}, {mu_s})"
            )));
        }
        if !(0.0..1.0).contains(&g) {
            return Err(Error::Domain(format!("anisotropy g = {g} outside [0, 1)")));
        }
        if !(path_length > 0.0) {
            return Err(Error::Domain(format!("path length {path_length} must be > 0")));
        }
        Ok(Self {
            mu_a,
            mu_s,
            g,
            path_length,
        })
    }
}

/// Natural-log absorbance `ln(i_ref / i_meas)`.
pub fn absorbance(i_ref: f64, i_meas: f64) -> Result<f64> {
    if !(i_ref > 0.0) {
        return Err(Error::Domain(format!("reference intensity {i_ref} is not positive")));
    }
    if !(i_meas > 0.0) {
        return Err(Error::Domain(format!("measured intensity {i_meas} is not positive")));
    }
    Ok((i_ref / i_meas).ln())
}

/// `Σ_i ε_i(λ) · c_i · l`.
pub fn mixture_absorbance(
    table: &ExtinctionTable,
    conc: &Concentrations,
    path_length: f64,
    wavelength: u32,
) -> Result<f64> {
    let eps = table.get(wavelength)?;
    if conc.as_array().iter().any(|c| *c < 0.0) {
        return Err(Error::Domain("concentrations must be ≥ 0".into()));
    }
    Ok(eps.iter().zip(conc.as_array()).map(|(e, c)| e * c).sum::<f64>() * path_length)
}

/// Reduced scattering coefficient `μ_s (1 − g)`.
pub fn reduced_scattering(m: &OpticalMedium) -> f64 {
    m.mu_s * (1.0 - m.g)
}

/// Henyey–Greenstein phase function normalized so that `½∫₋₁¹ p dμ = 1`.
pub fn hg_phase(g: f64, cos_theta: f64) -> f64 {
    let denom = 1.0 + g * g - 2.0 * g * cos_theta;
    (1.0 - g * g) / (denom * denom.sqrt())
}

/// Diffusion coefficient `1 / [3 (μ_a + μ_s′)]`, mm.
pub fn diffusion_coefficient(m: &OpticalMedium) -> Result<f64> {
    let total = m.mu_a + reduced_scattering(m);
    if !(total > 0.0) {
        return Err(Error::Domain(
            "diffusion coefficient undefined for μ_a + μ_s′ = 0".into(),
        ));
    }
    Ok(1.0 / (3.0 * total))
}
