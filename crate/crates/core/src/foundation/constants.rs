use serde::{Deserialize, Serialize};

/// Speed of light in vacuum, mm/ns.
const C_VACUUM_MM_PER_NS: f64 = 299.792_458;

/// Physical constants used by the hardware and transport layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Elementary charge, C.
    pub electron_charge: f64,
    /// Boltzmann constant, J/K.
    pub boltzmann: f64,
    /// Speed of light in the medium, mm/ns.
    pub speed_of_light_in_tissue: f64,
}

impl PhysicalConstants {
    pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;
    pub const BOLTZMANN: f64 = 1.380_649e-23;
    pub const TISSUE_REFRACTIVE_INDEX: f64 = 1.4;

    /// Constants for a medium with the given refractive index.
    pub fn for_refractive_index(n: f64) -> Self {
        Self {
            electron_charge: Self::ELECTRON_CHARGE,
            boltzmann: Self::BOLTZMANN,
            speed_of_light_in_tissue: C_VACUUM_MM_PER_NS / n,
        }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::for_refractive_index(Self::TISSUE_REFRACTIVE_INDEX)
    }
}
