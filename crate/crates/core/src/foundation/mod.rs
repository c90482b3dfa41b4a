//! Seeded random streams, physical constants and scenario configuration.

mod config;
mod constants;
mod rng;

pub use config::{
    EnvironmentConfig, GlucoseConfig, HardwareConfig, NeuralConfig, NoiseToggles, PathModel,
    PhysiologyConfig, RidgeConfig, ScenarioConfig, SEED_ENV_VAR,
};
pub use constants::PhysicalConstants;
pub use rng::RandomStream;

/// Lower-case hex encoding of a byte slice.
pub fn to_hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
