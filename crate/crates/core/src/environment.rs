//! Environmental state and its optical/electrical perturbations.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foundation::{EnvironmentConfig, RandomStream};

const DEFAULT_WEIGHTS: &str = include_str!("../data/ambient_weights_v1.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbientProfile {
    Sun,
    Fluorescent,
    Led,
}

impl AmbientProfile {
    pub const ALL: [AmbientProfile; 3] = [AmbientProfile::Sun, AmbientProfile::Fluorescent, AmbientProfile::Led];

    pub fn as_str(self) -> &'static str {
        match self {
            AmbientProfile::Sun => "sun",
            AmbientProfile::Fluorescent => "fluorescent",
            AmbientProfile::Led => "led",
        }
    }
}

impl std::str::FromStr for AmbientProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sun" => Ok(AmbientProfile::Sun),
            "fluorescent" => Ok(AmbientProfile::Fluorescent),
            "led" => Ok(AmbientProfile::Led),
            other => Err(Error::Data(format!("unknown ambient profile `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub temperature_c: f64,
    pub relative_humidity: f64,
    pub pressure_mbar: f64,
    pub ambient_lux: f64,
    pub ambient_profile: AmbientProfile,
}

impl EnvState {
    /// Fixed laboratory conditions.
    pub const LAB: EnvState = EnvState {
        temperature_c: 25.0,
        relative_humidity: 45.0,
        pressure_mbar: 1013.0,
        ambient_lux: 0.1,
        ambient_profile: AmbientProfile::Fluorescent,
    };

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("temperature", self.temperature_c, 15.0, 45.0),
            ("relative humidity", self.relative_humidity, 30.0, 90.0),
            ("pressure", self.pressure_mbar, 950.0, 1050.0),
            ("ambient lux", self.ambient_lux, 0.1, 1e5),
        ];
        for (name, v, lo, hi) in checks {
            if !(lo..=hi).contains(&v) {
                return Err(Error::Domain(format!("{name} {v} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Draws an environment; with `noise` off returns [`EnvState::LAB`].
pub fn sample_environment(rng: &mut RandomStream, noise: bool) -> EnvState {
    if !noise {
        return EnvState::LAB;
    }
    EnvState {
        temperature_c: rng.uniform(15.0, 45.0),
        relative_humidity: rng.uniform(30.0, 90.0),
        pressure_mbar: rng.uniform(950.0, 1050.0),
        ambient_lux: rng.log_uniform(0.1, 1e5),
        ambient_profile: AmbientProfile::ALL[rng.below(3)],
    }
}

/// Optical coupling factor: 0.97 at 30 % RH rising linearly to 1.03 at 90 %.
pub fn humidity_coupling(env: &EnvState) -> f64 {
    0.97 + 0.06 * (env.relative_humidity - 30.0) / 60.0
}

/// Relative perfusion change, zero at 1013 mbar, slope 1/1260 per mbar.
pub fn pressure_to_perfusion_delta(env: &EnvState) -> f64 {
    (env.pressure_mbar - 1013.0) / 1260.0
}

/// Relative in-band spectral weight of each ambient source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbientWeights {
    weights: BTreeMap<(AmbientProfile, u32), f64>,
}

#[derive(Deserialize)]
struct WeightRow {
    profile: String,
    wavelength_nm: u32,
    weight: f64,
}

impl Default for AmbientWeights {
    fn default() -> Self {
        Self::from_csv_str(DEFAULT_WEIGHTS).expect("bundled ambient table is valid")
    }
}

impl AmbientWeights {
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut weights = BTreeMap::new();
        for row in reader.deserialize() {
            let r: WeightRow = row?;
            if !(r.weight >= 0.0) {
                return Err(Error::Data(format!(
                    "negative ambient weight for {} at {} nm",
                    r.profile, r.wavelength_nm
                )));
            }
            weights.insert((r.profile.parse()?, r.wavelength_nm), r.weight);
        }
        Ok(Self { weights })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn weight(&self, profile: AmbientProfile, wavelength: u32) -> Result<f64> {
        self.weights
            .get(&(profile, wavelength))
            .copied()
            .ok_or(Error::UnknownWavelength(wavelength))
    }
}

/// Stray ambient power reaching the detector through the baffle, mW.
pub fn ambient_leakage(
    env: &EnvState,
    wavelength: u32,
    weights: &AmbientWeights,
    cfg: &EnvironmentConfig,
) -> Result<f64> {
    let weight = weights.weight(env.ambient_profile, wavelength)?;
    let irradiance = env.ambient_lux * weight * cfg.inband_irradiance_per_lux;
    let area_m2 = cfg.detector_area_mm2 * 1e-6;
    let attenuation = 10f64.powf(-cfg.optical_density);
    Ok(irradiance * area_m2 * attenuation * 1e3)
}

/// Environment layer with its noise toggle applied: when disabled, every perturbation
/// returns its identity value.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentModel {
    pub config: EnvironmentConfig,
    pub weights: AmbientWeights,
    pub enabled: bool,
}

impl EnvironmentModel {
    pub fn new(config: &EnvironmentConfig, enabled: bool) -> Result<Self> {
        let weights = match &config.ambient_table {
            Some(path) => AmbientWeights::load(path)?,
            None => AmbientWeights::default(),
        };
        Ok(Self {
            config: config.clone(),
            weights,
            enabled,
        })
    }

    pub fn sample(&self, rng: &mut RandomStream) -> EnvState {
        sample_environment(rng, self.enabled)
    }

    pub fn coupling(&self, env: &EnvState) -> f64 {
        if self.enabled {
            humidity_coupling(env)
        } else {
            1.0
        }
    }

    pub fn perfusion_delta(&self, env: &EnvState) -> f64 {
        if self.enabled {
            pressure_to_perfusion_delta(env)
        } else {
            0.0
        }
    }

    pub fn leakage(&self, env: &EnvState, wavelength: u32) -> Result<f64> {
        let leak = ambient_leakage(env, wavelength, &self.weights, &self.config)?;
        Ok(if self.enabled { leak } else { 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn env_with(rh: f64, p: f64) -> EnvState {
        EnvState {
            relative_humidity: rh,
            pressure_mbar: p,
            ..EnvState::LAB
        }
    }

    #[test]
    fn sampling_ranges_and_median() {
        let mut rng = RandomStream::new(11).derive("env");
        let draws: Vec<EnvState> = (0..10_000).map(|_| sample_environment(&mut rng, true)).collect();
        assert!(draws.iter().all(|e| e.validate().is_ok()));
        let mut lux: Vec<f64> = draws.iter().map(|e| e.ambient_lux).collect();
        lux.sort_by(f64::total_cmp);
        let median = lux[lux.len() / 2];
        assert!((50.0..=200.0).contains(&median), "{median}");
        for p in AmbientProfile::ALL {
            let share = draws.iter().filter(|e| e.ambient_profile == p).count() as f64 / 1e4;
            assert!((share - 1.0 / 3.0).abs() < 0.03);
        }
        assert_eq!(sample_environment(&mut rng, false), EnvState::LAB);
    }

    #[test]
    fn coupling_examples() {
        assert!((humidity_coupling(&env_with(60.0, 1013.0)) - 1.0).abs() < 1e-12);
        assert!((humidity_coupling(&env_with(90.0, 1013.0)) - 1.03).abs() < 1e-12);
        assert!((humidity_coupling(&env_with(30.0, 1013.0)) - 0.97).abs() < 1e-12);
    }

    #[test]
    fn perfusion_examples() {
        assert_eq!(pressure_to_perfusion_delta(&env_with(45.0, 1013.0)), 0.0);
        assert!((pressure_to_perfusion_delta(&env_with(45.0, 950.0)) + 0.05).abs() < 1e-12);
        assert!((pressure_to_perfusion_delta(&env_with(45.0, 1050.0)) - 37.0 / 1260.0).abs() < 1e-12);
    }

    #[test]
    fn leakage_examples() {
        let w = AmbientWeights::default();
        let cfg = EnvironmentConfig::default();
        for p in AmbientProfile::ALL {
            let env = EnvState {
                ambient_profile: p,
                ..EnvState::LAB
            };
            for wl in [850, 940, 1050, 1150] {
                assert!(ambient_leakage(&env, wl, &w, &cfg).unwrap() < 1e-9);
            }
        }
        let opaque = EnvironmentConfig {
            optical_density: f64::INFINITY,
            ..cfg.clone()
        };
        let bright = EnvState {
            ambient_lux: 1e5,
            ambient_profile: AmbientProfile::Sun,
            ..EnvState::LAB
        };
        assert_eq!(ambient_leakage(&bright, 850, &w, &opaque).unwrap(), 0.0);
        let fluo = EnvState {
            ambient_profile: AmbientProfile::Fluorescent,
            ..bright
        };
        assert!(ambient_leakage(&bright, 850, &w, &cfg).unwrap() > ambient_leakage(&fluo, 850, &w, &cfg).unwrap());
        assert!(matches!(
            ambient_leakage(&bright, 999, &w, &cfg),
            Err(Error::UnknownWavelength(999))
        ));
    }

    #[test]
    fn disabled_model_is_identity() {
        let m = EnvironmentModel::new(&EnvironmentConfig::default(), false).unwrap();
        let env = EnvState {
            relative_humidity: 80.0,
            pressure_mbar: 960.0,
            ambient_lux: 1e4,
            ..EnvState::LAB
        };
        assert_eq!(m.coupling(&env), 1.0);
        assert_eq!(m.perfusion_delta(&env), 0.0);
        assert_eq!(m.leakage(&env, 850).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn coupling_bounded(rh in 30.0f64..=90.0) {
            let c = humidity_coupling(&env_with(rh, 1013.0));
            prop_assert!((0.97 - 1e-12..=1.03 + 1e-12).contains(&c));
        }

        #[test]
        fn perfusion_monotone(a in 950.0f64..1050.0, b in 950.0f64..1050.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(pressure_to_perfusion_delta(&env_with(45.0, lo)) <= pressure_to_perfusion_delta(&env_with(45.0, hi)));
        }

        #[test]
        fn leakage_linear_in_lux(lux in 0.1f64..1e4, k in 1.0f64..10.0) {
            let w = AmbientWeights::default();
            let cfg = EnvironmentConfig::default();
            let e1 = EnvState { ambient_lux: lux, ambient_profile: AmbientProfile::Led, ..EnvState::LAB };
            let e2 = EnvState { ambient_lux: lux * k, ..e1 };
            let l1 = ambient_leakage(&e1, 940, &w, &cfg).unwrap();
            let l2 = ambient_leakage(&e2, 940, &w, &cfg).unwrap();
            prop_assert!((l2 - k * l1).abs() <= 1e-12 * l2.abs());
        }
    }
}
