use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable consulted for the run seed when no `--seed` flag is given.
pub const SEED_ENV_VAR: &str = "NIRBENCH_SEED";

/// Per-layer noise switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseToggles {
    pub hardware: bool,
    pub environment: bool,
    pub physiology: bool,
}

impl NoiseToggles {
    pub const ALL: Self = Self {
        hardware: true,
        environment: true,
        physiology: true,
    };
    pub const NONE: Self = Self {
        hardware: false,
        environment: false,
        physiology: false,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareConfig {
    pub led_power_mw: f64,
    /// LED age at the start of the study; each subject is measured one day later
    /// than the previous one.
    pub led_age_hours: f64,
    pub led_flicker_sd: f64,
    pub responsivity_a_per_w: f64,
    pub dark_current_a: f64,
    pub bandwidth_hz: f64,
    pub load_resistance_ohm: f64,
    pub v_ref: f64,
    pub inl_amplitude: f64,
    pub offset_drift_per_degc: f64,
    /// Fraction of emitted power collected by the detector through tissue.
    pub coupling: f64,
    /// ADC full scale as a multiple of the nominal-subject signal on each channel.
    pub headroom: f64,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self {
            led_power_mw: 5.0,
            led_age_hours: 1000.0,
            led_flicker_sd: 0.001,
            responsivity_a_per_w: 0.5,
            dark_current_a: 2e-9,
            bandwidth_hz: 1e3,
            load_resistance_ohm: 1e6,
            v_ref: 3.3,
            inl_amplitude: 2.0,
            offset_drift_per_degc: 0.2,
            coupling: 0.01,
            headroom: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentConfig {
    pub optical_density: f64,
    pub detector_area_mm2: f64,
    /// In-band (filter passband) irradiance per lux of ambient light, W/m²/lux.
    pub inband_irradiance_per_lux: f64,
    pub ambient_table: Option<PathBuf>,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            optical_density: 2.0,
            detector_area_mm2: 1.0,
            inband_irradiance_per_lux: 5e-5,
            ambient_table: None,
        }
    }
}

/// How the optical path length depends on anatomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathModel {
    /// `l = 2 · skin_thickness · detour`.
    Thickness,
    /// `l = 2 · (probe_depth + gain · (skin_thickness − 1.5 mm)) · detour`: the probed depth
    /// is set by the source–detector geometry and thickness only perturbs it.
    Probe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysiologyConfig {
    pub scatter_a: f64,
    pub scatter_b: f64,
    pub anisotropy: f64,
    pub detour_length_mm: f64,
    pub detour_cap: f64,
    pub path_model: PathModel,
    pub probe_depth_mm: f64,
    pub probe_thickness_gain: f64,
    /// Relative change of scattering between the youngest and the mid-age subject.
    pub collagen_age_slope: f64,
}

impl Default for PhysiologyConfig {
    fn default() -> Self {
        Self {
            scatter_a: 20.0,
            scatter_b: 1.3,
            anisotropy: 0.9,
            detour_length_mm: 1.0,
            detour_cap: 5.0,
            path_model: PathModel::Probe,
            probe_depth_mm: 2.0,
            probe_thickness_gain: 0.03,
            collagen_age_slope: 0.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlucoseConfig {
    pub basal_min: f64,
    pub basal_max: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub k_abs: f64,
    /// Total glucose appearance of a default meal, mg/dL.
    pub meal_appearance: f64,
    pub meal_scale_min: f64,
    pub meal_scale_max: f64,
    /// Per-subject insulin-sensitivity multiplier range applied to `p3`.
    pub sensitivity_min: f64,
    pub sensitivity_max: f64,
    /// Lower bound of the per-subject multiplier applied to `p1`.
    pub effectiveness_min: f64,
    pub exercise_rate: f64,
    pub exercise_minutes: f64,
    pub exercise_probability: f64,
    pub dawn_rate: f64,
    pub dawn_probability: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub interstitial_noise_sd: f64,
    pub min_separation_min: f64,
}

impl Default for GlucoseConfig {
    fn default() -> Self {
        Self {
            basal_min: 80.0,
            basal_max: 140.0,
            p1: 0.02,
            p2: 0.025,
            p3: 1e-5,
            k_abs: 0.04,
            meal_appearance: 180.0,
            meal_scale_min: 0.8,
            meal_scale_max: 3.0,
            sensitivity_min: 0.02,
            sensitivity_max: 1.0,
            effectiveness_min: 0.4,
            exercise_rate: 1.0,
            exercise_minutes: 45.0,
            exercise_probability: 0.3,
            dawn_rate: 0.5,
            dawn_probability: 0.5,
            tau_min: 7.0,
            tau_max: 15.0,
            interstitial_noise_sd: 1.0,
            min_separation_min: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeConfig {
    pub lambda_grid: Vec<f64>,
}

impl Default for RidgeConfig {
    fn default() -> Self {
        Self {
            lambda_grid: vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub lambda_physics: f64,
    pub balance_interval: usize,
    pub balance_ema: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub rte_depth_nodes: usize,
    pub rte_slab_mm: f64,
    pub selective_wavelengths: Vec<u32>,
    pub conservation: bool,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 2000,
            patience: 100,
            lambda_physics: 0.01,
            balance_interval: 10,
            balance_ema: 0.9,
            lambda_min: 1e-4,
            lambda_max: 10.0,
            rte_depth_nodes: 33,
            rte_slab_mm: 1.0,
            selective_wavelengths: vec![1050, 1150],
            conservation: true,
        }
    }
}

/// Full description of one simulation and benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_subjects: usize,
    pub measurements_per_subject: usize,
    pub split_fractions: [f64; 3],
    pub noise: NoiseToggles,
    pub wavelengths: Vec<u32>,
    pub extinction_table: Option<PathBuf>,
    pub hardware: HardwareConfig,
    pub environment: EnvironmentConfig,
    pub physiology: PhysiologyConfig,
    pub glucose: GlucoseConfig,
    pub ridge: RidgeConfig,
    pub neural: NeuralConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            n_subjects: 80,
            measurements_per_subject: 3,
            split_fractions: [0.6, 0.2, 0.2],
            noise: NoiseToggles::ALL,
            wavelengths: vec![850, 940, 1050, 1150],
            extinction_table: None,
            hardware: HardwareConfig::default(),
            environment: EnvironmentConfig::default(),
            physiology: PhysiologyConfig::default(),
            glucose: GlucoseConfig::default(),
            ridge: RidgeConfig::default(),
            neural: NeuralConfig::default(),
        }
    }
}

impl ScenarioConfig {
    /// Read a `section.key = value` file; absent keys keep their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parse config text. `origin` is only used in diagnostics.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `section.key = value`, got `{line}`")))?;
            let key = key.trim();
            if !key.contains('.') {
                return Err(parse_err(format!("key `{key}` has no section")));
            }
            cfg.set(key, value.trim()).map_err(parse_err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply a single `section.key` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse::<T>()
                .map_err(|_| format!("`{key}`: cannot parse `{v}`"))
        }
        fn list<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| num(key, s))
                .collect()
        }
        fn flag(key: &str, v: &str) -> std::result::Result<bool, String> {
            match v {
                "true" | "on" | "1" => Ok(true),
                "false" | "off" | "0" => Ok(false),
                _ => Err(format!("`{key}`: expected true/false, got `{v}`")),
            }
        }
        let (h, e, p, g, n) = (
            &mut self.hardware,
            &mut self.environment,
            &mut self.physiology,
            &mut self.glucose,
            &mut self.neural,
        );
        match key {
            "run.seed" => self.seed = num(key, value)?,
            "run.n_subjects" => self.n_subjects = num(key, value)?,
            "run.measurements_per_subject" => self.measurements_per_subject = num(key, value)?,
            "run.split_fractions" => {
                let v: Vec<f64> = list(key, value)?;
                self.split_fractions = v
                    .try_into()
                    .map_err(|_| format!("`{key}` needs exactly three fractions"))?;
            }
            "noise.hardware" => self.noise.hardware = flag(key, value)?,
            "noise.environment" => self.noise.environment = flag(key, value)?,
            "noise.physiology" => self.noise.physiology = flag(key, value)?,
            "optics.wavelengths" => self.wavelengths = list(key, value)?,
            "optics.extinction_table" => self.extinction_table = Some(PathBuf::from(value)),

            "hardware.led_power_mw" => h.led_power_mw = num(key, value)?,
            "hardware.led_age_hours" => h.led_age_hours = num(key, value)?,
            "hardware.led_flicker_sd" => h.led_flicker_sd = num(key, value)?,
            "hardware.responsivity_a_per_w" => h.responsivity_a_per_w = num(key, value)?,
            "hardware.dark_current_a" => h.dark_current_a = num(key, value)?,
            "hardware.bandwidth_hz" => h.bandwidth_hz = num(key, value)?,
            "hardware.load_resistance_ohm" => h.load_resistance_ohm = num(key, value)?,
            "hardware.v_ref" => h.v_ref = num(key, value)?,
            "hardware.inl_amplitude" => h.inl_amplitude = num(key, value)?,
            "hardware.offset_drift_per_degc" => h.offset_drift_per_degc = num(key, value)?,
            "hardware.coupling" => h.coupling = num(key, value)?,
            "hardware.headroom" => h.headroom = num(key, value)?,

            "environment.optical_density" => e.optical_density = num(key, value)?,
            "environment.detector_area_mm2" => e.detector_area_mm2 = num(key, value)?,
            "environment.inband_irradiance_per_lux" => e.inband_irradiance_per_lux = num(key, value)?,
            "environment.ambient_table" => e.ambient_table = Some(PathBuf::from(value)),

            "physiology.scatter_a" => p.scatter_a = num(key, value)?,
            "physiology.scatter_b" => p.scatter_b = num(key, value)?,
            "physiology.anisotropy" => p.anisotropy = num(key, value)?,
            "physiology.detour_length_mm" => p.detour_length_mm = num(key, value)?,
            "physiology.detour_cap" => p.detour_cap = num(key, value)?,
            "physiology.path_model" => {
                p.path_model = match value {
                    "thickness" => PathModel::Thickness,
                    "probe" => PathModel::Probe,
                    _ => return Err(format!("`{key}`: expected thickness|probe, got `{value}`")),
                }
            }
            "physiology.probe_depth_mm" => p.probe_depth_mm = num(key, value)?,
            "physiology.probe_thickness_gain" => p.probe_thickness_gain = num(key, value)?,
            "physiology.collagen_age_slope" => p.collagen_age_slope = num(key, value)?,

            "glucose.basal_min" => g.basal_min = num(key, value)?,
            "glucose.basal_max" => g.basal_max = num(key, value)?,
            "glucose.p1" => g.p1 = num(key, value)?,
            "glucose.p2" => g.p2 = num(key, value)?,
            "glucose.p3" => g.p3 = num(key, value)?,
            "glucose.k_abs" => g.k_abs = num(key, value)?,
            "glucose.meal_appearance" => g.meal_appearance = num(key, value)?,
            "glucose.meal_scale_min" => g.meal_scale_min = num(key, value)?,
            "glucose.meal_scale_max" => g.meal_scale_max = num(key, value)?,
            "glucose.sensitivity_min" => g.sensitivity_min = num(key, value)?,
            "glucose.sensitivity_max" => g.sensitivity_max = num(key, value)?,
            "glucose.effectiveness_min" => g.effectiveness_min = num(key, value)?,
            "glucose.exercise_rate" => g.exercise_rate = num(key, value)?,
            "glucose.exercise_minutes" => g.exercise_minutes = num(key, value)?,
            "glucose.exercise_probability" => g.exercise_probability = num(key, value)?,
            "glucose.dawn_rate" => g.dawn_rate = num(key, value)?,
            "glucose.dawn_probability" => g.dawn_probability = num(key, value)?,
            "glucose.tau_min" => g.tau_min = num(key, value)?,
            "glucose.tau_max" => g.tau_max = num(key, value)?,
            "glucose.interstitial_noise_sd" => g.interstitial_noise_sd = num(key, value)?,
            "glucose.min_separation_min" => g.min_separation_min = num(key, value)?,

            "ridge.lambda_grid" => self.ridge.lambda_grid = list(key, value)?,

            "neural.learning_rate" => n.learning_rate = num(key, value)?,
            "neural.beta1" => n.beta1 = num(key, value)?,
            "neural.beta2" => n.beta2 = num(key, value)?,
            "neural.epsilon" => n.epsilon = num(key, value)?,
            "neural.max_epochs" => n.max_epochs = num(key, value)?,
            "neural.patience" => n.patience = num(key, value)?,
            "neural.lambda_physics" => n.lambda_physics = num(key, value)?,
            "neural.balance_interval" => n.balance_interval = num(key, value)?,
            "neural.balance_ema" => n.balance_ema = num(key, value)?,
            "neural.lambda_min" => n.lambda_min = num(key, value)?,
            "neural.lambda_max" => n.lambda_max = num(key, value)?,
            "neural.rte_depth_nodes" => n.rte_depth_nodes = num(key, value)?,
            "neural.rte_slab_mm" => n.rte_slab_mm = num(key, value)?,
            "neural.selective_wavelengths" => n.selective_wavelengths = list(key, value)?,
            "neural.conservation" => n.conservation = flag(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Check cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.split_fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.split_fractions.iter().any(|f| *f < 0.0) {
            return Err(Error::field(
                "run.split_fractions",
                format!("fractions must be nonnegative and sum to 1, got {sum}"),
            ));
        }
        if self.wavelengths.is_empty() {
            return Err(Error::field("optics.wavelengths", "list is empty"));
        }
        if self.wavelengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::field(
                "optics.wavelengths",
                "wavelengths must be strictly increasing",
            ));
        }
        if let Some(w) = self.wavelengths.iter().find(|w| !(700..=1300).contains(*w)) {
            return Err(Error::field(
                "optics.wavelengths",
                format!("{w} nm outside [700, 1300]"),
            ));
        }
        if self.n_subjects == 0 {
            return Err(Error::field("run.n_subjects", "must be positive"));
        }
        if self.measurements_per_subject == 0 {
            return Err(Error::field("run.measurements_per_subject", "must be positive"));
        }
        if self.ridge.lambda_grid.is_empty() || self.ridge.lambda_grid.iter().any(|l| *l < 0.0) {
            return Err(Error::field("ridge.lambda_grid", "need at least one λ ≥ 0"));
        }
        let h = &self.hardware;
        for (name, v) in [
            ("hardware.led_power_mw", h.led_power_mw),
            ("hardware.responsivity_a_per_w", h.responsivity_a_per_w),
            ("hardware.dark_current_a", h.dark_current_a),
            ("hardware.bandwidth_hz", h.bandwidth_hz),
            ("hardware.load_resistance_ohm", h.load_resistance_ohm),
            ("hardware.v_ref", h.v_ref),
            ("hardware.coupling", h.coupling),
            ("hardware.headroom", h.headroom),
        ] {
            if !(v > 0.0) {
                return Err(Error::field(name, format!("must be > 0, got {v}")));
            }
        }
        if h.led_age_hours < 0.0 || h.led_flicker_sd < 0.0 {
            return Err(Error::field("hardware", "LED age and flicker must be ≥ 0"));
        }
        let g = &self.glucose;
        if !(7.0..=15.0).contains(&g.tau_min) || !(g.tau_min..=15.0).contains(&g.tau_max) {
            return Err(Error::field("glucose.tau_min", "lag range must lie in [7, 15] min"));
        }
        if !(0.0..1.0).contains(&self.physiology.anisotropy) {
            return Err(Error::field("physiology.anisotropy", "must be in [0, 1)"));
        }
        for w in &self.neural.selective_wavelengths {
            if !self.wavelengths.contains(w) {
                return Err(Error::field(
                    "neural.selective_wavelengths",
                    format!("{w} nm is not a configured channel"),
                ));
            }
        }
        if self.neural.rte_depth_nodes < 3 {
            return Err(Error::field("neural.rte_depth_nodes", "need at least 3 nodes"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        super::to_hex(&Sha256::digest(&json))
    }

    /// Apply the documented seed precedence: explicit flag, then `NIRBENCH_SEED`.
    pub fn apply_seed_override(&mut self, flag: Option<u64>) -> Result<()> {
        if let Some(seed) = flag {
            self.seed = seed;
        } else if let Ok(v) = std::env::var(SEED_ENV_VAR) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::field(SEED_ENV_VAR, format!("not a u64: `{v}`")))?;
        }
        Ok(())
    }
}
