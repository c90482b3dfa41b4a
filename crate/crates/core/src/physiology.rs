//! Subject anatomy and state, its optical properties, and the 12-entry PMF vector.

use serde::{Deserialize, Serialize};

use crate::environment::EnvState;
use crate::error::{Error, Result};
use crate::foundation::{PathModel, PhysiologyConfig, RandomStream};
use crate::optics::{reduced_scattering, Concentrations, ExtinctionTable, OpticalMedium};

pub const PMF_LEN: usize = 12;

pub const PMF_NAMES: [&str; PMF_LEN] = [
    "age",
    "bmi",
    "melanin_fraction",
    "skin_thickness",
    "hydration_offset",
    "systolic_bp",
    "heart_rate",
    "resp_rate",
    "baseline_perfusion",
    "water_fraction",
    "lipid_fraction",
    "env_temperature",
];

const MELANIN_LO: f64 = 0.01;
const MELANIN_HI: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub age: f64,
    pub bmi: f64,
    /// Fitzpatrick class 1–6.
    pub fitzpatrick: u8,
    pub melanin_fraction: f64,
    pub skin_thickness: f64,
    pub hydration_offset: f64,
    pub systolic_bp: f64,
    pub heart_rate: f64,
    pub resp_rate: f64,
    pub baseline_perfusion: f64,
    pub water_fraction: f64,
    pub lipid_fraction: f64,
}

/// Sub-band of melanin fraction for Fitzpatrick class `k` (1–6); bands are disjoint
/// and increase with `k`.
pub fn melanin_band(k: u8) -> (f64, f64) {
    let width = (MELANIN_HI - MELANIN_LO) / 6.0;
    let k = k.clamp(1, 6) as f64;
    (MELANIN_LO + (k - 1.0) * width, MELANIN_LO + k * width)
}

impl Subject {
    /// Builds a subject from its independent fields, deriving the tissue fractions.
    #[allow(clippy::too_many_arguments)]
    pub fn from_fields(
        age: f64,
        bmi: f64,
        fitzpatrick: u8,
        melanin_fraction: f64,
        skin_thickness: f64,
        hydration_offset: f64,
        systolic_bp: f64,
        heart_rate: f64,
        resp_rate: f64,
    ) -> Self {
        let dbmi = bmi - 29.0;
        Self {
            age,
            bmi,
            fitzpatrick,
            melanin_fraction,
            skin_thickness,
            hydration_offset,
            systolic_bp,
            heart_rate,
            resp_rate,
            water_fraction: 0.60 - 0.0015 * dbmi,
            lipid_fraction: 0.10 + 0.004 * dbmi,
            baseline_perfusion: 0.030 * (1.0 + 0.5 * hydration_offset) - 0.0002 * dbmi,
        }
    }

    /// The subject used when physiological variability is switched off.
    pub fn nominal() -> Self {
        let (lo, hi) = melanin_band(3);
        Self::from_fields(45.0, 25.0, 3, (lo + hi) / 2.0, 1.5, 0.0, 120.0, 70.0, 15.0)
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("age", self.age, 18.0, 80.0),
            ("bmi", self.bmi, 18.0, 40.0),
            ("melanin_fraction", self.melanin_fraction, MELANIN_LO, MELANIN_HI),
            ("skin_thickness", self.skin_thickness, 0.5, 4.0),
            ("hydration_offset", self.hydration_offset, -0.10, 0.10),
            ("systolic_bp", self.systolic_bp, 90.0, 180.0),
            ("heart_rate", self.heart_rate, 50.0, 120.0),
            ("resp_rate", self.resp_rate, 12.0, 20.0),
        ];
        for (name, v, lo, hi) in checks {
            if !(lo..=hi).contains(&v) {
                return Err(Error::Domain(format!("{name} = {v} outside [{lo}, {hi}]")));
            }
        }
        if !(1..=6).contains(&self.fitzpatrick) {
            return Err(Error::Domain(format!("Fitzpatrick class {} outside I–VI", self.fitzpatrick)));
        }
        let (lo, hi) = melanin_band(self.fitzpatrick);
        if !(lo..=hi).contains(&self.melanin_fraction) {
            return Err(Error::Domain("melanin fraction outside its Fitzpatrick band".into()));
        }
        Ok(())
    }

    /// Raw PMF values in [`PMF_NAMES`] order.
    pub fn pmf_raw(&self, env: &EnvState) -> [f64; PMF_LEN] {
        [
            self.age,
            self.bmi,
            self.melanin_fraction,
            self.skin_thickness,
            self.hydration_offset,
            self.systolic_bp,
            self.heart_rate,
            self.resp_rate,
            self.baseline_perfusion,
            self.water_fraction,
            self.lipid_fraction,
            env.temperature_c,
        ]
    }
}

/// Draws a subject; with `noise` off returns [`Subject::nominal`].
pub fn sample_subject(rng: &mut RandomStream, noise: bool) -> Subject {
    if !noise {
        return Subject::nominal();
    }
    let age = rng.uniform(18.0, 80.0);
    let bmi = rng.uniform(18.0, 40.0);
    let fitzpatrick = 1 + rng.below(6) as u8;
    let (lo, hi) = melanin_band(fitzpatrick);
    let melanin = rng.uniform(lo, hi);
    let thickness = rng.triangular(0.5, 1.5, 4.0);
    let hydration = rng.uniform(-0.10, 0.10);
    let sbp = rng.uniform(90.0, 180.0);
    let hr = rng.uniform(50.0, 120.0);
    let rr = rng.uniform(12.0, 20.0);
    Subject::from_fields(age, bmi, fitzpatrick, melanin, thickness, hydration, sbp, hr, rr)
}

/// Optical state of one subject at one wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectOptics {
    pub medium: OpticalMedium,
    pub concentrations: Concentrations,
    pub detour: f64,
}

/// Scattering coefficient from the power law, scaled by an age-driven collagen proxy.
pub fn scattering_coefficient(s: &Subject, wavelength: u32, cfg: &PhysiologyConfig) -> f64 {
    let collagen = 1.0 + cfg.collagen_age_slope * (s.age - 49.0) / 31.0;
    cfg.scatter_a * (wavelength as f64 / 1000.0).powf(-cfg.scatter_b) * collagen
}

/// Path-lengthening factor `min(1 + ½ μ_s′ l₀, cap)`.
pub fn detour_factor(reduced_scattering: f64, cfg: &PhysiologyConfig) -> f64 {
    (1.0 + 0.5 * reduced_scattering * cfg.detour_length_mm).min(cfg.detour_cap)
}

/// Tissue optics at `wavelength`. `perfusion_delta` is the environmental perfusion
/// change and `glucose` the tissue glucose concentration in mg/dL.
pub fn subject_optics(
    s: &Subject,
    perfusion_delta: f64,
    glucose: f64,
    wavelength: u32,
    table: &ExtinctionTable,
    cfg: &PhysiologyConfig,
) -> Result<SubjectOptics> {
    let concentrations = Concentrations {
        glucose,
        water: s.water_fraction * (1.0 + s.hydration_offset),
        hemoglobin: s.baseline_perfusion * (1.0 + perfusion_delta),
        lipid: s.lipid_fraction,
        melanin: s.melanin_fraction,
    };
    let eps = table.get(wavelength)?;
    let mu_a: f64 = eps.iter().zip(concentrations.as_array()).map(|(e, c)| e * c).sum();
    let mu_s = scattering_coefficient(s, wavelength, cfg);
    let mut medium = OpticalMedium::new(mu_a, mu_s, cfg.anisotropy, 1.0)?;
    let detour = detour_factor(reduced_scattering(&medium), cfg);
    let depth = match cfg.path_model {
        PathModel::Thickness => s.skin_thickness,
        PathModel::Probe => cfg.probe_depth_mm + cfg.probe_thickness_gain * (s.skin_thickness - 1.5),
    };
    medium.path_length = 2.0 * depth * detour;
    Ok(SubjectOptics {
        medium,
        concentrations,
        detour,
    })
}

/// Per-entry standardizer for PMF vectors, fitted on training rows.
///
/// Entries that are constant on the training split (for example when physiology noise is
/// off) are mapped to zero rather than rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PmfScaler {
    fitted: Option<([f64; PMF_LEN], [f64; PMF_LEN])>,
}

impl PmfScaler {
    pub fn fit(rows: &[[f64; PMF_LEN]]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Data("PMF scaler needs at least 2 training rows".into()));
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; PMF_LEN];
        let mut sd = [0.0; PMF_LEN];
        for j in 0..PMF_LEN {
            mean[j] = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0);
            sd[j] = if var.sqrt() > 1e-12 * mean[j].abs().max(1.0) { var.sqrt() } else { 0.0 };
        }
        Ok(Self {
            fitted: Some((mean, sd)),
        })
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    pub fn mean(&self) -> Option<&[f64; PMF_LEN]> {
        self.fitted.as_ref().map(|(m, _)| m)
    }

    pub fn sd(&self) -> Option<&[f64; PMF_LEN]> {
        self.fitted.as_ref().map(|(_, s)| s)
    }

    pub fn transform(&self, raw: &[f64; PMF_LEN]) -> Result<[f64; PMF_LEN]> {
        let (mean, sd) = self
            .fitted
            .as_ref()
            .ok_or_else(|| Error::State("PMF scaler used before fitting".into()))?;
        let mut out = [0.0; PMF_LEN];
        for j in 0..PMF_LEN {
            out[j] = if sd[j] > 0.0 { (raw[j] - mean[j]) / sd[j] } else { 0.0 };
        }
        Ok(out)
    }
}

/// Standardized PMF vector for a subject under `env`.
pub fn pmf_vector(s: &Subject, env: &EnvState, scaler: &PmfScaler) -> Result<[f64; PMF_LEN]> {
    scaler.transform(&s.pmf_raw(env))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::foundation::PhysiologyConfig;
    use proptest::prelude::*;

    fn draws(n: usize) -> Vec<Subject> {
        let mut rng = RandomStream::new(3).derive("subjects");
        (0..n).map(|_| sample_subject(&mut rng, true)).collect()
    }

    #[test]
    fn sampled_subjects_in_range() {
        let all = draws(10_000);
        for s in &all {
            s.validate().unwrap();
            assert!(s.water_fraction > 0.0 && s.lipid_fraction > 0.0 && s.baseline_perfusion > 0.0);
        }
        let max_i = all.iter().filter(|s| s.fitzpatrick == 1).map(|s| s.melanin_fraction).fold(0.0, f64::max);
        let min_vi = all.iter().filter(|s| s.fitzpatrick == 6).map(|s| s.melanin_fraction).fold(1.0, f64::min);
        assert!(min_vi > max_i);
        let mut thick: Vec<f64> = all.iter().map(|s| s.skin_thickness).collect();
        thick.sort_by(f64::total_cmp);
        // triangular(0.5, 1.5, 4) median: 4 − √(3.5·2.5·0.5)
        let median = 4.0 - (3.5f64 * 2.5 * 0.5).sqrt();
        assert!((thick[5000] - median).abs() < 0.05);
    }

    #[test]
    fn sampling_is_deterministic() {
        assert_eq!(draws(5), draws(5));
    }

    #[test]
    fn melanin_raises_absorption() {
        let table = ExtinctionTable::default();
        let cfg = PhysiologyConfig::default();
        let base = Subject::nominal();
        let darker = Subject {
            melanin_fraction: base.melanin_fraction + 0.02,
            ..base
        };
        for wl in [850, 940, 1050, 1150] {
            let a = subject_optics(&base, 0.0, 100.0, wl, &table, &cfg).unwrap();
            let b = subject_optics(&darker, 0.0, 100.0, wl, &table, &cfg).unwrap();
            assert!(b.medium.mu_a > a.medium.mu_a);
        }
    }

    #[test]
    fn hydration_scales_water_contribution() {
        let table = ExtinctionTable::default();
        let cfg = PhysiologyConfig::default();
        let base = Subject::nominal();
        let wet = Subject {
            hydration_offset: 0.10,
            ..base
        };
        let a = subject_optics(&base, 0.0, 100.0, 1150, &table, &cfg).unwrap();
        let b = subject_optics(&wet, 0.0, 100.0, 1150, &table, &cfg).unwrap();
        assert!((b.concentrations.water / a.concentrations.water - 1.10).abs() < 1e-12);
    }

    #[test]
    fn thickness_path_model_doubles() {
        let table = ExtinctionTable::default();
        let cfg = PhysiologyConfig {
            path_model: PathModel::Thickness,
            ..Default::default()
        };
        let one = Subject {
            skin_thickness: 1.0,
            ..Subject::nominal()
        };
        let two = Subject {
            skin_thickness: 2.0,
            ..one
        };
        let a = subject_optics(&one, 0.0, 100.0, 940, &table, &cfg).unwrap();
        let b = subject_optics(&two, 0.0, 100.0, 940, &table, &cfg).unwrap();
        assert!((b.medium.path_length / a.medium.path_length - 2.0).abs() < 1e-12);
    }

    #[test]
    fn detour_capped() {
        let cfg = PhysiologyConfig::default();
        assert_eq!(detour_factor(0.0, &cfg), 1.0);
        assert_eq!(detour_factor(100.0, &cfg), 5.0);
        assert!((detour_factor(2.0, &cfg) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pmf_scaler_behaviour() {
        let env = EnvState::LAB;
        assert!(matches!(
            pmf_vector(&Subject::nominal(), &env, &PmfScaler::default()),
            Err(Error::State(_))
        ));
        let rows: Vec<[f64; PMF_LEN]> = draws(200).iter().map(|s| s.pmf_raw(&env)).collect();
        let scaler = PmfScaler::fit(&rows).unwrap();
        let z: Vec<[f64; PMF_LEN]> = rows.iter().map(|r| scaler.transform(r).unwrap()).collect();
        for j in 0..PMF_LEN {
            let m = z.iter().map(|r| r[j]).sum::<f64>() / z.len() as f64;
            assert!(m.abs() < 1e-9, "column {j}: {m}");
        }
        let at_mean = scaler.transform(scaler.mean().unwrap()).unwrap();
        assert!(at_mean.iter().all(|v| v.abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn optics_positive_and_deterministic(seed in 0u64..500, wl_idx in 0usize..4, g in 60.0f64..400.0) {
            let wl = [850, 940, 1050, 1150][wl_idx];
            let mut rng = RandomStream::new(seed).derive("s");
            let s = sample_subject(&mut rng, true);
            let table = ExtinctionTable::default();
            let cfg = PhysiologyConfig::default();
            let a = subject_optics(&s, -0.05, g, wl, &table, &cfg).unwrap();
            let b = subject_optics(&s, -0.05, g, wl, &table, &cfg).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a.medium.mu_a > 0.0 && a.medium.mu_s > 0.0);
            prop_assert!(a.detour >= 1.0);
        }
    }
}
