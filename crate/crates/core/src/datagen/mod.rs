//! Composes the simulator layers into a dataset, splits it by subject, audits the
//! glucose–NIR correlation and persists everything as CSV plus a JSON sidecar.

mod io;

use serde::{Deserialize, Serialize};

use crate::environment::{EnvState, EnvironmentModel};
use crate::error::{Error, Result};
use crate::foundation::{RandomStream, ScenarioConfig};
use crate::glucose::{sample_measurement_times, simulate_day, DAY_MINUTES, GLUCOSE_MAX, GLUCOSE_MIN};
use crate::hardware::{AdcModel, Device, OpticalPath};
use crate::optics::{mixture_absorbance, ExtinctionTable};
use crate::physiology::{sample_subject, subject_optics, Subject, PMF_LEN};

/// Glucose used for the nominal subject when sizing the ADC range, mg/dL.
const NOMINAL_GLUCOSE: f64 = 110.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample {
    pub subject_id: usize,
    pub split: Split,
    pub t_min: usize,
    /// One code per configured wavelength, ascending.
    pub adc_codes: Vec<u16>,
    /// Noise-free `P0 · e^{-A}` per channel, mW.
    pub debug_intensities: Vec<f64>,
    pub env: EnvState,
    pub pmf_raw: [f64; PMF_LEN],
    pub glucose_plasma: f64,
    /// Regression target.
    pub glucose_interstitial: f64,
}

/// Constants needed to map ADC codes back to LED-referred intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub wavelengths: Vec<u32>,
    /// Reference intensity `I₀` per channel, mW.
    pub reference_intensity: Vec<f64>,
    pub tia_gains: Vec<f64>,
    pub responsivity: f64,
    pub v_ref: f64,
    pub coupling: f64,
}

impl Calibration {
    /// LED-referred intensity in mW for `code` on channel `idx`.
    pub fn intensity(&self, idx: usize, code: u16) -> f64 {
        let current = code as f64 * self.v_ref / (4095.0 * self.tia_gains[idx]);
        current / self.responsivity / self.coupling * 1e3
    }

    pub fn intensities(&self, codes: &[u16]) -> Vec<f64> {
        codes.iter().enumerate().map(|(i, c)| self.intensity(i, *c)).collect()
    }

    pub fn channel(&self, wavelength: u32) -> Result<usize> {
        self.wavelengths
            .iter()
            .position(|w| *w == wavelength)
            .ok_or(Error::UnknownWavelength(wavelength))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub calibration: Calibration,
    pub extinction: ExtinctionTable,
    /// Glucose samples moved onto the [60, 400] bounds during simulation.
    pub clamped: usize,
    pub samples: Vec<SpectralSample>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SpectralSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn split_samples(&self, split: Split) -> Vec<SpectralSample> {
        self.split(split).cloned().collect()
    }

    pub fn subjects_in(&self, split: Split) -> Vec<usize> {
        let mut ids: Vec<usize> = self.split(split).map(|s| s.subject_id).collect();
        ids.dedup();
        ids
    }

    pub fn wavelengths(&self) -> &[u32] {
        &self.calibration.wavelengths
    }
}

/// Loads the extinction table named by the config, or the bundled default.
pub fn extinction_table(cfg: &ScenarioConfig) -> Result<ExtinctionTable> {
    let table = match &cfg.extinction_table {
        Some(path) => ExtinctionTable::load(path)?,
        None => ExtinctionTable::default(),
    };
    for w in &cfg.wavelengths {
        table.get(*w)?;
    }
    Ok(table)
}

/// Transimpedance gains sizing each channel so the nominal subject in lab conditions
/// reads at `1/headroom` of full scale.
pub fn channel_gains(cfg: &ScenarioConfig, table: &ExtinctionTable) -> Result<Vec<f64>> {
    let hw = &cfg.hardware;
    let nominal = Subject::nominal();
    cfg.wavelengths
        .iter()
        .map(|&wl| {
            let optics = subject_optics(&nominal, 0.0, NOMINAL_GLUCOSE, wl, table, &cfg.physiology)?;
            let a = optics.medium.mu_a * optics.medium.path_length;
            let current = hw.responsivity_a_per_w * hw.led_power_mw * (-a).exp() * hw.coupling * 1e-3;
            Ok(AdcModel::gain_for_full_scale(hw.v_ref, current, hw.headroom))
        })
        .collect()
}

/// Subject-level split by largest-remainder rounding of `fractions`. Returns one split
/// per subject index.
pub fn split_subjects(n: usize, fractions: [f64; 3], rng: &mut RandomStream) -> Result<Vec<Split>> {
    if n < 3 {
        return Err(Error::Parameter(format!(
            "need at least 3 subjects for a train/val/test split, got {n}"
        )));
    }
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    let mut left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    for i in 0..3 {
        if counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).unwrap_or(0);
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    let mut ids: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut ids);
    let mut out = vec![Split::Train; n];
    let mut pos = 0;
    for (split, count) in Split::ALL.iter().zip(counts) {
        for &id in &ids[pos..pos + count] {
            out[id] = *split;
        }
        pos += count;
    }
    Ok(out)
}

/// Generates one subject's measurements. Depends only on `(seed, subject_id)`.
fn generate_subject(
    cfg: &ScenarioConfig,
    id: usize,
    split: Split,
    table: &ExtinctionTable,
    device: &Device,
    env_model: &EnvironmentModel,
) -> Result<(Vec<SpectralSample>, usize)> {
    let stream = RandomStream::new(cfg.seed).derive("subject").derive(&id.to_string());
    let subject = sample_subject(&mut stream.derive("anatomy"), cfg.noise.physiology);
    let day = simulate_day(&cfg.glucose, &mut stream.derive("glucose"))?;
    let times = sample_measurement_times(
        cfg.measurements_per_subject,
        DAY_MINUTES,
        cfg.glucose.min_separation_min,
        &mut stream.derive("times"),
    )?;
    let mut samples = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let m = stream.derive("measurement").derive(&k.to_string());
        let env = env_model.sample(&mut m.derive("env"));
        let mut isf = m.derive("interstitial");
        let noise_sd = if cfg.noise.physiology { cfg.glucose.interstitial_noise_sd } else { 0.0 };
        let glucose = isf.gaussian(day.interstitial[t], noise_sd).clamp(GLUCOSE_MIN, GLUCOSE_MAX);
        let perfusion_delta = env_model.perfusion_delta(&env);
        let coupling = device.coupling * env_model.coupling(&env);
        let mut hw = m.derive("hardware");
        let extra_age = id as f64 * 24.0 + t as f64 / 60.0;
        let mut codes = Vec::with_capacity(cfg.wavelengths.len());
        let mut debug = Vec::with_capacity(cfg.wavelengths.len());
        for (idx, &wl) in cfg.wavelengths.iter().enumerate() {
            let optics = subject_optics(&subject, perfusion_delta, glucose, wl, table, &cfg.physiology)?;
            let absorbance = mixture_absorbance(table, &optics.concentrations, optics.medium.path_length, wl)?;
            let path = OpticalPath {
                absorbance,
                coupling,
                ambient_mw: env_model.leakage(&env, wl)?,
                temperature_c: env.temperature_c,
            };
            let reading = device.measure(idx, &path, extra_age, &mut hw, cfg.noise.hardware)?;
            codes.push(reading.code);
            debug.push(reading.debug_intensity_mw);
        }
        samples.push(SpectralSample {
            subject_id: id,
            split,
            t_min: t,
            adc_codes: codes,
            debug_intensities: debug,
            env,
            pmf_raw: subject.pmf_raw(&env),
            glucose_plasma: day.plasma[t],
            glucose_interstitial: glucose,
        });
    }
    Ok((samples, day.clamped))
}

/// Builds the full dataset for `cfg`.
pub fn generate_dataset(cfg: &ScenarioConfig) -> Result<Dataset> {
    cfg.validate()?;
    let table = extinction_table(cfg)?;
    let gains = channel_gains(cfg, &table)?;
    let root = RandomStream::new(cfg.seed);
    let device = Device::new(&cfg.hardware, &cfg.wavelengths, &gains, &mut root.derive("device"))?;
    let env_model = EnvironmentModel::new(&cfg.environment, cfg.noise.environment)?;
    let splits = split_subjects(cfg.n_subjects, cfg.split_fractions, &mut root.derive("split"))?;

    let mut samples = Vec::with_capacity(cfg.n_subjects * cfg.measurements_per_subject);
    let mut clamped = 0;
    for (id, split) in splits.iter().enumerate() {
        let (s, c) = generate_subject(cfg, id, *split, &table, &device, &env_model)?;
        samples.extend(s);
        clamped += c;
    }
    Ok(Dataset {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        calibration: Calibration {
            wavelengths: cfg.wavelengths.clone(),
            reference_intensity: vec![cfg.hardware.led_power_mw; cfg.wavelengths.len()],
            tia_gains: gains,
            responsivity: cfg.hardware.responsivity_a_per_w,
            v_ref: cfg.hardware.v_ref,
            coupling: cfg.hardware.coupling,
        },
        extinction: table,
        clamped,
        samples,
    })
}

/// Pearson correlation of `x` and `y`; `name` labels the zero-variance error.
pub fn pearson(x: &[f64], y: &[f64], name: &str) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Dimension(format!("correlation needs equal lengths ≥ 2 ({name})")));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance(name.to_string()));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("glucose".to_string()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationAudit {
    /// `(wavelength, ρ)` per channel.
    pub per_channel: Vec<(u32, f64)>,
    pub best_wavelength: u32,
    pub best_abs: f64,
    pub n_samples: usize,
}

/// Pearson ρ between interstitial glucose and `−ln I` per channel over the whole dataset,
/// with `I` recovered from the ADC codes.
pub fn audit_correlation(d: &Dataset) -> Result<CorrelationAudit> {
    if d.samples.len() < 10 {
        return Err(Error::Data(format!(
            "correlation audit needs ≥ 10 samples, got {}",
            d.samples.len()
        )));
    }
    let glucose: Vec<f64> = d.samples.iter().map(|s| s.glucose_interstitial).collect();
    let mut per_channel = Vec::new();
    for (idx, &wl) in d.calibration.wavelengths.iter().enumerate() {
        let mut neg_log = Vec::with_capacity(d.samples.len());
        for s in &d.samples {
            let i = d.calibration.intensity(idx, s.adc_codes[idx]);
            if !(i > 0.0) {
                return Err(Error::Domain(format!(
                    "zero intensity at {wl} nm (subject {}, t = {})",
                    s.subject_id, s.t_min
                )));
            }
            neg_log.push(-i.ln());
        }
        let rho = pearson(&neg_log, &glucose, &format!("{wl} nm"))?;
        per_channel.push((wl, rho));
    }
    let (best_wavelength, best) = per_channel
        .iter()
        .copied()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .ok_or_else(|| Error::Data("no channels".into()))?;
    Ok(CorrelationAudit {
        per_channel,
        best_wavelength,
        best_abs: best.abs(),
        n_samples: d.samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_counts() {
        let mut rng = RandomStream::new(1).derive("split");
        let s = split_subjects(80, [0.6, 0.2, 0.2], &mut rng).unwrap();
        let count = |x| s.iter().filter(|v| **v == x).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (48, 16, 16));
        let s = split_subjects(5, [0.6, 0.2, 0.2], &mut rng).unwrap();
        let count = |x| s.iter().filter(|v| **v == x).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (3, 1, 1));
        let s = split_subjects(3, [0.9, 0.05, 0.05], &mut rng).unwrap();
        assert!(Split::ALL.iter().all(|x| s.contains(x)));
        assert!(matches!(split_subjects(2, [0.6, 0.2, 0.2], &mut rng), Err(Error::Parameter(_))));
    }

    #[test]
    fn pearson_oracle() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0], "x").unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &[8.0, 6.0, 4.0, 2.0], "x").unwrap() + 1.0).abs() < 1e-15);
        // hand-evaluated: x̄ = 2.5, ȳ = 2, Σdxdy = 2, Σdx² = 5, Σdy² = 4
        let r = pearson(&x, &[1.0, 3.0, 1.0, 3.0], "x").unwrap();
        assert!((r - 2.0 / 20f64.sqrt()).abs() < 1e-15);
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0], "c"), Err(Error::ZeroVariance(n)) if n == "c"));
    }
}
