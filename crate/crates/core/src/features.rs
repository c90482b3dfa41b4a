//! Enhanced Beer–Lambert feature engineering: one sample → 56 named features.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::datagen::{Calibration, Dataset, SpectralSample, Split};
use crate::error::{Error, Result};
use crate::optics::{absorbance, ExtinctionTable};
use crate::physiology::{PmfScaler, PMF_LEN, PMF_NAMES};

pub const FEATURE_COUNT: usize = 56;
/// The extractor is defined for exactly four channels.
pub const CHANNELS: usize = 4;

const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
const PMF_THICKNESS: usize = 3;
const PMF_PERFUSION: usize = 8;
const PMF_MELANIN: usize = 2;

/// Feature names for the given channel wavelengths, in extraction order.
pub fn feature_names_for(wl: &[u32; CHANNELS]) -> Vec<String> {
    let mut n = Vec::with_capacity(FEATURE_COUNT);
    n.extend(wl.iter().map(|w| format!("norm_intensity_{w}")));
    n.extend(wl.iter().map(|w| format!("absorbance_{w}")));
    n.extend(PAIRS.iter().map(|(i, j)| format!("delta_{}_{}", wl[*j], wl[*i])));
    n.extend(wl.iter().map(|w| format!("absorbance_sq_{w}")));
    n.extend(PAIRS.iter().map(|(i, j)| format!("product_{}_{}", wl[*i], wl[*j])));
    n.extend(wl.iter().map(|w| format!("pmf_weighted_absorbance_{w}")));
    n.extend(PMF_NAMES.iter().map(|p| format!("pmf_{p}")));
    n.extend(["env_temp_c", "env_rh_pct", "env_pressure_mbar", "env_ln_lux"].map(String::from));
    n.extend(wl.iter().map(|w| format!("thickness_x_absorbance_{w}")));
    n.extend(wl.iter().map(|w| format!("melanin_x_absorbance_{w}")));
    n.extend(wl.iter().map(|w| format!("temp_comp_absorbance_{w}")));
    debug_assert_eq!(n.len(), FEATURE_COUNT);
    n
}

/// Feature names for the default channels 850/940/1050/1150 nm.
pub fn feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| feature_names_for(&[850, 940, 1050, 1150]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Weights of the PMF composite term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeWeights {
    pub alpha_skin: f64,
    pub alpha_perfusion: f64,
    pub alpha_melanin: f64,
    /// Per-channel weights `w_k`.
    pub channel: [f64; CHANNELS],
}

impl CompositeWeights {
    /// `α = 1/3` each and `w_k` the normalized glucose extinction.
    pub fn from_table(table: &ExtinctionTable, wavelengths: &[u32; CHANNELS]) -> Result<Self> {
        let eps = wavelengths.map(|w| table.glucose(w).unwrap_or(f64::NAN));
        if let Some(i) = eps.iter().position(|e| e.is_nan()) {
            return Err(Error::UnknownWavelength(wavelengths[i]));
        }
        let total: f64 = eps.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Data("glucose extinction sums to zero".into()));
        }
        Ok(Self {
            alpha_skin: 1.0 / 3.0,
            alpha_perfusion: 1.0 / 3.0,
            alpha_melanin: 1.0 / 3.0,
            channel: eps.map(|e| e / total),
        })
    }
}

/// Everything needed to turn a sample into a feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractor {
    pub wavelengths: [u32; CHANNELS],
    pub calibration: Calibration,
    pub weights: CompositeWeights,
    pub pmf_scaler: PmfScaler,
}

impl FeatureExtractor {
    /// Fits the PMF standardizer on the training split of `d`.
    pub fn fit(d: &Dataset) -> Result<Self> {
        let wavelengths: [u32; CHANNELS] = d.wavelengths().try_into().map_err(|_| {
            Error::Dimension(format!(
                "feature extraction needs {CHANNELS} channels, dataset has {}",
                d.wavelengths().len()
            ))
        })?;
        let rows: Vec<[f64; PMF_LEN]> = d.split(Split::Train).map(|s| s.pmf_raw).collect();
        Ok(Self {
            wavelengths,
            calibration: d.calibration.clone(),
            weights: CompositeWeights::from_table(&d.extinction, &wavelengths)?,
            pmf_scaler: PmfScaler::fit(&rows)?,
        })
    }

    pub fn names(&self) -> Vec<String> {
        feature_names_for(&self.wavelengths)
    }

    pub fn extract(&self, s: &SpectralSample) -> Result<FeatureVector> {
        if s.adc_codes.len() != CHANNELS {
            return Err(Error::Dimension(format!("sample has {} channels", s.adc_codes.len())));
        }
        let mut intensity = [0.0; CHANNELS];
        for (k, i) in intensity.iter_mut().enumerate() {
            *i = self.calibration.intensity(k, s.adc_codes[k]);
        }
        let i0: [f64; CHANNELS] = std::array::from_fn(|k| self.calibration.reference_intensity[k]);
        let pmf = self.pmf_scaler.transform(&s.pmf_raw)?;
        extract_features(
            &self.wavelengths,
            &intensity,
            &i0,
            &s.pmf_raw,
            &pmf,
            [s.env.temperature_c, s.env.relative_humidity, s.env.pressure_mbar, s.env.ambient_lux],
            &self.weights,
        )
    }

    pub fn extract_all<'a>(&self, samples: impl IntoIterator<Item = &'a SpectralSample>) -> Result<Vec<FeatureVector>> {
        samples.into_iter().map(|s| self.extract(s)).collect()
    }
}

/// Core feature computation. `pmf_raw` supplies the physical skin thickness, perfusion
/// and melanin values; `pmf` is the standardized vector copied into features 29–40;
/// `env` is `(T °C, RH %, pressure mbar, lux)`.
pub fn extract_features(
    wavelengths: &[u32; CHANNELS],
    intensity: &[f64; CHANNELS],
    reference: &[f64; CHANNELS],
    pmf_raw: &[f64; PMF_LEN],
    pmf: &[f64; PMF_LEN],
    env: [f64; 4],
    weights: &CompositeWeights,
) -> Result<FeatureVector> {
    let mut a = [0.0; CHANNELS];
    for k in 0..CHANNELS {
        a[k] = absorbance(reference[k], intensity[k])
            .map_err(|e| Error::Domain(format!("channel {} nm: {e}", wavelengths[k])))?;
    }
    if !(env[3] > 0.0) {
        return Err(Error::Domain(format!("ambient lux {} must be positive", env[3])));
    }
    let thickness = pmf_raw[PMF_THICKNESS];
    let melanin = pmf_raw[PMF_MELANIN];
    let composite = weights.alpha_skin * thickness
        + weights.alpha_perfusion * pmf_raw[PMF_PERFUSION]
        + weights.alpha_melanin * melanin;
    let temp_comp = 1.0 + 0.002 * (env[0] - 25.0);

    let mut f = [0.0; FEATURE_COUNT];
    let mut n = 0;
    let mut push = |v: f64| {
        f[n] = v;
        n += 1;
    };
    for k in 0..CHANNELS {
        push(intensity[k] / reference[k]);
    }
    a.iter().for_each(|v| push(*v));
    for (i, j) in PAIRS {
        push(a[j] - a[i]);
    }
    a.iter().for_each(|v| push(v * v));
    for (i, j) in PAIRS {
        push(a[i] * a[j]);
    }
    for k in 0..CHANNELS {
        push(weights.channel[k] * composite * a[k]);
    }
    pmf.iter().for_each(|v| push(*v));
    push(env[0]);
    push(env[1]);
    push(env[2]);
    push(env[3].ln());
    a.iter().for_each(|v| push(thickness * v));
    a.iter().for_each(|v| push(melanin * v));
    a.iter().for_each(|v| push(v * temp_comp));
    debug_assert_eq!(n, FEATURE_COUNT);
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite feature".into()));
    }
    Ok(FeatureVector(f))
}

/// Per-feature standardizer (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Names of features that were constant at fit time and are mapped to zero.
    /// Always empty for [`FeatureScaler::fit`].
    pub constant: Vec<String>,
}

fn column_stats(rows: &[FeatureVector]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; FEATURE_COUNT];
    let mut sd = vec![0.0; FEATURE_COUNT];
    for j in 0..FEATURE_COUNT {
        mean[j] = rows.iter().map(|r| r.0[j]).sum::<f64>() / n;
        sd[j] = (rows.iter().map(|r| (r.0[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
    }
    (mean, sd)
}

fn is_constant(mean: f64, sd: f64) -> bool {
    sd <= 1e-12 * mean.abs().max(1.0)
}

impl FeatureScaler {
    /// Strict fit: any constant feature is an error.
    pub fn fit(rows: &[FeatureVector], names: &[String]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Data("feature scaler needs at least 2 training samples".into()));
        }
        let (mean, sd) = column_stats(rows);
        if let Some(j) = (0..FEATURE_COUNT).find(|&j| is_constant(mean[j], sd[j])) {
            return Err(Error::ConstantFeature(names.get(j).cloned().unwrap_or_else(|| j.to_string())));
        }
        Ok(Self {
            mean,
            sd,
            constant: Vec::new(),
        })
    }

    /// Like [`FeatureScaler::fit`] but maps constant features to zero instead of failing.
    /// Used when some simulator layers are switched off.
    pub fn fit_lenient(rows: &[FeatureVector], names: &[String]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::Data("feature scaler needs at least 2 training samples".into()));
        }
        let (mean, mut sd) = column_stats(rows);
        let mut constant = Vec::new();
        for j in 0..FEATURE_COUNT {
            if is_constant(mean[j], sd[j]) {
                sd[j] = 0.0;
                constant.push(names.get(j).cloned().unwrap_or_else(|| j.to_string()));
            }
        }
        Ok(Self { mean, sd, constant })
    }

    pub fn apply(&self, fv: &FeatureVector) -> FeatureVector {
        let mut out = [0.0; FEATURE_COUNT];
        for j in 0..FEATURE_COUNT {
            out[j] = if self.sd[j] > 0.0 { (fv.0[j] - self.mean[j]) / self.sd[j] } else { 0.0 };
        }
        FeatureVector(out)
    }

    pub fn apply_all(&self, rows: &[FeatureVector]) -> Vec<FeatureVector> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const WL: [u32; 4] = [850, 940, 1050, 1150];

    fn weights() -> CompositeWeights {
        CompositeWeights::from_table(&ExtinctionTable::default(), &WL).unwrap()
    }

    fn feats(i: [f64; 4], i0: [f64; 4], env: [f64; 4]) -> FeatureVector {
        let raw = [45.0, 25.0, 0.05, 1.5, 0.0, 120.0, 70.0, 15.0, 0.03, 0.6, 0.1, env[0]];
        extract_features(&WL, &i, &i0, &raw, &[0.0; PMF_LEN], env, &weights()).unwrap()
    }

    const LAB: [f64; 4] = [25.0, 45.0, 1013.0, 0.1];

    #[test]
    fn zero_absorbance_zeroes_dependent_features() {
        let f = feats([5.0; 4], [5.0; 4], LAB);
        for j in (4..24).chain(44..56) {
            assert_eq!(f.0[j], 0.0, "feature {}", feature_names()[j]);
        }
        assert!(f.0[..4].iter().all(|v| *v == 1.0));
        assert!(f.0[28..40].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unit_absorbance_pairs() {
        let e = std::f64::consts::E;
        let f = feats([5.0 / e; 4], [5.0; 4], LAB);
        for j in 8..14 {
            assert!(f.0[j].abs() < 1e-15);
        }
        for j in 18..24 {
            assert!((f.0[j] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn named_contrast_is_log_ratio() {
        let i = [1.3, 0.7, 1.1, 0.4];
        let f = feats(i, [5.0; 4], LAB);
        let idx = feature_names().iter().position(|n| n == "delta_1150_940").unwrap();
        assert!((f.0[idx] - (i[1] / i[3]).ln()).abs() < 1e-12);
    }

    #[test]
    fn composite_weights_normalized() {
        let w = weights();
        assert!((w.channel.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn nonpositive_intensity_rejected() {
        let raw = [0.0; PMF_LEN];
        let err = extract_features(&WL, &[1.0, 0.0, 1.0, 1.0], &[5.0; 4], &raw, &raw, LAB, &weights()).unwrap_err();
        assert!(err.to_string().contains("940"));
    }

    #[test]
    fn scaler_fit_and_apply() {
        let names = feature_names().to_vec();
        let one = feats([1.0, 2.0, 3.0, 4.0], [5.0; 4], LAB);
        assert!(matches!(FeatureScaler::fit(&[one, one], &names), Err(Error::ConstantFeature(_))));
        let lenient = FeatureScaler::fit_lenient(&[one, one], &names).unwrap();
        assert_eq!(lenient.constant.len(), FEATURE_COUNT);
    }

    proptest! {
        #[test]
        fn differences_scale_invariant(i in prop::array::uniform4(0.01f64..5.0), k in 0.1f64..10.0) {
            let a = feats(i, [5.0; 4], LAB);
            let b = feats(i.map(|v| v * k), [5.0; 4], LAB);
            for j in 8..14 {
                prop_assert!((a.0[j] - b.0[j]).abs() < 1e-12);
            }
        }
    }
}
