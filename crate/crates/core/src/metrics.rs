//! Clinical and statistical evaluation of glucose predictions.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_pair(pred: &[f64], reference: &[f64]) -> Result<()> {
    if pred.len() != reference.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} references",
            pred.len(),
            reference.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Parameter("no samples".into()));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(pred, reference)?;
    let ss: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r).powi(2)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// Mean absolute relative difference, %.
pub fn mard(pred: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(pred, reference)?;
    if reference.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Domain("MARD needs positive references".into()));
    }
    let s: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r).abs() / r).sum();
    Ok(100.0 * s / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClarkeZone {
    A,
    B,
    C,
    D,
    E,
}

impl ClarkeZone {
    pub const ALL: [ClarkeZone; 5] = [ClarkeZone::A, ClarkeZone::B, ClarkeZone::C, ClarkeZone::D, ClarkeZone::E];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        ['A', 'B', 'C', 'D', 'E'][self.index()]
    }
}

impl std::str::FromStr for ClarkeZone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClarkeZone::ALL
            .into_iter()
            .find(|z| s.len() == 1 && s.starts_with(z.letter()))
            .ok_or_else(|| Error::Parameter(format!("unknown Clarke zone `{s}`")))
    }
}

/// Upper end of the grid, mg/dL.
pub const CLARKE_MAX: f64 = 600.0;

/// Clarke error grid zone of one (reference, prediction) pair in mg/dL. Points on a
/// boundary go to the earlier letter.
pub fn clarke_zone(reference: f64, pred: f64) -> Result<ClarkeZone> {
    let ok = |v: f64| v > 0.0 && v <= CLARKE_MAX;
    if !ok(reference) || !ok(pred) {
        return Err(Error::Domain(format!(
            "Clarke grid covers (0, 600] mg/dL, got reference {reference}, prediction {pred}"
        )));
    }
    let (r, p) = (reference, pred);
    // The regions are disjoint; strict versus inclusive bounds decide boundary ties.
    let zone = if (r <= 70.0 && p <= 70.0) || (p - r).abs() <= 0.2 * r {
        ClarkeZone::A
    } else if (r >= 70.0 && r < 290.0 && p > r + 110.0) || ((130.0..=180.0).contains(&r) && p < 1.4 * r - 182.0) {
        ClarkeZone::C
    } else if (r > 240.0 && (70.0..180.0).contains(&p)) || (r < 70.0 && p > 70.0f64.max(1.2 * r) && p <= 180.0) {
        ClarkeZone::D
    } else if (r < 70.0 && p > 180.0) || (r > 180.0 && p < 70.0) {
        ClarkeZone::E
    } else {
        ClarkeZone::B
    };
    Ok(zone)
}

/// Percentage of points in each zone A–E.
pub fn clarke_fractions(pred: &[f64], reference: &[f64]) -> Result<[f64; 5]> {
    check_pair(pred, reference)?;
    let mut counts = [0usize; 5];
    for (p, r) in pred.iter().zip(reference) {
        counts[clarke_zone(*r, *p)?.index()] += 1;
    }
    let n = pred.len() as f64;
    Ok(counts.map(|c| 100.0 * c as f64 / n))
}

/// Percentage of points with `|pred − ref| ≤ pct/100 · ref`.
pub fn within_pct(pred: &[f64], reference: &[f64], pct: f64) -> Result<f64> {
    check_pair(pred, reference)?;
    if reference.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Domain("agreement band needs positive references".into()));
    }
    let hits = pred
        .iter()
        .zip(reference)
        .filter(|(p, r)| (*p - *r).abs() <= pct / 100.0 * *r)
        .count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlandAltman {
    pub bias: f64,
    pub loa_low: f64,
    pub loa_high: f64,
}

pub fn bland_altman(pred: &[f64], reference: &[f64]) -> Result<BlandAltman> {
    check_pair(pred, reference)?;
    let n = pred.len();
    if n < 2 {
        return Err(Error::Parameter("Bland–Altman needs at least two samples".into()));
    }
    let d: Vec<f64> = pred.iter().zip(reference).map(|(p, r)| p - r).collect();
    let bias = d.iter().sum::<f64>() / n as f64;
    let sd = (d.iter().map(|x| (x - bias).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    Ok(BlandAltman {
        bias,
        loa_low: bias - 1.96 * sd,
        loa_high: bias + 1.96 * sd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linearity {
    pub slope: f64,
    pub intercept: f64,
    pub r: f64,
}

/// Least-squares line of `pred` on `reference` and the Pearson correlation.
pub fn linearity(pred: &[f64], reference: &[f64]) -> Result<Linearity> {
    check_pair(pred, reference)?;
    let n = pred.len() as f64;
    let mx = reference.iter().sum::<f64>() / n;
    let my = pred.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in reference.iter().zip(pred) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::Domain("reference values have zero variance".into()));
    }
    let slope = sxy / sxx;
    let r = if syy > 0.0 { sxy / (sxx * syy).sqrt() } else { 0.0 };
    Ok(Linearity {
        slope,
        intercept: my - slope * mx,
        r,
    })
}

/// Test-split evaluation of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub n_samples: usize,
    pub rmse: f64,
    pub mard: f64,
    /// Zones A–E, %.
    pub clarke_zone_pct: [f64; 5],
    pub within_15pct: f64,
    pub bland_altman: BlandAltman,
    pub linearity: Linearity,
    pub param_count: usize,
    /// Median per-sample inference time; absent unless timing was requested.
    pub inference_ns_per_sample: Option<f64>,
    /// Predictions moved into the Clarke grid range before zoning.
    pub clarke_clipped: usize,
}

impl ModelReport {
    /// Predictions outside `(0, 600]` are clipped onto the grid for zoning only; every
    /// other metric uses them as is.
    pub fn evaluate(
        model: &str,
        pred: &[f64],
        reference: &[f64],
        param_count: usize,
        inference_ns_per_sample: Option<f64>,
    ) -> Result<Self> {
        check_pair(pred, reference)?;
        if pred.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain(format!("{model}: non-finite prediction")));
        }
        let mut clipped = 0;
        let zoned: Vec<f64> = pred
            .iter()
            .map(|p| {
                let c = p.clamp(1.0, CLARKE_MAX);
                if c != *p {
                    clipped += 1;
                }
                c
            })
            .collect();
        Ok(Self {
            model: model.to_string(),
            n_samples: pred.len(),
            rmse: rmse(pred, reference)?,
            mard: mard(pred, reference)?,
            clarke_zone_pct: clarke_fractions(&zoned, reference)?,
            within_15pct: within_pct(pred, reference, 15.0)?,
            bland_altman: bland_altman(pred, reference)?,
            linearity: linearity(pred, reference)?,
            param_count,
            inference_ns_per_sample,
            clarke_clipped: clipped,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Column set of the combined benchmark table.
pub const BENCHMARK_COLUMNS: [&str; 8] = [
    "model",
    "rmse_mgdl",
    "mard_pct",
    "clarke_a_pct",
    "clarke_ab_pct",
    "within_15pct",
    "parameters",
    "inference_ms",
];

pub fn benchmark_csv(reports: &[ModelReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(BENCHMARK_COLUMNS)?;
    for r in reports {
        w.write_record([
            r.model.clone(),
            format!("{:.3}", r.rmse),
            format!("{:.3}", r.mard),
            format!("{:.3}", r.clarke_zone_pct[0]),
            format!("{:.3}", r.clarke_zone_pct[0] + r.clarke_zone_pct[1]),
            format!("{:.3}", r.within_15pct),
            r.param_count.to_string(),
            r.inference_ns_per_sample.map_or(String::new(), |ns| format!("{:.6}", ns * 1e-6)),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

pub fn write_benchmark_csv(reports: &[ModelReport], path: &Path) -> Result<()> {
    let text = benchmark_csv(reports)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
