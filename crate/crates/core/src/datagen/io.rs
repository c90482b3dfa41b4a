use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Calibration, Dataset, SpectralSample, Split};
use crate::environment::EnvState;
use crate::error::{Error, Result};
use crate::foundation::{to_hex, ScenarioConfig};
use crate::optics::ExtinctionTable;
use crate::physiology::{PMF_LEN, PMF_NAMES};

#[derive(Serialize, Deserialize)]
struct Sidecar {
    config: ScenarioConfig,
    config_hash: String,
    dataset_sha256: String,
    calibration: Calibration,
    extinction: ExtinctionTable,
    clamped: usize,
}

impl Dataset {
    pub fn csv_header(wavelengths: &[u32]) -> Vec<String> {
        let mut h = vec!["subject_id".to_string(), "split".into(), "t_min".into()];
        h.extend(wavelengths.iter().map(|w| format!("adc_{w}")));
        h.extend(wavelengths.iter().map(|w| format!("i0_{w}")));
        for c in ["temp_c", "rh_pct", "pressure_mbar", "ambient_lux", "ambient_profile"] {
            h.push(c.into());
        }
        h.extend(PMF_NAMES.iter().map(|n| format!("pmf_{n}")));
        h.push("glucose_plasma".into());
        h.push("glucose_interstitial".into());
        h
    }

    /// Canonical CSV text; floats use the shortest representation that round-trips.
    pub fn to_csv_string(&self) -> String {
        let mut out = Self::csv_header(self.wavelengths()).join(",");
        out.push('\n');
        for s in &self.samples {
            let mut row: Vec<String> = vec![s.subject_id.to_string(), s.split.as_str().into(), s.t_min.to_string()];
            row.extend(s.adc_codes.iter().map(|c| c.to_string()));
            row.extend(s.debug_intensities.iter().map(|v| v.to_string()));
            row.push(s.env.temperature_c.to_string());
            row.push(s.env.relative_humidity.to_string());
            row.push(s.env.pressure_mbar.to_string());
            row.push(s.env.ambient_lux.to_string());
            row.push(s.env.ambient_profile.as_str().into());
            row.extend(s.pmf_raw.iter().map(|v| v.to_string()));
            row.push(s.glucose_plasma.to_string());
            row.push(s.glucose_interstitial.to_string());
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the canonical CSV.
    pub fn content_hash(&self) -> String {
        to_hex(&Sha256::digest(self.to_csv_string().as_bytes()))
    }

    pub fn sidecar_path(csv: &Path) -> PathBuf {
        csv.with_extension("json")
    }

    /// Writes `path` (CSV) and its JSON sidecar.
    pub fn write(&self, path: &Path) -> Result<()> {
        let csv = self.to_csv_string();
        std::fs::write(path, &csv).map_err(|e| Error::io(path, e))?;
        let sidecar = Sidecar {
            config: self.config.clone(),
            config_hash: self.config_hash.clone(),
            dataset_sha256: to_hex(&Sha256::digest(csv.as_bytes())),
            calibration: self.calibration.clone(),
            extinction: self.extinction.clone(),
            clamped: self.clamped,
        };
        let side_path = Self::sidecar_path(path);
        let json = serde_json::to_string_pretty(&sidecar)?;
        std::fs::write(&side_path, json).map_err(|e| Error::io(&side_path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let side_path = Self::sidecar_path(path);
        let side_text = std::fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let sidecar: Sidecar = serde_json::from_str(&side_text)?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let samples = parse_samples(&text, path, &sidecar.calibration.wavelengths)?;
        Ok(Dataset {
            config: sidecar.config,
            config_hash: sidecar.config_hash,
            calibration: sidecar.calibration,
            extinction: sidecar.extinction,
            clamped: sidecar.clamped,
            samples,
        })
    }
}

fn parse_samples(text: &str, path: &Path, wavelengths: &[u32]) -> Result<Vec<SpectralSample>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let expected = Dataset::csv_header(wavelengths);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "unexpected dataset header".into(),
        });
    }
    let nw = wavelengths.len();
    let mut out = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = row_idx + 2;
        let field = |i: usize| record.get(i).unwrap_or("");
        let err = |i: usize| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("bad value `{}` in column `{}`", field(i), expected[i]),
        };
        let f = |i: usize| field(i).parse::<f64>().map_err(|_| err(i));
        let mut col = 3;
        let mut codes = Vec::with_capacity(nw);
        for _ in 0..nw {
            codes.push(field(col).parse::<u16>().map_err(|_| err(col))?);
            col += 1;
        }
        let mut debug = Vec::with_capacity(nw);
        for _ in 0..nw {
            debug.push(f(col)?);
            col += 1;
        }
        let env = EnvState {
            temperature_c: f(col)?,
            relative_humidity: f(col + 1)?,
            pressure_mbar: f(col + 2)?,
            ambient_lux: f(col + 3)?,
            ambient_profile: field(col + 4).parse().map_err(|_| err(col + 4))?,
        };
        col += 5;
        let mut pmf = [0.0; PMF_LEN];
        for v in pmf.iter_mut() {
            *v = f(col)?;
            col += 1;
        }
        out.push(SpectralSample {
            subject_id: field(0).parse().map_err(|_| err(0))?,
            split: field(1).parse::<Split>().map_err(|_| err(1))?,
            t_min: field(2).parse().map_err(|_| err(2))?,
            adc_codes: codes,
            debug_intensities: debug,
            env,
            pmf_raw: pmf,
            glucose_plasma: f(col)?,
            glucose_interstitial: f(col + 1)?,
        });
    }
    Ok(out)
}
