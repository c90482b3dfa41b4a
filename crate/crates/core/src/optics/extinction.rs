use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Water volume fraction used when checking the glucose/water magnitude invariant.
pub const TYPICAL_WATER_FRACTION: f64 = 0.7;

const DEFAULT_TABLE: &str = include_str!("../../data/extinction_v1.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chromophore {
    Glucose,
    Water,
    Hemoglobin,
    Lipid,
    Melanin,
}

impl Chromophore {
    pub const ALL: [Chromophore; 5] = [
        Chromophore::Glucose,
        Chromophore::Water,
        Chromophore::Hemoglobin,
        Chromophore::Lipid,
        Chromophore::Melanin,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Per-chromophore concentrations. Glucose in mg/dL, everything else as a volume fraction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Concentrations {
    pub glucose: f64,
    pub water: f64,
    pub hemoglobin: f64,
    pub lipid: f64,
    pub melanin: f64,
}

impl Concentrations {
    pub fn as_array(&self) -> [f64; 5] {
        [self.glucose, self.water, self.hemoglobin, self.lipid, self.melanin]
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    wavelength_nm: u32,
    glucose: f64,
    water: f64,
    hemoglobin: f64,
    lipid: f64,
    melanin: f64,
}

/// Extinction coefficients keyed by wavelength in nm, in `Chromophore::ALL` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionTable {
    rows: BTreeMap<u32, [f64; 5]>,
}

impl Default for ExtinctionTable {
    fn default() -> Self {
        Self::from_csv_str(DEFAULT_TABLE).expect("bundled extinction table is valid")
    }
}

impl ExtinctionTable {
    pub fn from_rows(rows: impl IntoIterator<Item = (u32, [f64; 5])>) -> Result<Self> {
        let table = Self {
            rows: rows.into_iter().collect(),
        };
        table.validate()?;
        Ok(table)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let mut rows = BTreeMap::new();
        for record in reader.deserialize() {
            let r: Row = record?;
            let values = [r.glucose, r.water, r.hemoglobin, r.lipid, r.melanin];
            if rows.insert(r.wavelength_nm, values).is_some() {
                return Err(Error::Data(format!(
                    "duplicate wavelength {} in extinction table",
                    r.wavelength_nm
                )));
            }
        }
        Self::from_rows(rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("wavelength_nm,glucose,water,hemoglobin,lipid,melanin\n");
        for (wl, v) in &self.rows {
            out.push_str(&format!("{wl},{},{},{},{},{}\n", v[0], v[1], v[2], v[3], v[4]));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Data("extinction table is empty".into()));
        }
        for (wl, v) in &self.rows {
            if v.iter().any(|e| !e.is_finite() || *e < 0.0) {
                return Err(Error::Data(format!(
                    "negative or non-finite extinction coefficient at {wl} nm"
                )));
            }
            let water = v[Chromophore::Water.index()] * TYPICAL_WATER_FRACTION;
            let glucose = v[Chromophore::Glucose.index()] * 100.0;
            if water < 50.0 * glucose {
                return Err(Error::Data(format!(
                    "glucose absorption at {wl} nm is too strong relative to water \
                     ({glucose:.3e} at 100 mg/dL vs {water:.3e})"
                )));
            }
        }
        Ok(())
    }

    pub fn wavelengths(&self) -> impl Iterator<Item = u32> + '_ {
        self.rows.keys().copied()
    }

    pub fn get(&self, wavelength: u32) -> Result<&[f64; 5]> {
        self.rows
            .get(&wavelength)
            .ok_or(Error::UnknownWavelength(wavelength))
    }

    pub fn coefficient(&self, wavelength: u32, chromophore: Chromophore) -> Result<f64> {
        Ok(self.get(wavelength)?[chromophore.index()])
    }

    pub fn glucose(&self, wavelength: u32) -> Result<f64> {
        self.coefficient(wavelength, Chromophore::Glucose)
    }

    /// Returns a copy with one coefficient replaced, without re-validating.
    pub fn with_coefficient(&self, wavelength: u32, chromophore: Chromophore, value: f64) -> Self {
        let mut out = self.clone();
        if let Some(row) = out.rows.get_mut(&wavelength) {
            row[chromophore.index()] = value;
        }
        out
    }
}
