//! Training and test-split evaluation of the six benchmark models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, SpectralSample, Split};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureScaler, FeatureVector};
use crate::foundation::RandomStream;
use crate::metrics::ModelReport;
use crate::neural::{
    count_params, time_inference, train, Architecture, HistoryRow, InputScaler, NetworkSpec, PhysicsSet,
    TrainedNetwork,
};
use crate::ridge::{select_lambda, LambdaSelection, RidgeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelId {
    EnhancedBeerLambert,
    Network(Architecture),
}

impl ModelId {
    pub const ALL: [ModelId; 6] = [
        ModelId::EnhancedBeerLambert,
        ModelId::Network(Architecture::OriginalPinn),
        ModelId::Network(Architecture::OptimizedPinn),
        ModelId::Network(Architecture::FullRtePinn),
        ModelId::Network(Architecture::SelectiveRtePinn),
        ModelId::Network(Architecture::Sdnn),
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::EnhancedBeerLambert => "enhanced_beer_lambert",
            ModelId::Network(a) => a.as_str(),
        }
    }

    pub fn valid_ids() -> String {
        ModelId::ALL.map(|m| m.as_str()).join(", ")
    }
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown model `{s}`; valid ids: {}", ModelId::valid_ids())))
    }
}

/// Feature extractor, standardizer and ridge fit of the Enhanced Beer–Lambert model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EblModel {
    pub extractor: FeatureExtractor,
    pub scaler: FeatureScaler,
    pub ridge: RidgeModel,
    pub selection: LambdaSelection,
}

impl EblModel {
    /// Fits on the training split and picks λ on the validation split. Features that are
    /// constant on the training split are kept at zero.
    pub fn fit(d: &Dataset) -> Result<Self> {
        let extractor = FeatureExtractor::fit(d)?;
        let train_x = extractor.extract_all(d.split(Split::Train))?;
        let val_x = extractor.extract_all(d.split(Split::Val))?;
        let scaler = FeatureScaler::fit_lenient(&train_x, &extractor.names())?;
        let train_x = scaler.apply_all(&train_x);
        let val_x = scaler.apply_all(&val_x);
        let train_y: Vec<f64> = d.split(Split::Train).map(|s| s.glucose_interstitial).collect();
        let val_y: Vec<f64> = d.split(Split::Val).map(|s| s.glucose_interstitial).collect();
        let rows = |x: &[FeatureVector]| x.iter().map(|f| f.0.to_vec()).collect::<Vec<_>>();
        let selection = select_lambda(&rows(&train_x), &train_y, &rows(&val_x), &val_y, &d.config.ridge.lambda_grid)?;
        let ridge = RidgeModel::fit(&rows(&train_x), &train_y, selection.lambda)?;
        Ok(Self {
            extractor,
            scaler,
            ridge,
            selection,
        })
    }

    pub fn predict_one(&self, s: &SpectralSample) -> Result<f64> {
        let f = self.scaler.apply(&self.extractor.extract(s)?);
        self.ridge.predict_one(f.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelArtifact {
    Ridge(EblModel),
    Network(TrainedNetwork),
}

/// A trained model bound to the dataset it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredModel {
    pub model: String,
    pub dataset_hash: String,
    pub config_hash: String,
    pub seed: u64,
    pub artifact: ModelArtifact,
}

impl StoredModel {
    pub fn id(&self) -> Result<ModelId> {
        self.model.parse()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn param_count(&self) -> usize {
        match &self.artifact {
            ModelArtifact::Ridge(m) => m.ridge.parameter_count(),
            ModelArtifact::Network(n) => count_params(&n.spec),
        }
    }

    /// Refuses to run against a dataset other than the training one.
    pub fn check_dataset(&self, d: &Dataset) -> Result<()> {
        let hash = d.content_hash();
        if hash != self.dataset_hash {
            return Err(Error::Data(format!(
                "model `{}` was trained on dataset {} but this dataset is {}; retrain before evaluating",
                self.model, self.dataset_hash, hash
            )));
        }
        Ok(())
    }

    pub fn predict<'a>(&self, d: &Dataset, samples: impl IntoIterator<Item = &'a SpectralSample>) -> Result<Vec<f64>> {
        match &self.artifact {
            ModelArtifact::Ridge(m) => samples.into_iter().map(|s| m.predict_one(s)).collect(),
            ModelArtifact::Network(n) => n.predict(&d.calibration, samples),
        }
    }

    /// Median per-sample inference time in ns over `samples`, starting from raw samples.
    pub fn time_inference(&self, d: &Dataset, samples: &[SpectralSample]) -> Result<f64> {
        match &self.artifact {
            ModelArtifact::Ridge(m) => {
                let mut sink = 0.0;
                let mut failure = None;
                let ns = time_inference(samples.len(), || {
                    for s in samples {
                        match m.predict_one(s) {
                            Ok(v) => sink += v,
                            Err(e) => failure = Some(e),
                        }
                    }
                });
                std::hint::black_box(sink);
                failure.map_or(Ok(ns), Err)
            }
            ModelArtifact::Network(n) => {
                let net = n.network()?;
                let mut failure = None;
                let ns = time_inference(samples.len(), || {
                    let out = n
                        .scaler
                        .batch(&d.calibration, samples)
                        .and_then(|b| n.predict_batch(&net, &b));
                    match out {
                        Ok(v) => {
                            std::hint::black_box(v);
                        }
                        Err(e) => failure = Some(e),
                    }
                });
                failure.map_or(Ok(ns), Err)
            }
        }
    }
}

/// Output of training one model.
#[derive(Debug, Clone)]
pub struct Trained {
    pub stored: StoredModel,
    pub history: Option<Vec<HistoryRow>>,
}

/// Trains `id` on the training split, selecting on validation. The test split is never read.
pub fn train_model(d: &Dataset, id: ModelId) -> Result<Trained> {
    let (artifact, history) = match id {
        ModelId::EnhancedBeerLambert => (ModelArtifact::Ridge(EblModel::fit(d)?), None),
        ModelId::Network(arch) => {
            let cfg = &d.config;
            let scaler = InputScaler::fit(d)?;
            let train_b = scaler.batch(&d.calibration, d.split(Split::Train))?;
            let val_b = scaler.batch(&d.calibration, d.split(Split::Val))?;
            let spec = NetworkSpec::new(arch, &cfg.neural, d.wavelengths());
            let physics = PhysicsSet::build(&spec, &train_b, &d.calibration, &d.extinction, cfg)?;
            let mut rng = RandomStream::new(cfg.seed).derive("model").derive(arch.as_str());
            let (net, state) = train(spec, &train_b, &val_b, &physics, &cfg.neural, &mut rng)?;
            let trained = TrainedNetwork::new(&net, scaler, &state);
            (ModelArtifact::Network(trained), Some(state.history))
        }
    };
    Ok(Trained {
        stored: StoredModel {
            model: id.as_str().to_string(),
            dataset_hash: d.content_hash(),
            config_hash: d.config_hash.clone(),
            seed: d.config.seed,
            artifact,
        },
        history,
    })
}

/// Test-split predictions paired with their references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: ModelReport,
    pub reference: Vec<f64>,
    pub prediction: Vec<f64>,
}

/// Evaluates on the test split. Inference is timed only when `timing` is set, since the
/// measurement is machine-dependent.
pub fn evaluate(stored: &StoredModel, d: &Dataset, timing: bool) -> Result<Evaluation> {
    stored.check_dataset(d)?;
    let test = d.split_samples(Split::Test);
    if test.is_empty() {
        return Err(Error::Data("test split is empty".into()));
    }
    let prediction = stored.predict(d, &test)?;
    let reference: Vec<f64> = test.iter().map(|s| s.glucose_interstitial).collect();
    let ns = if timing { Some(stored.time_inference(d, &test)?) } else { None };
    let report = ModelReport::evaluate(&stored.model, &prediction, &reference, stored.param_count(), ns)?;
    Ok(Evaluation {
        report,
        reference,
        prediction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct PredictionRow {
    reference: f64,
    prediction: f64,
}

pub fn write_predictions_csv(reference: &[f64], prediction: &[f64], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (r, p) in reference.iter().zip(prediction) {
        w.serialize(PredictionRow {
            reference: *r,
            prediction: *p,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// `(reference, prediction)` columns.
pub fn read_predictions_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<PredictionRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    Ok(rows.iter().map(|row| (row.reference, row.prediction)).unzip())
}
