//! Shared helpers for the criterion benchmarks.

use nirbench_core::datagen::generate_dataset;
use nirbench_core::pipeline::{train_model, ModelId, StoredModel};
use nirbench_core::{Dataset, ScenarioConfig, SpectralSample, Split};

/// Default dataset, its test split and the trained models, in `ids` order.
pub struct Fixture {
    pub dataset: Dataset,
    pub test: Vec<SpectralSample>,
    pub models: Vec<StoredModel>,
}

pub fn fixture(ids: &[ModelId]) -> Fixture {
    let dataset = generate_dataset(&ScenarioConfig::default()).expect("default dataset");
    let models = ids
        .iter()
        .map(|&id| train_model(&dataset, id).expect("training").stored)
        .collect();
    let test = dataset.split_samples(Split::Test);
    Fixture { dataset, test, models }
}
