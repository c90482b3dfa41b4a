use nirbench_core::datagen::generate_dataset;
use nirbench_core::neural::Architecture;
use nirbench_core::pipeline::{evaluate, train_model, ModelArtifact, ModelId, StoredModel};
use nirbench_core::{Error, ScenarioConfig, Split};

#[test]
fn model_ids_parse_and_list_valid_choices() {
    for id in ModelId::ALL {
        assert_eq!(id.as_str().parse::<ModelId>().unwrap(), id);
    }
    let err = "pls".parse::<ModelId>().unwrap_err().to_string();
    assert!(err.contains("enhanced_beer_lambert") && err.contains("sdnn"), "{err}");
}

#[test]
fn ridge_artifact_round_trips_and_reports() {
    let d = generate_dataset(&ScenarioConfig::default()).unwrap();
    let trained = train_model(&d, ModelId::EnhancedBeerLambert).unwrap();
    assert!(trained.history.is_none());
    assert_eq!(trained.stored.param_count(), 57);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ebl.json");
    trained.stored.write(&path).unwrap();
    let back = StoredModel::read(&path).unwrap();
    assert_eq!(back, trained.stored);
    let test = d.split_samples(Split::Test);
    assert_eq!(back.predict(&d, &test).unwrap(), trained.stored.predict(&d, &test).unwrap());

    let eval = evaluate(&back, &d, false).unwrap();
    assert_eq!(eval.report.n_samples, 48);
    assert!(eval.report.inference_ns_per_sample.is_none());
    assert!((eval.report.clarke_zone_pct.iter().sum::<f64>() - 100.0).abs() < 1e-9);
    assert!(eval.report.rmse < 20.0, "{}", eval.report.rmse);
}

#[test]
fn evaluation_refuses_a_different_dataset() {
    let d = generate_dataset(&ScenarioConfig::default()).unwrap();
    let trained = train_model(&d, ModelId::EnhancedBeerLambert).unwrap();
    let mut other_cfg = ScenarioConfig::default();
    other_cfg.seed = 7;
    let other = generate_dataset(&other_cfg).unwrap();
    let err = evaluate(&trained.stored, &other, false).unwrap_err();
    assert!(matches!(err, Error::Data(ref m) if m.contains("trained on dataset")), "{err}");
}

fn without_hash(mut s: StoredModel) -> StoredModel {
    s.dataset_hash.clear();
    s
}

#[test]
fn training_never_reads_the_test_split() {
    let clean = generate_dataset(&ScenarioConfig::default()).unwrap();
    let mut poisoned = clean.clone();
    for s in poisoned.samples.iter_mut().filter(|s| s.split == Split::Test) {
        s.glucose_interstitial = 399.0;
        s.glucose_plasma = 61.0;
        s.adc_codes = vec![1; s.adc_codes.len()];
        s.pmf_raw = [1e6; 12];
    }
    for id in [ModelId::EnhancedBeerLambert, ModelId::Network(Architecture::OptimizedPinn)] {
        let mut a = train_model(&clean, id).unwrap();
        let mut b = train_model(&poisoned, id).unwrap();
        assert_ne!(a.stored.dataset_hash, b.stored.dataset_hash);
        if let (ModelArtifact::Network(_), Some(ha), Some(hb)) = (&a.stored.artifact, a.history.take(), b.history.take()) {
            assert_eq!(ha, hb);
        }
        assert_eq!(without_hash(a.stored), without_hash(b.stored), "{id}");
    }
}
