use std::collections::BTreeMap;

use nirbench_core::datagen::{audit_correlation, generate_dataset};
use nirbench_core::foundation::NoiseToggles;
use nirbench_core::optics::mixture_absorbance;
use nirbench_core::physiology::{subject_optics, Subject};
use nirbench_core::{Dataset, Error, ScenarioConfig, Split};

fn config(seed: u64, noise: NoiseToggles) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.seed = seed;
    cfg.noise = noise;
    cfg
}

#[test]
fn default_sizes_and_subject_disjoint_splits() {
    let d = generate_dataset(&ScenarioConfig::default()).unwrap();
    assert_eq!(d.samples.len(), 240);
    assert_eq!(d.split(Split::Test).count(), 48);
    assert_eq!(d.split(Split::Train).count(), 144);
    let mut owner: BTreeMap<usize, Split> = BTreeMap::new();
    for s in &d.samples {
        assert_eq!(*owner.entry(s.subject_id).or_insert(s.split), s.split);
        assert!(s.adc_codes.iter().all(|c| *c <= 4095));
        assert!((60.0..=400.0).contains(&s.glucose_interstitial));
    }
    // canonical order: subject then time
    assert!(d.samples.windows(2).all(|w| (w[0].subject_id, w[0].t_min) < (w[1].subject_id, w[1].t_min)));
}

#[test]
fn file_round_trip_and_byte_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::default();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    generate_dataset(&cfg).unwrap().write(&a).unwrap();
    generate_dataset(&cfg).unwrap().write(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(Dataset::sidecar_path(&a)).unwrap(),
        std::fs::read(Dataset::sidecar_path(&b)).unwrap()
    );
    let original = generate_dataset(&cfg).unwrap();
    let back = Dataset::read(&a).unwrap();
    assert_eq!(back, original);
    assert_eq!(back.content_hash(), original.content_hash());
}

#[test]
fn noiseless_debug_intensities_follow_beer_lambert() {
    let cfg = config(2024, NoiseToggles::NONE);
    let d = generate_dataset(&cfg).unwrap();
    let subject = Subject::nominal();
    for s in &d.samples {
        for (k, &wl) in cfg.wavelengths.iter().enumerate() {
            let optics = subject_optics(&subject, 0.0, s.glucose_interstitial, wl, &d.extinction, &cfg.physiology).unwrap();
            let a = mixture_absorbance(&d.extinction, &optics.concentrations, optics.medium.path_length, wl).unwrap();
            assert_eq!(s.debug_intensities[k], cfg.hardware.led_power_mw * (-a).exp());
        }
    }
}

#[test]
fn constant_glucose_is_rejected_by_the_audit() {
    let mut d = generate_dataset(&ScenarioConfig::default()).unwrap();
    for s in &mut d.samples {
        s.glucose_interstitial = 120.0;
    }
    assert!(matches!(audit_correlation(&d), Err(Error::ZeroVariance(_))));
}

#[test]
fn noise_layers_never_raise_the_correlation_ceiling() {
    let layers = [
        NoiseToggles::NONE,
        NoiseToggles { hardware: true, ..NoiseToggles::NONE },
        NoiseToggles { hardware: true, environment: true, physiology: false },
        NoiseToggles::ALL,
    ];
    for seed in [1, 2, 3] {
        let best: Vec<f64> = layers
            .iter()
            .map(|n| audit_correlation(&generate_dataset(&config(seed, *n)).unwrap()).unwrap().best_abs)
            .collect();
        for w in best.windows(2) {
            assert!(w[1] <= w[0] + 0.02, "seed {seed}: {best:?}");
        }
    }
}
