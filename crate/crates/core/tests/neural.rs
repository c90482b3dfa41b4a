use std::sync::OnceLock;

use nirbench_core::datagen::generate_dataset;
use nirbench_core::neural::{
    objective_and_gradient, train, Architecture, InputScaler, NeuralBatch, Network, NetworkSpec, PhysicsSet,
};
use nirbench_core::optics::Chromophore;
use nirbench_core::{Dataset, RandomStream, ScenarioConfig, Split};

fn dataset() -> &'static Dataset {
    static D: OnceLock<Dataset> = OnceLock::new();
    D.get_or_init(|| generate_dataset(&ScenarioConfig::default()).unwrap())
}

fn batches() -> (InputScaler, NeuralBatch, NeuralBatch) {
    let d = dataset();
    let scaler = InputScaler::fit(d).unwrap();
    let train = scaler.batch(&d.calibration, d.split(Split::Train)).unwrap();
    let val = scaler.batch(&d.calibration, d.split(Split::Val)).unwrap();
    (scaler, train, val)
}

fn spec(a: Architecture) -> NetworkSpec {
    NetworkSpec::new(a, &ScenarioConfig::default().neural, dataset().wavelengths())
}

/// Every parameter's reverse-mode gradient against a central difference.
fn gradient_check(a: Architecture, lambda: f64) {
    let d = dataset();
    let (_, train, _) = batches();
    // the first samples belong to one subject, so the conservation term has pairs
    let batch = train.select(&[0, 1, 2, 3]);
    let spec = spec(a);
    let physics = PhysicsSet::build(&spec, &batch, &d.calibration, &d.extinction, &d.config).unwrap();
    if a == Architecture::OptimizedPinn {
        assert!(physics.conservation.is_some());
    }
    let net = Network::init(spec, &mut RandomStream::new(11).derive(a.as_str())).unwrap();
    let (_, grad) = objective_and_gradient(&net, &net.params, &batch, &physics, lambda).unwrap();
    let mut params = net.params.clone();
    let mut worst: f64 = 0.0;
    for k in 0..params.len() {
        let orig = params[k];
        let h = 1e-5 * orig.abs().max(1.0);
        params[k] = orig + h;
        let up = objective_and_gradient(&net, &params, &batch, &physics, lambda).unwrap().0;
        params[k] = orig - h;
        let down = objective_and_gradient(&net, &params, &batch, &physics, lambda).unwrap().0;
        params[k] = orig;
        let fd = (up - down) / (2.0 * h);
        let err = (fd - grad[k]).abs();
        assert!(
            err <= 1e-4 * fd.abs().max(grad[k].abs()) + 1e-9,
            "{a} param {k}: analytic {} vs numeric {fd}",
            grad[k]
        );
        worst = worst.max(err);
    }
    assert!(worst.is_finite());
}

#[test]
fn gradient_check_original_pinn() {
    gradient_check(Architecture::OriginalPinn, 0.5);
}

#[test]
fn gradient_check_optimized_pinn() {
    gradient_check(Architecture::OptimizedPinn, 0.5);
}

#[test]
fn gradient_check_full_rte_pinn() {
    gradient_check(Architecture::FullRtePinn, 0.5);
}

#[test]
fn gradient_check_selective_rte_pinn() {
    gradient_check(Architecture::SelectiveRtePinn, 0.5);
}

#[test]
fn gradient_check_sdnn() {
    gradient_check(Architecture::Sdnn, 0.0);
}

#[test]
fn physics_sets_follow_the_architecture() {
    let d = dataset();
    let (_, train, _) = batches();
    let batch = train.select(&[0, 1, 2, 3, 4, 5]);
    let build = |a| PhysicsSet::build(&spec(a), &batch, &d.calibration, &d.extinction, &d.config).unwrap();
    let o = build(Architecture::OriginalPinn);
    assert!(o.beer_lambert.is_some() && o.rte.is_none() && o.conservation.is_none());
    let o = build(Architecture::OptimizedPinn);
    assert!(o.beer_lambert.is_some() && o.conservation.is_some());
    assert!(build(Architecture::FullRtePinn).rte.is_some());
    assert!(build(Architecture::Sdnn).is_empty());
}

#[test]
fn selective_rte_ignores_excluded_extinction_entries() {
    let d = dataset();
    let (_, train, _) = batches();
    let batch = train.select(&[0, 5, 10]);
    let s = spec(Architecture::SelectiveRtePinn);
    let perturbed = d
        .extinction
        .with_coefficient(850, Chromophore::Glucose, 3e-5)
        .with_coefficient(940, Chromophore::Glucose, 9e-5);
    let a = PhysicsSet::build(&s, &batch, &d.calibration, &d.extinction, &d.config).unwrap();
    let b = PhysicsSet::build(&s, &batch, &d.calibration, &perturbed, &d.config).unwrap();
    let c = [95.0, 140.0, 210.0];
    assert_eq!(a.rte.as_ref().unwrap().value(&c), b.rte.as_ref().unwrap().value(&c));

    let full = spec(Architecture::FullRtePinn);
    let a = PhysicsSet::build(&full, &batch, &d.calibration, &d.extinction, &d.config).unwrap();
    let b = PhysicsSet::build(&full, &batch, &d.calibration, &perturbed, &d.config).unwrap();
    assert_ne!(a.rte.unwrap().value(&c), b.rte.unwrap().value(&c));
}

fn short_config(epochs: usize) -> nirbench_core::foundation::NeuralConfig {
    let mut cfg = ScenarioConfig::default().neural;
    cfg.max_epochs = epochs;
    cfg
}

#[test]
fn plain_network_descends() {
    let (_, train_b, val_b) = batches();
    let mut s = spec(Architecture::Sdnn);
    s.lambda_physics = 0.0;
    let mut cfg = short_config(150);
    cfg.patience = 1000;
    let (_, state) = train(s, &train_b, &val_b, &PhysicsSet::none(), &cfg, &mut RandomStream::new(5)).unwrap();
    let first = state.history.first().unwrap().train_data;
    let last = state.history.last().unwrap().train_data;
    assert!(last < first, "{first} → {last}");
    assert_eq!(state.history.len(), state.epoch);
}

#[test]
fn training_is_reproducible_and_keeps_the_best_epoch() {
    let d = dataset();
    let (_, train_b, val_b) = batches();
    let s = spec(Architecture::OptimizedPinn);
    let physics = PhysicsSet::build(&s, &train_b, &d.calibration, &d.extinction, &d.config).unwrap();
    let cfg = short_config(60);
    let run = || train(s.clone(), &train_b, &val_b, &physics, &cfg, &mut RandomStream::new(8)).unwrap();
    let (net_a, a) = run();
    let (net_b, b) = run();
    assert_eq!(a.history, b.history);
    assert_eq!(net_a.params, net_b.params);

    let best = a.history.iter().map(|h| h.val_data).fold(f64::INFINITY, f64::min);
    assert_eq!(a.best_val, best);
    let pred = net_a.forward(&val_b.nir, &val_b.pmf).unwrap();
    let val: Vec<f64> = val_b.target_z.iter().copied().collect();
    let loss = nirbench_core::neural::loss_data(&pred, &val).unwrap();
    assert!((loss - best).abs() <= 1e-12 * best);
    // λ is rebalanced every ten epochs and stays within its clamp
    assert!(a.history.iter().all(|h| (1e-4..=10.0).contains(&h.lambda_phys)));
    assert_ne!(a.history[0].lambda_phys, a.history[59].lambda_phys);
}

#[test]
fn early_stopping_respects_patience() {
    let (_, train_b, val_b) = batches();
    let mut cfg = short_config(2000);
    cfg.patience = 5;
    cfg.learning_rate = 0.05;
    let (_, state) = train(spec(Architecture::Sdnn), &train_b, &val_b, &PhysicsSet::none(), &cfg, &mut RandomStream::new(2)).unwrap();
    assert!(state.epoch < 2000);
    assert_eq!(state.epoch - state.best_epoch, 5);
}
