use mfhnp_core::aggregation::Aggregation;
use mfhnp_core::datasets::{make_split, synth_task, FidelityDataset, ScenarioRecord, Split, SplitMode, SplitSpec};
use mfhnp_core::experiment::{
    config_digest, evaluate, evaluate_ids, init_model, predict_scenarios, scenario_metrics, train, EvalReport, ExperimentConfig, ScenarioScore,
    TaskData, TrainConfig,
};
use mfhnp_core::gaussian::DiagGaussian;
use mfhnp_core::np::{model_elbo, ContextTargetBatch, Fidelity, LatentNoise, NpConfig, Point, Variant};
use mfhnp_core::seeds::stream;
use mfhnp_core::Error;

fn task(seed: u64, mode: SplitMode) -> (TaskData, Split) {
    let (low, high) = synth_task(40, 40, 4, 0.05, seed).unwrap();
    let spec = SplitSpec { mode, n_train_low: 16, n_train_high: 6, n_val: 6, n_test: 8, seed };
    let split = make_split(&high.ids(), &spec).unwrap();
    (TaskData::new(low, high), split)
}

fn np_config(variant: Variant, aggregation: Aggregation) -> NpConfig {
    let mut cfg = NpConfig::new(variant, aggregation, 1, 32, 1, 64);
    cfg.d_z = 6;
    cfg.d_r = 6;
    cfg.encoder_hidden = vec![24];
    cfg.decoder_hidden = vec![24, 24];
    cfg.k_samples = 2;
    cfg.s_samples = 2;
    cfg
}

fn train_config(seed: u64, max_epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 5e-3,
        batch_size: 16,
        patience: 1000,
        max_epochs,
        seed,
        log_space_outputs: false,
        eval_latent_samples: 8,
        ..TrainConfig::climate()
    }
}

/// Loss on a fixed full batch with fixed noise, independent of the training loop.
fn fixed_loss(model: &mfhnp_core::MfhnpModel, data: &TaskData, split: &Split) -> f64 {
    let half = |pts: Vec<Point<f64>>, f| {
        let mut c = pts;
        let t = c.split_off(c.len() / 2);
        ContextTargetBatch::new(f, c, t)
    };
    let pts = |d: &FidelityDataset, ids: &[u64]| ids.iter().map(|&id| Point::new(d.get(id).unwrap().x.clone(), d.get(id).unwrap().y_samples[0].clone())).collect::<Vec<_>>();
    let low = half(pts(&data.low, &split.low_train), Fidelity::Low);
    let high = half(pts(&data.high, &split.high_train), Fidelity::High);
    let noise = LatentNoise::draw(model.config(), &mut stream(99, 0));
    model_elbo(model, Some(&low), &high, &noise).unwrap().loss
}

#[test]
fn zero_epochs_returns_the_initial_model() {
    let (data, split) = task(1, SplitMode::Nested);
    let cfg = train_config(3, 0);
    let model = init_model(np_config(Variant::HnpMean, Aggregation::Bayesian), &cfg).unwrap();
    let out = train(model.clone(), &data, &split, &cfg).unwrap();
    assert_eq!(out.model.flat_params(), model.flat_params());
    assert!(out.history.epochs.is_empty() && out.history.best_epoch.is_none());
}

#[test]
fn training_is_deterministic() {
    let (data, split) = task(2, SplitMode::Nested);
    let cfg = train_config(4, 5);
    let run = || {
        let m = init_model(np_config(Variant::HnpAs, Aggregation::Bayesian), &cfg).unwrap();
        train(m, &data, &split, &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    assert_eq!(a.model.to_checkpoint().to_text(), b.model.to_checkpoint().to_text());
    let other = TrainConfig { seed: 5, ..cfg.clone() };
    let m = init_model(np_config(Variant::HnpAs, Aggregation::Bayesian), &other).unwrap();
    assert_ne!(train(m, &data, &split, &other).unwrap().history, a.history);
}

#[test]
fn optimization_sanity_across_seeds() {
    let mut improved = 0;
    for seed in 0..20 {
        let (data, split) = task(seed, SplitMode::Nested);
        let cfg = train_config(seed, 200);
        let model = init_model(np_config(Variant::HnpMean, Aggregation::Bayesian), &cfg).unwrap();
        let before = fixed_loss(&model, &data, &split);
        let after = fixed_loss(&train(model, &data, &split, &cfg).unwrap().model, &data, &split);
        if after < before {
            improved += 1;
        }
    }
    assert!(improved >= 19, "{improved}/20 seeds improved");
}

#[test]
fn early_stopping_keeps_the_best_validation_epoch() {
    let (data, split) = task(6, SplitMode::Nested);
    let cfg = TrainConfig { patience: 3, ..train_config(6, 60) };
    let out = train(init_model(np_config(Variant::Sf, Aggregation::Mean), &cfg).unwrap(), &data, &split, &cfg).unwrap();
    let h = &out.history;
    let best = h.best_val_nll().unwrap();
    assert!(h.epochs.iter().all(|e| best <= e.val_nll));
    let b = h.best_epoch.unwrap();
    if h.epochs.len() < 60 {
        assert_eq!(h.epochs.len() - 1 - b, 3, "stopped after exactly `patience` stale epochs");
    }
    let recomputed = evaluate_ids(&out.model, &data, &split, &split.val, &cfg).unwrap();
    assert_eq!(recomputed.nll, best);
}

#[test]
fn mf_rejects_non_nested_training_data() {
    let (data, split) = task(7, SplitMode::NonNested);
    let cfg = train_config(0, 2);
    let model = init_model(np_config(Variant::Mf, Aggregation::Bayesian), &cfg).unwrap();
    assert!(matches!(train(model, &data, &split, &cfg), Err(Error::Unpaired { .. })));
    let model = init_model(np_config(Variant::Sf, Aggregation::Bayesian), &cfg).unwrap();
    assert!(train(model, &data, &split, &cfg).is_ok());
    let (data, split) = task(7, SplitMode::Nested);
    let model = init_model(np_config(Variant::Mf, Aggregation::Bayesian), &cfg).unwrap();
    assert!(train(model, &data, &split, &cfg).is_ok());
}

#[test]
fn width_mismatch_is_rejected() {
    let (data, split) = task(8, SplitMode::Nested);
    let cfg = train_config(0, 1);
    let mut np = np_config(Variant::Sf, Aggregation::Bayesian);
    np.d_y_high = 63;
    let model = init_model(np, &cfg).unwrap();
    assert!(matches!(train(model.clone(), &data, &split, &cfg), Err(Error::LengthMismatch { .. })));
    assert!(evaluate(&model, &data, &split, &cfg).is_err());
}

#[test]
fn divergence_is_reported() {
    let (data, split) = task(9, SplitMode::Nested);
    let cfg = TrainConfig { learning_rate: 1e300, ..train_config(0, 5) };
    let model = init_model(np_config(Variant::Sf, Aggregation::Bayesian), &cfg).unwrap();
    let r = train(model, &data, &split, &cfg).err();
    assert!(matches!(r, Some(Error::Diverged { .. })), "{r:?}");
}

#[test]
fn evaluation_is_repeatable_and_aggregates_exactly() {
    let (data, split) = task(10, SplitMode::Nested);
    let cfg = train_config(1, 3);
    let model = train(init_model(np_config(Variant::HnpMeanStd, Aggregation::Bayesian), &cfg).unwrap(), &data, &split, &cfg).unwrap().model;
    let a = evaluate(&model, &data, &split, &cfg).unwrap();
    let b = evaluate(&model, &data, &split, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.per_scenario.len(), split.test.len());
    let n = a.per_scenario.len() as f64;
    assert_eq!(a.mae, a.per_scenario.iter().map(|s| s.mae).sum::<f64>() / n);
    assert_eq!(a.nll, a.per_scenario.iter().map(|s| s.nll).sum::<f64>() / n);
    assert!(a.mae >= 0.0);
    assert_eq!(a.config_digest, config_digest(model.config(), &cfg));
    assert_eq!(EvalReport::from_text(&a.to_text()).unwrap(), a);
    let preds = predict_scenarios(&model, &data, &split, &split.test, &cfg).unwrap();
    assert_eq!(preds.len(), split.test.len());
    assert!(evaluate_ids(&model, &data, &split, &[], &cfg).is_err());
}

#[test]
fn report_text_rejects_inconsistent_headlines() {
    let r = EvalReport::from_scores(vec![ScenarioScore { id: 1, mae: 1.0, nll: 2.0 }, ScenarioScore { id: 2, mae: 3.0, nll: 4.0 }], "abc".into()).unwrap();
    assert_eq!((r.mae, r.nll), (2.0, 3.0));
    let text = r.to_text().replace("mae 2.0000000000000000e0", "mae 2.5000000000000000e0");
    assert!(EvalReport::from_text(&text).is_err());
    assert!(EvalReport::from_scores(Vec::new(), String::new()).is_err());
}

fn record(y: Vec<Vec<f64>>) -> ScenarioRecord {
    ScenarioRecord { id: 0, x: vec![0.0], y_samples: y }
}

#[test]
fn perfect_predictor_has_zero_mae() {
    let truth = vec![3.0, -1.5, 7.25];
    let pred = DiagGaussian::new(truth.clone(), vec![0.5; 3]).unwrap();
    let (mae, _) = scenario_metrics(&pred, &record(vec![truth]), false).unwrap();
    assert_eq!(mae, 0.0);
}

#[test]
fn unit_gaussian_nll_at_zero() {
    let pred = DiagGaussian::standard(5);
    let (mae, nll) = scenario_metrics(&pred, &record(vec![vec![0.0; 5]; 3]), false).unwrap();
    let oracle = 0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((nll - oracle).abs() < 1e-12);
    assert!((nll - 0.918939).abs() < 1e-6);
    assert_eq!(mae, 0.0);
}

#[test]
fn log_space_metrics_on_zero_incidence() {
    assert_eq!(0.0f64.ln_1p(), 0.0);
    let mu = vec![0.3, -0.2, 1.1, 0.0];
    let pred = DiagGaussian::new(mu.clone(), vec![1.0; 4]).unwrap();
    let (mae, nll) = scenario_metrics(&pred, &record(vec![vec![0.0; 4]]), true).unwrap();
    let oracle = mu.iter().map(|m: &f64| m.exp_m1().abs()).sum::<f64>() / 4.0;
    assert!((mae - oracle).abs() < 1e-15);
    let nll_oracle = mu.iter().map(|m| 0.5 * (2.0 * std::f64::consts::PI).ln() + 0.5 * m * m).sum::<f64>() / 4.0;
    assert!((nll - nll_oracle).abs() < 1e-12);
}

#[test]
fn log_space_rejects_outputs_at_or_below_minus_one() {
    let (mut data, split) = task(11, SplitMode::Nested);
    data.high = data.high.map_y(|v| v - 5.0);
    let cfg = TrainConfig { log_space_outputs: true, ..train_config(0, 1) };
    let model = init_model(np_config(Variant::Sf, Aggregation::Bayesian), &cfg).unwrap();
    assert!(matches!(train(model, &data, &split, &cfg), Err(Error::Domain(_))));
}

#[test]
fn config_file_round_trip_and_validation() {
    let cfg = ExperimentConfig { np: np_config(Variant::HnpMc, Aggregation::Mean), train: TrainConfig::as_sir() };
    let text = cfg.to_text();
    assert_eq!(ExperimentConfig::from_text(&text).unwrap(), cfg);
    assert!(ExperimentConfig::from_text(&format!("{text}train.momentum = 0.9\n")).is_err());
    let other = ExperimentConfig { train: TrainConfig { seed: 1, ..TrainConfig::as_sir() }, ..cfg.clone() };
    assert_ne!(cfg.digest(), other.digest());
    assert_eq!((TrainConfig::as_sir().learning_rate, TrainConfig::as_sir().batch_size, TrainConfig::as_sir().patience), (1e-3, 128, 1000));
    assert_eq!((TrainConfig::climate().learning_rate, TrainConfig::climate().batch_size, TrainConfig::climate().patience), (5e-3, 32, 250));
    for bad in [TrainConfig { patience: 0, ..TrainConfig::as_sir() }, TrainConfig { batch_size: 0, ..TrainConfig::as_sir() }, TrainConfig { learning_rate: 0.0, ..TrainConfig::as_sir() }] {
        assert!(bad.validate().is_err());
    }
}
