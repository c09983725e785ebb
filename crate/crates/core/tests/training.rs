use bnf_core::bitplane::Shape;
use bnf_core::data::{generate_synthetic, FixedDataset, SynthKind, SynthSpec};
use bnf_core::layers::AxisPolicy;
use bnf_core::model::{FirstLayerMode, ModelConfig, Network, NetworkOptions};
use bnf_core::train::{
    cross_validate, load_checkpoint, loso_split, read_metrics_csv, save_checkpoint, train, write_metrics_csv, Split, TrainConfig,
};
use bnf_core::{Error, Execution};

fn model(mode: FirstLayerMode, k: Option<usize>) -> ModelConfig {
    let mut cfg = ModelConfig::from_architecture("8-C3+MP2+FC8+Softmax", Shape::hwc(2, 8, 1).unwrap(), AxisPolicy::TimeOnly, 2).unwrap();
    cfg.dropout = 0.25;
    cfg.with_mode(mode, k).unwrap()
}

fn data(kind: SynthKind, per_class: usize, seed: u64, subjects: u32) -> FixedDataset {
    let mut spec = SynthSpec::new(kind, Shape::hwc(2, 8, 1).unwrap(), 8, per_class, seed);
    spec.subjects = subjects;
    generate_synthetic(&spec).unwrap()
}

fn quick(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        initial_lr: 3e-3,
        lr_schedule: vec![],
        batch_size: 32,
        seed,
        ..Default::default()
    }
}

#[test]
fn float_model_fits_linear_task() {
    let ds = data(SynthKind::Linear, 200, 1, 1);
    let out = train(&model(FirstLayerMode::Baseline, None), NetworkOptions::float_path(), &ds, None, &quick(20, 1)).unwrap();
    let best = out
        .metrics
        .iter()
        .filter(|m| m.split == Split::Train)
        .map(|m| m.error_pct)
        .fold(f64::INFINITY, f64::min);
    assert!(best <= 2.0, "train error {best}");
}

#[test]
fn same_seed_same_trajectory() {
    let ds = data(SynthKind::BitSeparable, 64, 2, 1);
    let val = data(SynthKind::BitSeparable, 32, 3, 1);
    let cfg = model(FirstLayerMode::Bil, Some(4));
    let a = train(&cfg, NetworkOptions::default(), &ds, Some(&val), &quick(3, 9)).unwrap();
    let b = train(&cfg, NetworkOptions::default(), &ds, Some(&val), &quick(3, 9)).unwrap();
    assert_eq!(a.metrics, b.metrics);
    for (p, q) in a.network.params().iter().zip(b.network.params()) {
        assert_eq!(p.value, q.value);
    }
}

#[test]
fn execution_policies_agree_bitwise() {
    let ds = data(SynthKind::BitParity, 48, 4, 1);
    let cfg = model(FirstLayerMode::Dbi, None);
    let mut tc = quick(2, 5);
    tc.execution = Execution::Sequential;
    let seq = train(&cfg, NetworkOptions::default(), &ds, None, &tc).unwrap();
    tc.execution = Execution::Parallel;
    let par = train(&cfg, NetworkOptions::default(), &ds, None, &tc).unwrap();
    assert_eq!(seq.metrics, par.metrics);
    for (p, q) in seq.network.params().iter().zip(par.network.params()) {
        assert_eq!(p.value, q.value);
    }
}

#[test]
fn metrics_cover_every_epoch_and_split() {
    let ds = data(SynthKind::BitSeparable, 32, 6, 1);
    let val = data(SynthKind::BitSeparable, 16, 7, 1);
    let out = train(&model(FirstLayerMode::Fpid, None), NetworkOptions::default(), &ds, Some(&val), &quick(4, 1)).unwrap();
    assert_eq!(out.metrics.len(), 8);
    assert!(out.metrics.iter().all(|m| (0.0..=100.0).contains(&m.error_pct)));
    let last = out.metrics.last().unwrap();
    assert_eq!(out.final_val_error, Some(last.error_pct));
    let (epoch, best) = out.best_val_error.unwrap();
    assert!(best <= last.error_pct && epoch < 4);
}

#[test]
fn epochs_zero_rejected() {
    let ds = data(SynthKind::BitSeparable, 8, 1, 1);
    let r = train(&model(FirstLayerMode::Dbi, None), NetworkOptions::default(), &ds, None, &quick(0, 1));
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn empty_or_mismatched_data_rejected() {
    let ds = data(SynthKind::BitSeparable, 8, 1, 1);
    let empty = ds.subset(&[]);
    let cfg = model(FirstLayerMode::Dbi, None);
    assert!(train(&cfg, NetworkOptions::default(), &empty, None, &quick(1, 1)).is_err());
    let other = generate_synthetic(&SynthSpec::new(SynthKind::BitSeparable, Shape::hwc(1, 8, 1).unwrap(), 8, 4, 1)).unwrap();
    assert!(train(&cfg, NetworkOptions::default(), &other, None, &quick(1, 1)).is_err());
}

#[test]
fn diverging_run_reports_epoch() {
    let ds = data(SynthKind::Linear, 64, 1, 1);
    let mut tc = quick(3, 1);
    tc.initial_lr = 1e308;
    match train(&model(FirstLayerMode::Baseline, None), NetworkOptions::float_path(), &ds, None, &tc) {
        Err(Error::NonFiniteLoss { epoch }) => assert!(epoch < 3),
        other => panic!("expected a non-finite loss error, got {:?}", other.err()),
    }
}

#[test]
fn quantized_gradients_have_parameter_shapes() {
    let ds = data(SynthKind::BitSeparable, 8, 1, 1);
    for (mode, k) in [(FirstLayerMode::Fpid, None), (FirstLayerMode::Dbi, None), (FirstLayerMode::Bil, Some(3))] {
        let net = Network::new(&model(mode, k), NetworkOptions::default(), 3).unwrap();
        let idx: Vec<usize> = (0..ds.len()).collect();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        let step = net.step(Execution::Sequential, net.encode(&ds, &idx).unwrap(), ds.labels(), &mut rng).unwrap();
        assert!(step.loss.is_finite());
        for (g, p) in step.grads.iter().zip(net.params()) {
            assert_eq!(g.shape(), p.value.shape(), "{}", p.name);
            assert!(g.all_finite());
        }
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let ds = data(SynthKind::BitSeparable, 32, 1, 1);
    let out = train(&model(FirstLayerMode::Bil, Some(4)), NetworkOptions::default(), &ds, None, &quick(2, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = save_checkpoint(&out.network, dir.path()).unwrap();
    assert!(files.contains(&"manifest.json".to_string()));
    let back = load_checkpoint(dir.path()).unwrap();
    let (e1, _) = out.network.evaluate(Execution::Sequential, &ds, 64).unwrap();
    let (e2, _) = back.evaluate(Execution::Sequential, &ds, 64).unwrap();
    assert!((e1 - e2).abs() <= 100.0 / ds.len() as f64, "{e1} vs {e2}");
}

#[test]
fn metrics_csv_round_trip() {
    let ds = data(SynthKind::BitSeparable, 16, 1, 1);
    let val = data(SynthKind::BitSeparable, 8, 2, 1);
    let out = train(&model(FirstLayerMode::Dbi, None), NetworkOptions::default(), &ds, Some(&val), &quick(2, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.csv");
    write_metrics_csv(&path, &out.metrics).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("epoch,split,error_pct,loss,lr\n"));
    assert_eq!(read_metrics_csv(&path).unwrap(), out.metrics);
}

#[test]
fn loso_eight_subjects() {
    let ds = data(SynthKind::BitSeparable, 40, 1, 8);
    let subjects: Vec<u32> = (0..8).collect();
    let (plan, folds) = loso_split(&ds, &subjects).unwrap();
    assert_eq!(plan.len(), 8);
    let mut seen = vec![0; ds.len()];
    for f in &folds {
        assert_eq!(f.train.len() + f.val.len(), ds.len());
        assert!(f.val.subjects().iter().all(|&s| s == f.held_out));
        assert!(f.train.subjects().iter().all(|&s| s != f.held_out));
        for (i, &s) in ds.subjects().iter().enumerate() {
            if s == f.held_out {
                seen[i] += 1;
            }
        }
    }
    assert!(seen.iter().all(|&n| n == 1));
}

#[test]
fn cross_validation_averages_folds() {
    let ds = data(SynthKind::BitSeparable, 24, 1, 3);
    let r = cross_validate(&model(FirstLayerMode::Dbi, None), NetworkOptions::default(), &ds, &[0, 1, 2], &quick(2, 1)).unwrap();
    assert_eq!(r.folds.len(), 3);
    let mean = r.folds.iter().map(|f| f.final_val_error).sum::<f64>() / 3.0;
    assert!((mean - r.mean_final_val_error).abs() < 1e-12);
}
