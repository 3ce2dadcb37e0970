use modlens::corpus::{generate_splits, CorpusSpec, OpKind, SplitSet};
use modlens::model::checkpoint::load_checkpoint;
use modlens::model::{ModelConfig, Params};
use modlens::train::*;

fn small_splits() -> SplitSet {
    let mut spec = CorpusSpec::preset(OpKind::Add, 2);
    spec.d1_size = 2_000;
    spec.d2_size = 300;
    spec.d3_size = 300;
    generate_splits(&spec).unwrap()
}

fn short_config(iterations: usize) -> TrainConfig {
    TrainConfig {
        max_iterations: iterations,
        eval_interval: 40,
        eval_subset_size: 100,
        loss_mask: LossMaskKind::AnswerOnly,
        ..TrainConfig::default()
    }
}

fn init() -> Params<f32> {
    Params::init(&ModelConfig::addition(), 4).unwrap()
}

#[test]
fn zero_iterations_returns_the_initial_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(init(), &small_splits(), &short_config(0), Some(dir.path())).unwrap();
    assert_eq!(out.iterations, 0);
    assert!(out.metrics.is_empty());
    assert_eq!(out.final_params, init());
    assert!(dir.path().join(INITIAL_CHECKPOINT).exists());
    assert!(!dir.path().join(FINAL_CHECKPOINT).exists());
    let csv = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert!(parse_metrics_csv(&csv).unwrap().is_empty());
}

#[test]
fn training_is_deterministic_and_loss_decreases() {
    let splits = small_splits();
    let a = train(init(), &splits, &short_config(160), None).unwrap();
    let b = train(init(), &splits, &short_config(160), None).unwrap();
    assert_eq!(a.final_params, b.final_params);
    let strip = |rows: &[MetricsRow]| -> Vec<(usize, u64, u64)> {
        rows.iter().map(|r| (r.iteration, r.train_loss.to_bits(), r.id_acc.to_bits())).collect()
    };
    assert_eq!(strip(&a.metrics), strip(&b.metrics));
    let losses: Vec<f64> = a.metrics.iter().map(|r| r.train_loss).collect();
    assert!(losses.len() >= 3);
    assert!(losses[1] < losses[0] && losses[2] < losses[1], "{losses:?}");
}

#[test]
fn checkpoints_and_metrics_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig { milestones: vec![0.0, 1.0], ..short_config(80) };
    let out = train(init(), &small_splits(), &cfg, Some(dir.path())).unwrap();
    let rows = parse_metrics_csv(&std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.iteration).collect::<Vec<_>>(), vec![0, 40, 80]);
    let (params, _, meta) = load_checkpoint(&dir.path().join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(params, out.final_params);
    assert_eq!(meta.iteration, 80);
    // Threshold 0 is crossed at the first evaluation; 1.0 is out of reach.
    assert_eq!(out.milestones.len(), 1);
    assert_eq!(out.milestones[0].threshold, 0.0);
    assert!(dir.path().join(milestone_file_name(0.0)).exists());
}

#[test]
fn invalid_configs_are_rejected() {
    let splits = small_splits();
    for cfg in [
        TrainConfig { batch_size: 0, ..short_config(1) },
        TrainConfig { learning_rate: 0.0, ..short_config(1) },
        TrainConfig { milestones: vec![0.5, 0.2], ..short_config(1) },
    ] {
        assert!(train(init(), &splits, &cfg, None).is_err());
    }
}

#[test]
fn metrics_csv_round_trips() {
    let rows = vec![MetricsRow {
        iteration: 250,
        train_loss: 0.125,
        train_acc: 0.5,
        id_acc: 0.25,
        ood_acc: 0.0,
        oracle_match_rate: 0.75,
        wall_clock_seconds: 1.5,
    }];
    let text = metrics_csv(&rows);
    assert!(text.starts_with(METRICS_HEADER));
    assert_eq!(parse_metrics_csv(&text).unwrap(), rows);
}
