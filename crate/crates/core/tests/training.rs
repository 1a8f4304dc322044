use dib_core::data::{ColumnKind, ColumnSchema, DatasetTable, Schema, TaskKind};
use dib_core::math::stream_rng;
use dib_core::model::{Bottleneck, Checkpoint, DibModel, ModelConfig, PredictionHead};
use dib_core::synthetic::DiscreteJoint;
use dib_core::training::{evaluate, EvalOptions, MemorySink, TrainConfig, Trainer, Trajectory};

fn small_model_config(bottleneck: Bottleneck) -> ModelConfig {
    ModelConfig {
        embedding_dim: 2,
        encoder_hidden: vec![32, 32],
        decoder_hidden: vec![64, 64],
        bottleneck,
    }
}

fn fit(table: &DatasetTable, config: TrainConfig, model: ModelConfig) -> (Trajectory, Vec<Checkpoint>) {
    let widths = table.features().iter().map(|f| f.encoded_width()).collect();
    let head = PredictionHead::Classification { classes: table.output_width() };
    let model = DibModel::new(model, widths, head, &mut stream_rng(config.seed, 0)).unwrap();
    let mut sink = MemorySink::default();
    let (_, t) = Trainer::new(config, table, model).unwrap().run(&mut sink).unwrap();
    (t, sink.saved)
}

fn pair_table() -> DatasetTable {
    DiscreteJoint::intervention_pair().sample_table(10_000, 5, [0.5, 0.4, 0.1]).unwrap()
}

fn short_schedule() -> TrainConfig {
    TrainConfig {
        annealing_steps: 3000,
        warmup_steps: Some(1500),
        learning_rate: 1e-3,
        eval_every: 100,
        checkpoint_every: 500,
        seed: 21,
        ..TrainConfig::default()
    }
}

#[test]
fn identical_seeds_give_identical_runs() {
    let table = DiscreteJoint::intervention_pair().sample(600, 1).unwrap();
    let cfg = TrainConfig {
        annealing_steps: 100,
        eval_every: 10,
        checkpoint_every: 50,
        batch_size: 32,
        seed: 4,
        ..TrainConfig::default()
    };
    let (a, ca) = fit(&table, cfg.clone(), small_model_config(Bottleneck::Distributed));
    let (b, cb) = fit(&table, cfg.clone(), small_model_config(Bottleneck::Distributed));
    assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    assert_eq!(ca.len(), cb.len());
    for (x, y) in ca.iter().zip(&cb) {
        assert_eq!(x.to_bytes(), y.to_bytes());
    }
    let (c, _) = fit(&table, TrainConfig { seed: 5, ..cfg }, small_model_config(Bottleneck::Distributed));
    assert_ne!(a.to_csv().unwrap(), c.to_csv().unwrap());
}

#[test]
fn constant_target_needs_no_information() {
    let mut schema = Schema::new(
        vec![ColumnSchema { name: "x".into(), kind: ColumnKind::Continuous }],
        "y",
        TaskKind::Binary,
    );
    schema.classes = Some(vec!["0".into(), "1".into()]);
    let headers = vec!["x".to_string(), "y".to_string()];
    let records = (0..400).map(|i| vec![format!("{}", (i as f64 * 0.1).sin()), "1".into()]).collect();
    let table = DatasetTable::from_records(&schema, &headers, records).unwrap();
    let cfg = TrainConfig {
        annealing_steps: 1500,
        warmup_steps: Some(100),
        learning_rate: 3e-3,
        eval_every: 50,
        checkpoint_every: 1000,
        batch_size: 64,
        ..TrainConfig::default()
    };
    let (t, _) = fit(&table, cfg, small_model_config(Bottleneck::Distributed));
    let last = t.last().unwrap();
    assert!(last.metrics.cross_entropy.unwrap() < 0.01, "{:?}", last.metrics);
    assert!(last.kl_total_bits < 0.01, "{}", last.kl_total_bits);
}

#[test]
fn checkpoints_reproduce_logged_metrics() {
    let table = DiscreteJoint::intervention_pair().sample(800, 2).unwrap();
    let cfg = TrainConfig {
        annealing_steps: 200,
        eval_every: 25,
        checkpoint_every: 40,
        batch_size: 32,
        eval_samples: 3,
        seed: 8,
        ..TrainConfig::default()
    };
    let (t, saved) = fit(&table, cfg.clone(), small_model_config(Bottleneck::Distributed));
    assert_eq!(saved.len(), t.checkpoints.len());
    let validation = table.encode_rows(&table.splits().validation);
    let opts = EvalOptions { samples: cfg.eval_samples, seed: cfg.seed };
    for c in &saved {
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        let point = t.points.iter().find(|p| p.step == back.meta.step).unwrap();
        let e = evaluate(&back.model, &validation, table.target_spec(), &opts).unwrap();
        assert_eq!(e.error, point.val_error);
        assert_eq!(e.kl_bits, point.kl_bits);
        assert_eq!(back.meta.beta, point.beta);
        assert_eq!(back.meta.kl_total_bits, point.kl_total_bits);
    }
}

#[test]
fn fused_and_distributed_agree_at_low_beta() {
    let table = pair_table();
    let cfg = TrainConfig { annealing_steps: 1, ..short_schedule() };
    let ce = |b| {
        let (t, _) = fit(&table, cfg.clone(), small_model_config(b));
        let mut tail: Vec<f64> = t
            .points
            .iter()
            .filter(|p| p.step > 750)
            .map(|p| p.metrics.cross_entropy.unwrap())
            .collect();
        tail.sort_by(f64::total_cmp);
        tail[tail.len() / 2]
    };
    let (fused, distributed) = (ce(Bottleneck::Fused), ce(Bottleneck::Distributed));
    assert!((fused - distributed).abs() <= 0.02, "fused {fused} distributed {distributed}");
}

#[test]
fn raising_beta_does_not_improve_the_fit() {
    let table = pair_table();
    let (t, _) = fit(&table, short_schedule(), small_model_config(Bottleneck::Distributed));
    let at_checkpoints: Vec<_> = t
        .checkpoints
        .iter()
        .map(|c| t.points.iter().find(|p| p.step == c.step).unwrap())
        .filter(|p| p.step >= t.config.warmup())
        .collect();
    assert!(at_checkpoints.len() >= 3);
    for w in at_checkpoints.windows(2) {
        assert!(w[1].beta > w[0].beta);
        assert!(
            w[1].val_error >= w[0].val_error - 0.02,
            "step {} error {} after step {} error {}",
            w[1].step,
            w[1].val_error,
            w[0].step,
            w[0].val_error
        );
    }
}
