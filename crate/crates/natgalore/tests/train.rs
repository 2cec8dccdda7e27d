use std::io::BufReader;

use natgalore::tasks::{make_task, TaskKind};
use natgalore::train::{
    batch_indices, read_csv, records_to_csv, train, TrainConfig, CSV_HEADER,
};
use natgalore::Error;
use natgalore_core::{Mode, OptimizerConfig};

fn quiet(budget: u64) -> TrainConfig {
    TrainConfig { budget, timing: false, ..TrainConfig::default() }
}

#[test]
fn zero_budget_is_rejected() {
    let task = make_task(TaskKind::LowrankRegression, 0).unwrap();
    let err = train(&task, &OptimizerConfig::default(), &quiet(0)).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));
}

#[test]
fn zero_learning_rate_leaves_loss_unchanged() {
    for kind in TaskKind::ALL {
        let task = make_task(kind, 1).unwrap();
        for mode in Mode::ALL {
            let cfg = OptimizerConfig { mode, lr: 0.0, ..OptimizerConfig::default() };
            let out = train(&task, &cfg, &quiet(20)).unwrap();
            let first = &out.records[0];
            assert!(out.records.iter().all(|r| r.train_loss == first.train_loss && r.val_loss == first.val_loss));
            assert_eq!(out.optimizer.step_index(), 20);
        }
    }
}

#[test]
fn adam_fits_low_rank_regression() {
    let task = make_task(TaskKind::LowrankRegression, 0).unwrap();
    let cfg = OptimizerConfig { mode: Mode::Adam, lr: 1e-2, ..OptimizerConfig::default() };
    let out = train(&task, &cfg, &quiet(500)).unwrap();
    let initial = out.records[0].train_loss;
    let last = out.final_record().unwrap().train_loss;
    assert!(last < 0.1 * initial, "{initial} -> {last}");
    assert!(out.diverged.is_none());
}

#[test]
fn records_follow_cadence_and_budget() {
    let task = make_task(TaskKind::MlpClassify, 0).unwrap();
    let tc = TrainConfig { eval_every: 7, ..quiet(30) };
    let out = train(&task, &OptimizerConfig::default(), &tc).unwrap();
    let steps: Vec<u64> = out.records.iter().map(|r| r.step).collect();
    assert_eq!(steps, [0, 7, 14, 21, 28, 30]);
    assert_eq!(out.optimizer.step_index(), 30);
    for r in &out.records {
        assert!((r.perplexity - r.val_loss.exp()).abs() <= 1e-12 * r.perplexity);
        assert_eq!(r.wall_ms, 0);
        assert_eq!(r.mode, Mode::NaturalGalore);
    }
    let best = out.best_record().unwrap();
    assert!(out.records.iter().all(|r| best.val_loss <= r.val_loss));
}

#[test]
fn same_seed_reproduces_bitwise() {
    let task = make_task(TaskKind::CharLm, 4).unwrap();
    let a = train(&task, &OptimizerConfig::default(), &quiet(40)).unwrap();
    let b = train(&task, &OptimizerConfig::default(), &quiet(40)).unwrap();
    assert_eq!(records_to_csv(&a.records), records_to_csv(&b.records));
    assert_eq!(a.optimizer, b.optimizer);
}

#[test]
fn batches_depend_only_on_seed_and_step() {
    let a = batch_indices(3, 17, 1000, 32);
    assert_eq!(a, batch_indices(3, 17, 1000, 32));
    assert_ne!(a, batch_indices(3, 18, 1000, 32));
    assert_ne!(a, batch_indices(4, 17, 1000, 32));
    assert!(a.iter().all(|&i| i < 1000));
}

#[test]
fn huge_learning_rate_is_reported_as_divergence() {
    let task = make_task(TaskKind::LowrankRegression, 0).unwrap();
    let cfg = OptimizerConfig { mode: Mode::Adam, lr: 1e4, ..OptimizerConfig::default() };
    let out = train(&task, &cfg, &quiet(100)).unwrap();
    let d = out.diverged.expect("diverges");
    assert!(d.step < 100);
    assert!(!out.records.is_empty());
}

#[test]
fn csv_round_trips_with_header() {
    let task = make_task(TaskKind::LowrankRegression, 0).unwrap();
    let out = train(&task, &OptimizerConfig::default(), &quiet(10)).unwrap();
    let text = records_to_csv(&out.records);
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(CSV_HEADER, "step,train_loss,val_loss,perplexity,wall_ms,mode,seed");
    let back = read_csv(BufReader::new(text.as_bytes())).unwrap();
    assert_eq!(back, out.records);
    assert!(read_csv(BufReader::new("step,loss\n1,2\n".as_bytes())).is_err());
}
