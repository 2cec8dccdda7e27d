use natgalore::checkpoint::{self, from_bytes, to_bytes};
use natgalore::tasks::{make_task, TaskKind};
use natgalore::train::{records_to_csv, train, train_from, TrainConfig};
use natgalore::Error;
use natgalore_core::{Mode, Optimizer, OptimizerConfig};

fn quiet(budget: u64) -> TrainConfig {
    TrainConfig { budget, eval_every: 10, timing: false, ..TrainConfig::default() }
}

fn cfg(mode: Mode) -> OptimizerConfig {
    OptimizerConfig { mode, lr: 3e-2, refresh_period: 15, ..OptimizerConfig::default() }
}

#[test]
fn round_trip_is_bitwise() {
    for mode in Mode::ALL {
        let task = make_task(TaskKind::MlpClassify, 2).unwrap();
        let out = train(&task, &cfg(mode), &quiet(23)).unwrap();
        let bytes = to_bytes(&out.optimizer);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, out.optimizer);
        assert_eq!(to_bytes(&back), bytes);
    }
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    for kind in TaskKind::ALL {
        let task = make_task(kind, 6).unwrap();
        let full = train(&task, &cfg(Mode::NaturalGalore), &quiet(50)).unwrap();

        let first = train(&task, &cfg(Mode::NaturalGalore), &quiet(20)).unwrap();
        let path = dir.path().join(format!("{kind}.ckpt"));
        checkpoint::save(&first.optimizer, &path).unwrap();
        let rest = train_from(&task, checkpoint::load(&path).unwrap(), &quiet(50)).unwrap();

        assert_eq!(rest.optimizer, full.optimizer, "{kind}");
        let tail: Vec<_> = full.records.iter().filter(|r| r.step >= 20).cloned().collect();
        assert_eq!(records_to_csv(&rest.records), records_to_csv(&tail), "{kind}");
    }
}

#[test]
fn resuming_past_the_budget_is_rejected() {
    let task = make_task(TaskKind::LowrankRegression, 0).unwrap();
    let out = train(&task, &cfg(Mode::Galore), &quiet(12)).unwrap();
    assert!(matches!(train_from(&task, out.optimizer, &quiet(5)), Err(Error::InvalidInput(_))));
}

#[test]
fn empty_optimizer_round_trips() {
    let opt = Optimizer::new(cfg(Mode::Adam)).unwrap();
    assert_eq!(from_bytes(&to_bytes(&opt)).unwrap(), opt);
}

fn sample() -> Vec<u8> {
    let task = make_task(TaskKind::LowrankRegression, 0).unwrap();
    to_bytes(&train(&task, &cfg(Mode::NaturalGalore), &quiet(6)).unwrap().optimizer)
}

#[test]
fn wrong_version_is_rejected() {
    let mut bytes = sample();
    bytes[4..8].copy_from_slice(&(checkpoint::VERSION + 1).to_le_bytes());
    let Err(Error::Checkpoint(msg)) = from_bytes(&bytes) else { panic!("accepted") };
    assert!(msg.contains("version"), "{msg}");
}

#[test]
fn corruption_is_detected() {
    let bytes = sample();
    for pos in [9, bytes.len() / 2, bytes.len() - 5] {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x40;
        assert!(matches!(from_bytes(&bad), Err(Error::Checkpoint(_))), "byte {pos}");
    }
    assert!(matches!(from_bytes(&bytes[..bytes.len() - 9]), Err(Error::Checkpoint(_))));
    assert!(matches!(from_bytes(b"NOPE00000000"), Err(Error::Checkpoint(_))));
    assert!(matches!(from_bytes(&[]), Err(Error::Checkpoint(_))));
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(checkpoint::load(dir.path().join("absent")), Err(Error::Io(_))));
}
