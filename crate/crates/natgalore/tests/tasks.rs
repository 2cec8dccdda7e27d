use std::collections::BTreeSet;

use natgalore::gradcheck;
use natgalore::tasks::{make_task, make_task_with_corpus, Dataset, Inputs, TaskKind, Targets};
use natgalore::Error;

#[test]
fn same_seed_gives_identical_task() {
    for kind in TaskKind::ALL {
        let a = make_task(kind, 11).unwrap();
        let b = make_task(kind, 11).unwrap();
        assert_eq!(a, b, "{kind}");
        let c = make_task(kind, 12).unwrap();
        match kind {
            // Fixed corpus, so only the initialization moves with the seed.
            TaskKind::CharLm => assert_ne!(a.params, c.params),
            // Starts from W = 0 on every seed.
            TaskKind::LowrankRegression => {
                assert_ne!(a.train, c.train);
                assert_eq!(a.params, c.params);
            }
            TaskKind::MlpClassify => {
                assert_ne!(a.train, c.train);
                assert_ne!(a.params, c.params);
            }
        }
    }
}

#[test]
fn planted_optimum_reaches_noise_floor() {
    let task = make_task(TaskKind::LowrankRegression, 5).unwrap();
    let mut params = task.params.clone();
    params.insert("w".into(), task.planted.clone().unwrap());
    let loss = task.loss(&params, &task.train).unwrap();
    let floor = task.noise_floor.unwrap();
    assert!((loss - floor).abs() <= 1e-12 * floor, "{loss} vs {floor}");
    // ½·E‖ε‖² = ½·64·σ²
    assert!((floor - 0.5 * 64.0 * 0.01).abs() < 0.05 * floor);
}

#[test]
fn planted_target_has_rank_four() {
    let task = make_task(TaskKind::LowrankRegression, 2).unwrap();
    let w = task.planted.unwrap();
    let svd = natgalore_core::linalg::compact_svd(&w, 6).unwrap();
    assert!(svd.sigma[3] > 1e-3 * svd.sigma[0]);
    assert!(svd.sigma[4] <= 1e-10 * svd.sigma[0]);
}

#[test]
fn vocabulary_is_distinct_corpus_bytes() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/corpus.txt");
    let bytes = std::fs::read(path).unwrap();
    assert!(bytes.len() <= 1 << 20);
    let mut seen = [false; 256];
    bytes.iter().for_each(|&b| seen[b as usize] = true);
    let distinct = seen.iter().filter(|s| **s).count();

    let task = make_task(TaskKind::CharLm, 0).unwrap();
    let vocab = task.vocab.as_ref().unwrap();
    assert_eq!(vocab.len(), distinct);
    assert_eq!(task.params["w2"].rows(), distinct);

    let custom = make_task_with_corpus(TaskKind::CharLm, 0, Some(b"abcabcabd")).unwrap();
    assert_eq!(custom.vocab.unwrap(), b"abcd".to_vec());
}

#[test]
fn char_lm_targets_follow_their_context() {
    let corpus = b"hello world, hello there";
    let task = make_task_with_corpus(TaskKind::CharLm, 0, Some(corpus)).unwrap();
    let vocab = task.vocab.clone().unwrap();
    let Inputs::Tokens { ids, context, .. } = &task.train.inputs else { panic!() };
    let Targets::Classes(next) = &task.train.targets else { panic!() };
    for (i, &t) in next.iter().enumerate() {
        let ctx: Vec<u8> = ids[i * context..(i + 1) * context].iter().map(|&k| vocab[k]).collect();
        assert_eq!(&ctx[..], &corpus[i..i + context]);
        assert_eq!(vocab[t], corpus[i + context]);
    }
}

#[test]
fn invalid_token_id_is_rejected() {
    let task = make_task(TaskKind::CharLm, 0).unwrap();
    let Inputs::Tokens { context, vocab, .. } = task.train.inputs.clone() else { panic!() };
    let bad = Dataset {
        inputs: Inputs::Tokens { ids: vec![vocab; context], context, vocab },
        targets: Targets::Classes(vec![0]),
    };
    assert!(matches!(task.loss(&task.params, &bad), Err(Error::InvalidInput(_))));
}

#[test]
fn unknown_kind_is_rejected() {
    assert!("resnet".parse::<TaskKind>().is_err());
}

#[test]
fn reverse_mode_matches_finite_differences_on_every_task() {
    for kind in TaskKind::ALL {
        let task = make_task(kind, 3).unwrap();
        let gc = gradcheck::check_task(&task, 16, 3).unwrap();
        let expected = task.parameter_count().min(gradcheck::MAX_CHECKED);
        assert_eq!(gc.checked, expected);
        assert!(gc.passed(gradcheck::TOLERANCE), "{kind}: {gc:?}");
    }
}

#[test]
fn tasks_use_matrices_of_at_least_64() {
    let names: BTreeSet<&str> = ["w", "w1"].into();
    for kind in TaskKind::ALL {
        let task = make_task(kind, 0).unwrap();
        for (name, m) in &task.params {
            if names.contains(name.as_str()) {
                assert!(m.rows() >= 64 && m.cols() >= 64, "{kind} {name} {:?}", m.shape());
            }
        }
    }
}
