mod common;

use std::collections::BTreeMap;

use common::*;
use natgalore_core::{AdamConfig, AdamState, EpsPlacement, Matrix, Mode, Optimizer, OptimizerConfig, Side};
use proptest::prelude::*;

fn one(name: &str, g: Matrix) -> BTreeMap<String, Matrix> {
    BTreeMap::from([(name.to_string(), g)])
}

#[test]
fn adam_matches_scalar_reference() {
    let mut r = rng(301);
    for (bias, inside) in [(true, true), (true, false), (false, true), (false, false)] {
        let cfg = AdamConfig {
            bias_correction: bias,
            eps_placement: if inside { EpsPlacement::InsideSqrt } else { EpsPlacement::OutsideSqrt },
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(1, 1, cfg).unwrap();
        let mut oracle = ScalarAdam::new(0.9, 0.999, 1e-8);
        oracle.bias_correction = bias;
        oracle.eps_inside = inside;
        for _ in 0..10 {
            let g = gaussian(&mut r);
            let u = st.update(&Matrix::from_rows(&[&[g]])).unwrap()[(0, 0)];
            let expected = oracle.direction(g);
            assert!((u - expected).abs() <= 1e-14 * expected.abs().max(1.0), "{u} vs {expected}");
            assert!((st.m()[(0, 0)] - oracle.m).abs() <= 1e-14);
            assert!((st.v()[(0, 0)] - oracle.v).abs() <= 1e-14);
        }
    }
}

#[test]
fn adam_second_moment_converges_monotonically() {
    let mut st = AdamState::new(1, 2, AdamConfig::default()).unwrap();
    let mut prev = f64::INFINITY;
    for t in 0..200 {
        let sign = if t % 3 == 0 { -1.0 } else { 1.0 };
        st.update(&Matrix::from_rows(&[&[0.7 * sign, -0.7 * sign]])).unwrap();
        let gap = (st.v()[(0, 0)] - 0.49).abs();
        assert!(gap < prev);
        prev = gap;
    }
}

#[test]
fn adam_mode_matches_scalar_reference_trajectory() {
    let cfg = OptimizerConfig {
        mode: Mode::Adam,
        lr: 0.05,
        ..OptimizerConfig::default()
    };
    let mut opt = Optimizer::new(cfg).unwrap();
    opt.add_param("x", Matrix::from_rows(&[&[0.25]])).unwrap();
    let mut oracle = ScalarAdam::new(0.9, 0.999, 1e-8);
    let mut x = 0.25_f64;
    for _ in 0..100 {
        let theta = opt.param("x").unwrap()[(0, 0)];
        // Φ(x) = ½(x − 3)² + sin x
        let g = theta - 3.0 + theta.cos();
        opt.step(&one("x", Matrix::from_rows(&[&[g]]))).unwrap();
        let g_ref = x - 3.0 + x.cos();
        x -= 0.05 * oracle.direction(g_ref);
        let got = opt.param("x").unwrap()[(0, 0)];
        assert!((got - x).abs() <= 1e-14, "{got} vs {x}");
    }
}

#[test]
fn disabled_history_reduces_to_galore_bitwise() {
    let mut r = rng(302);
    let base = OptimizerConfig {
        lr: 1e-2,
        rank: 3,
        refresh_period: 7,
        ..OptimizerConfig::default()
    };
    let mut galore = Optimizer::new(OptimizerConfig { mode: Mode::Galore, ..base.clone() }).unwrap();
    let mut natural = Optimizer::new(OptimizerConfig {
        mode: Mode::NaturalGalore,
        history: 0,
        ..base
    })
    .unwrap();
    let theta = random_matrix(&mut r, 10, 8);
    galore.add_param("w", theta.clone()).unwrap();
    natural.add_param("w", theta).unwrap();
    for _ in 0..40 {
        let g = random_matrix(&mut r, 10, 8);
        galore.step(&one("w", g.clone())).unwrap();
        natural.step(&one("w", g)).unwrap();
        assert_eq!(galore.param("w").unwrap().as_slice(), natural.param("w").unwrap().as_slice());
    }
}

/// With one history column the inverse Fisher only rescales the projected
/// gradient, so Adam sees a positively scaled gradient and the walk towards
/// a distant minimum descends monotonically.
#[test]
fn quadratic_bowl_descends_every_step() {
    let mut r = rng(303);
    let target = random_matrix(&mut r, 6, 8).scaled(10.0);
    let cfg = OptimizerConfig {
        mode: Mode::NaturalGalore,
        lr: 0.1,
        lambda: 1e-2,
        rank: 6,
        history: 1,
        ..OptimizerConfig::default()
    };
    let mut opt = Optimizer::new(cfg).unwrap();
    opt.add_param("w", Matrix::zeros(6, 8)).unwrap();
    let loss = |w: &Matrix| 0.5 * w.sub(&target).unwrap().frobenius_norm().powi(2);
    let mut prev = loss(opt.param("w").unwrap());
    for step in 0..50 {
        let g = opt.param("w").unwrap().sub(&target).unwrap();
        opt.step(&one("w", g)).unwrap();
        let cur = loss(opt.param("w").unwrap());
        assert!(cur < prev, "step {step}: {cur} >= {prev}");
        prev = cur;
    }
}

#[test]
fn back_projection_preserves_update_norm() {
    let mut r = rng(304);
    for mode in [Mode::Galore, Mode::NaturalGalore] {
        for side in [Side::Left, Side::Right] {
            let cfg = OptimizerConfig {
                mode,
                lr: 0.03,
                alpha: 0.5,
                rank: 3,
                side: Some(side),
                ..OptimizerConfig::default()
            };
            let mut opt = Optimizer::new(cfg).unwrap();
            opt.add_param("w", random_matrix(&mut r, 9, 7)).unwrap();
            for _ in 0..10 {
                let before = opt.param("w").unwrap().clone();
                let info = opt.step(&one("w", random_matrix(&mut r, 9, 7))).unwrap();
                let delta = opt.param("w").unwrap().sub(&before).unwrap().frobenius_norm();
                let expected = 0.03 * 0.5 * info[0].update_norm;
                assert!((delta - expected).abs() <= 1e-10 * expected.max(1e-300));
            }
        }
    }
}

/// For a single-row parameter at rank 1 the left factor is the 1×1 matrix
/// `[1]`, so the projected problem is the full problem and GaLore must
/// reproduce full-space Adam.
#[test]
fn full_rank_row_parameter_matches_full_adam() {
    let mut r = rng(305);
    let target = random_matrix(&mut r, 1, 12);
    let base = OptimizerConfig {
        lr: 0.02,
        rank: 1,
        refresh_period: 1,
        min_dim_for_projection: 1,
        ..OptimizerConfig::default()
    };
    let mut adam = Optimizer::new(OptimizerConfig { mode: Mode::Adam, ..base.clone() }).unwrap();
    let mut galore = Optimizer::new(OptimizerConfig { mode: Mode::Galore, ..base }).unwrap();
    adam.add_param("w", Matrix::zeros(1, 12)).unwrap();
    galore.add_param("w", Matrix::zeros(1, 12)).unwrap();
    assert!(galore.slot("w").unwrap().is_projected());
    for _ in 0..100 {
        let ga = adam.param("w").unwrap().sub(&target).unwrap();
        let gg = galore.param("w").unwrap().sub(&target).unwrap();
        adam.step(&one("w", ga)).unwrap();
        galore.step(&one("w", gg)).unwrap();
        let la = adam.param("w").unwrap().sub(&target).unwrap().frobenius_norm();
        let lg = galore.param("w").unwrap().sub(&target).unwrap().frobenius_norm();
        assert!((la - lg).abs() <= 1e-8);
    }
}

#[test]
fn memory_report_matches_live_buffers() {
    let mut r = rng(306);
    for mode in Mode::ALL {
        let cfg = OptimizerConfig {
            mode,
            rank: 4,
            history: 3,
            ..OptimizerConfig::default()
        };
        let mut opt = Optimizer::new(cfg).unwrap();
        opt.add_param("w1", Matrix::zeros(16, 16)).unwrap();
        opt.add_param("w2", Matrix::zeros(24, 10)).unwrap();
        opt.add_param("b", Matrix::zeros(1, 16)).unwrap();
        for _ in 0..4 {
            let grads = opt
                .slots()
                .iter()
                .map(|s| {
                    let (n, m) = s.theta().shape();
                    (s.name().to_string(), random_matrix(&mut r, n, m))
                })
                .collect();
            opt.step(&grads).unwrap();
        }
        let formula = opt.memory_report();
        let live = opt.allocated_report();
        assert_eq!(formula.slots.len(), live.slots.len());
        for (f, l) in formula.slots.iter().zip(&live.slots) {
            assert_eq!(f.parameters, l.parameters, "{mode} {}", f.name);
            assert_eq!(f.projector, l.projector, "{mode} {}", f.name);
            assert_eq!(f.moments, l.moments, "{mode} {}", f.name);
            assert_eq!(f.history, l.history, "{mode} {}", f.name);
            assert_eq!(f.gradients, l.gradients, "{mode} {}", f.name);
        }
        let w1 = &formula.slots[0];
        match mode {
            Mode::Adam => assert_eq!(w1.moment_ratio(), 1.0),
            _ => assert_eq!(w1.moment_ratio(), 4.0 / 16.0),
        }
        assert_eq!(w1.history > 0, mode == Mode::NaturalGalore);
    }
}

proptest! {
    #![proptest_config(cases(32))]

    #[test]
    fn adam_updates_bounded_and_state_valid(seed in any::<u64>(), len in 1usize..50) {
        let mut r = rng(seed);
        let mut st = AdamState::new(3, 4, AdamConfig::default()).unwrap();
        let mut twin = st.clone();
        for t in 0..len {
            let g = random_matrix(&mut r, 3, 4);
            let u = st.update(&g).unwrap();
            twin.update(&g).unwrap();
            prop_assert!(u.max_abs() <= 10.0);
            prop_assert!(st.v().as_slice().iter().all(|v| *v >= 0.0));
            prop_assert_eq!(st.step_count(), t as u64 + 1);
        }
        prop_assert_eq!(st, twin);
    }
}
