use natgalore::autodiff::Graph;
use natgalore::Error;
use natgalore_core::Matrix;

fn approx(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn linear_least_squares_matches_hand_gradient() {
    // Φ = ‖W x − t‖², ∇W = 2 (W x − t) xᵀ
    let w = Matrix::from_rows(&[&[0.5, -1.0, 2.0], &[1.5, 0.25, -0.75]]);
    let x = Matrix::from_rows(&[&[1.0], &[-2.0], &[0.5]]);
    let t = Matrix::from_rows(&[&[0.3], &[-0.7]]);

    let mut g = Graph::new();
    let wv = g.param("w", w.clone());
    let xv = g.input(x.clone());
    let tv = g.input(t.clone());
    let y = g.matmul(wv, xv).unwrap();
    let r = g.sub(y, tv).unwrap();
    let loss = g.sum_squares(r).unwrap();
    g.forward().unwrap();
    let grads = g.backward(loss).unwrap();

    let resid = [
        0.5 * 1.0 + -1.0 * -2.0 + 2.0 * 0.5 - 0.3,
        1.5 * 1.0 + 0.25 * -2.0 + -0.75 * 0.5 + 0.7,
    ];
    let xs = [1.0, -2.0, 0.5];
    for i in 0..2 {
        for j in 0..3 {
            assert!(approx(grads["w"][(i, j)], 2.0 * resid[i] * xs[j], 1e-15));
        }
    }
    let expected_loss = resid[0] * resid[0] + resid[1] * resid[1];
    assert!(approx(g.scalar(loss).unwrap(), expected_loss, 1e-15));
}

#[test]
fn uniform_logits_give_log_v() {
    for v in [2usize, 7, 56] {
        let mut g = Graph::new();
        let logits = g.param("z", Matrix::from_fn(3, v, |_, _| 0.7));
        let loss = g.cross_entropy(logits, &[0, v - 1, v / 2]).unwrap();
        g.forward().unwrap();
        assert!((g.scalar(loss).unwrap() - (v as f64).ln()).abs() <= 1e-15);
    }
}

#[test]
fn confident_correct_logits_saturate() {
    let mut g = Graph::new();
    let logits = g.input(Matrix::from_rows(&[&[20.0, 0.0, 0.0], &[0.0, 0.0, 20.0]]));
    let loss = g.cross_entropy(logits, &[0, 2]).unwrap();
    g.forward().unwrap();
    assert!(g.scalar(loss).unwrap() < 1e-3);
}

#[test]
fn two_class_matches_binary_cross_entropy() {
    // Two logits (0, a) give p = σ(a) for class 1.
    let cases = [(0.3, 1usize), (-2.5, 0), (4.0, 1), (1e-3, 0)];
    let mut g = Graph::new();
    let logits = g.input(Matrix::from_fn(cases.len(), 2, |i, j| if j == 1 { cases[i].0 } else { 0.0 }));
    let labels: Vec<usize> = cases.iter().map(|c| c.1).collect();
    let loss = g.cross_entropy(logits, &labels).unwrap();
    g.forward().unwrap();
    let closed: f64 = cases
        .iter()
        .map(|&(a, y)| {
            let p = 1.0 / (1.0 + (-a).exp());
            let y = y as f64;
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / cases.len() as f64;
    assert!((g.scalar(loss).unwrap() - closed).abs() <= 1e-12);
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut g = Graph::new();
    let w = g.param("w", Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]));
    let b = g.param("b", Matrix::from_rows(&[&[0.5, -0.5]]));
    let x = g.input(Matrix::from_rows(&[&[1.0, -1.0]]));
    let h = g.matmul_t(x, w).unwrap();
    let h = g.add_row(h, b).unwrap();
    let h = g.tanh(h).unwrap();
    let loss = g.cross_entropy(h, &[1]).unwrap();
    g.forward().unwrap();
    let grads = g.backward_with_seed(loss, 0.0).unwrap();
    assert!(grads.values().all(|m| m.as_slice().iter().all(|x| *x == 0.0)));
    assert_eq!(grads.len(), 2);
}

#[test]
fn backward_before_forward_is_rejected() {
    let mut g = Graph::new();
    let w = g.param("w", Matrix::identity(2));
    let loss = g.sum_squares(w).unwrap();
    assert!(matches!(g.backward(loss), Err(Error::Usage(_))));
    g.forward().unwrap();
    assert!(g.backward(loss).is_ok());
}

#[test]
fn out_of_range_target_is_rejected() {
    let mut g = Graph::new();
    let z = g.input(Matrix::zeros(2, 3));
    assert!(matches!(g.cross_entropy(z, &[0, 3]), Err(Error::InvalidInput(_))));
    assert!(g.cross_entropy(z, &[0]).is_err());
}

#[test]
fn shared_parameter_accumulates_across_uses() {
    // Φ = Σ (w·wᵀ) entries squared; compare with a finite difference.
    let w0 = Matrix::from_rows(&[&[0.3, -0.2], &[0.1, 0.4]]);
    let phi = |w: &Matrix| {
        let mut g = Graph::new();
        let a = g.param("w", w.clone());
        let p = g.matmul_t(a, a).unwrap();
        let l = g.sum_squares(p).unwrap();
        g.forward().unwrap();
        (g.scalar(l).unwrap(), g.backward(l).unwrap())
    };
    let (_, grads) = phi(&w0);
    let h = 1e-6;
    for k in 0..4 {
        let mut up = w0.clone();
        up.as_mut_slice()[k] += h;
        let mut down = w0.clone();
        down.as_mut_slice()[k] -= h;
        let fd = (phi(&up).0 - phi(&down).0) / (2.0 * h);
        assert!((grads["w"].as_slice()[k] - fd).abs() <= 1e-8);
    }
}
