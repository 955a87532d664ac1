use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap().with_requires_grad(true)
}

fn check<F>(store: &mut ParamStore, f: F) -> f64
where
    F: Fn(&mut Tape) -> Result<Var, NumericsError>,
{
    let ids: Vec<ParamId> = store.ids().collect();
    let report = grad_check(store, &ids, 1e-5, f).unwrap();
    assert!(report.elements_checked > 0);
    report.max_relative_error
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.constant(Tensor::vector(vec![0.0, 0.0]));
    let y = tape.softmax(x).unwrap();
    assert_eq!(tape.data(y), &[0.5, 0.5]);
}

#[test]
fn zero_lstm_gives_zero_state() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.constant(Tensor::vector(vec![0.3, -1.0, 2.0]));
    let h0 = tape.constant(Tensor::zeros(&[4]));
    let c0 = tape.constant(Tensor::zeros(&[4]));
    let w = LstmWeights {
        w_ih: tape.constant(Tensor::zeros(&[3, 16])),
        w_hh: tape.constant(Tensor::zeros(&[4, 16])),
        bias: tape.constant(Tensor::zeros(&[16])),
    };
    let (h, c) = lstm_cell(&mut tape, x, h0, c0, &w).unwrap();
    assert_eq!(tape.data(h), &[0.0; 4]);
    assert_eq!(tape.data(c), &[0.0; 4]);
}

#[test]
fn width_one_convolution_picks_the_largest_embedding() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.constant(Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap());
    let w = tape.constant(Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap());
    let b = tape.constant(Tensor::vector(vec![0.0]));
    let conv = tape.conv1d(x, w, b).unwrap();
    let act = tape.relu(conv);
    let pooled = tape.max_over_time(act).unwrap();
    assert_eq!(tape.data(pooled), &[3.0]);
}

#[test]
fn square_has_derivative_two_x() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::scalar(3.0).with_requires_grad(true)).unwrap();
    let mut tape = Tape::new(&store);
    let v = tape.param(x);
    let sq = tape.mul(v, v).unwrap();
    let grads = tape.backward(sq).unwrap();
    assert_eq!(grads.get(x), Some(&[6.0][..]));
    let err = check(&mut store, |t| {
        let v = t.param(x);
        t.mul(v, v)
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn matrix_product_sum_gradients() {
    // d/dA sum(A·B) = 1·Bᵀ, d/dB sum(A·B) = Aᵀ·1.
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap().with_requires_grad(true)).unwrap();
    let b = store.add("b", Tensor::matrix(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap().with_requires_grad(true)).unwrap();
    let mut tape = Tape::new(&store);
    let (va, vb) = (tape.param(a), tape.param(b));
    let prod = tape.matmul(va, vb).unwrap();
    let loss = tape.sum(prod);
    assert_eq!(tape.scalar(loss), 19.0 + 22.0 + 43.0 + 50.0);
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get(a), Some(&[11.0, 15.0, 11.0, 15.0][..]));
    assert_eq!(grads.get(b), Some(&[4.0, 4.0, 6.0, 6.0][..]));
}

#[test]
fn unused_parameter_gets_zero_gradient() {
    let mut store = ParamStore::new();
    let used = store.add("used", Tensor::scalar(2.0).with_requires_grad(true)).unwrap();
    let unused = store.add("unused", Tensor::vector(vec![1.0, 1.0]).with_requires_grad(true)).unwrap();
    let grads = {
        let mut tape = Tape::new(&store);
        let v = tape.param(used);
        let loss = tape.scale(v, 3.0);
        tape.backward(loss).unwrap()
    };
    assert_eq!(grads.get(unused), None);
    store.accumulate(&grads);
    assert_eq!(store.get(unused).grad(), Some(&[0.0, 0.0][..]));
    assert_eq!(store.get(used).grad(), Some(&[3.0][..]));
}

#[test]
fn non_scalar_loss_is_rejected() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(tape.backward(x), Err(NumericsError::NonScalarLoss(_))));
}

#[test]
fn shape_errors_name_the_op() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    let err = tape.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
    let v = tape.constant(Tensor::zeros(&[4]));
    assert!(tape.add(a, v).unwrap_err().to_string().contains("add"));
    assert!(tape.conv1d(a, a, v).unwrap_err().to_string().contains("conv1d"));
}

#[test]
fn lstm_gradients_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let xs = store.add("xs", random_tensor(&mut rng, &[4, 3])).unwrap();
        let w_ih = store.add("w_ih", random_tensor(&mut rng, &[3, 12])).unwrap();
        let w_hh = store.add("w_hh", random_tensor(&mut rng, &[3, 12])).unwrap();
        let bias = store.add("bias", random_tensor(&mut rng, &[12])).unwrap();
        let err = check(&mut store, |t| {
            let w = LstmWeights { w_ih: t.param(w_ih), w_hh: t.param(w_hh), bias: t.param(bias) };
            let x = t.param(xs);
            let zero = t.constant(Tensor::zeros(&[3]));
            let (fwd, _, _) = lstm_sequence(t, x, zero, zero, &w, false)?;
            let (bwd, _, _) = lstm_sequence(t, x, zero, zero, &w, true)?;
            let mut parts = fwd;
            parts.extend(bwd);
            let s = t.stack(&parts)?;
            let sq = t.mul(s, s)?;
            Ok(t.sum(sq))
        });
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn conv_pool_gradients_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut store = ParamStore::new();
        let x = store.add("x", random_tensor(&mut rng, &[5, 3])).unwrap();
        let w = store.add("w", random_tensor(&mut rng, &[4, 2, 3])).unwrap();
        let b = store.add("b", random_tensor(&mut rng, &[4])).unwrap();
        let proj = store.add("proj", random_tensor(&mut rng, &[4])).unwrap();
        let err = check(&mut store, |t| {
            let (x, w, b) = (t.param(x), t.param(w), t.param(b));
            let padded = t.pad_rows(x, 7)?;
            let c = t.conv1d(padded, w, b)?;
            let pooled = t.max_over_time(c)?;
            let p = t.param(proj);
            let m = t.mul(pooled, p)?;
            Ok(t.sum(m))
        });
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn remaining_ops_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let mut store = ParamStore::new();
        let table = store.add("table", random_tensor(&mut rng, &[6, 4])).unwrap();
        let dense = store.add("dense", random_tensor(&mut rng, &[4, 2])).unwrap();
        let bias = store.add("bias", random_tensor(&mut rng, &[2])).unwrap();
        let v = store.add("v", random_tensor(&mut rng, &[4])).unwrap();
        let fixed: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let labels = [1u8, 0, 1];
        let err = check(&mut store, |t| {
            let rows = [Lookup::Row(2), Lookup::Fixed(fixed.clone()), Lookup::Row(2)];
            let e = t.lookup(table, &rows)?;
            let mean_rows = t.mean_over_axis(e, 0)?;
            let mean_cols = t.mean_over_axis(e, 1)?;
            let pv = t.param(v);
            let normed = t.l2_normalize(pv)?;
            let ex = t.exp(normed);
            let mix = t.mul(mean_rows, ex)?;
            let th = t.tanh(mix);
            let both = t.concat(&[th, mean_cols])?;
            let head = t.slice(both, 1, 4)?;
            let dense_w = t.param(dense);
            let logits = t.matmul(e, dense_w)?;
            let b = t.param(bias);
            let logits = t.add(logits, b)?;
            let wide = t.concat(&[logits, e])?;
            let col = t.column(wide, 3)?;
            let probs = t.softmax(logits)?;
            let pos = t.column(probs, 1)?;
            let nll = t.weighted_nll(pos, &labels, 0.7, 1.9)?;
            let sig = t.sigmoid(head);
            let r = t.row(e, 0)?;
            let rr = t.relu(r);
            let extra = t.concat(&[sig, rr, col])?;
            let extra = t.sum(extra);
            t.add(nll, extra)
        });
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn lookup_scatters_into_repeated_rows() {
    let mut store = ParamStore::new();
    let table = store.add("t", Tensor::zeros(&[3, 2]).with_requires_grad(true)).unwrap();
    let mut tape = Tape::new(&store);
    let e = tape.lookup(table, &[Lookup::Row(1), Lookup::Fixed(vec![5.0, 5.0]), Lookup::Row(1)]).unwrap();
    let loss = tape.sum(e);
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get(table), Some(&[0.0, 0.0, 2.0, 2.0, 0.0, 0.0][..]));
}

#[test]
fn max_pool_ties_route_to_first_row() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::matrix(3, 1, vec![2.0, 2.0, 1.0]).unwrap().with_requires_grad(true)).unwrap();
    let mut tape = Tape::new(&store);
    let v = tape.param(x);
    let m = tape.max_over_time(v).unwrap();
    let loss = tape.sum(m);
    assert_eq!(tape.backward(loss).unwrap().get(x), Some(&[1.0, 0.0, 0.0][..]));
}

#[test]
fn nll_clamps_extreme_probabilities() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let p = tape.constant(Tensor::vector(vec![0.0, 1.0]));
    let loss = tape.weighted_nll(p, &[1, 0], 1.0, 1.0).unwrap();
    let expected = -2.0 * PROB_CLAMP.ln();
    assert!((tape.scalar(loss) - expected).abs() < 1e-9);
}

#[test]
fn dropout_rate_zero_is_identity_and_masks_are_seeded() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.constant(Tensor::vector((0..200).map(|i| i as f64).collect()));
    let same = tape.dropout(x, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(same, x);
    let a = tape.dropout(x, 0.25, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = tape.dropout(x, 0.25, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(tape.data(a), tape.data(b));
    for (o, i) in tape.data(a).iter().zip(tape.data(x)) {
        assert!(*o == 0.0 || (*o - i / 0.75).abs() < 1e-12);
    }
    assert!(tape.dropout(x, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
}

#[test]
fn dropout_preserves_expectation() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let x = tape.constant(Tensor::vector(vec![1.0; 20000]));
    let y = tape.dropout(x, 0.4, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let mean = tape.data(y).iter().sum::<f64>() / 20000.0;
    assert!((mean - 1.0).abs() < 0.03, "{mean}");
}

#[test]
fn forward_and_backward_are_bit_reproducible() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let x = store.add("x", random_tensor(&mut rng, &[4, 3])).unwrap();
        let w = store.add("w", random_tensor(&mut rng, &[3, 3])).unwrap();
        let mut tape = Tape::new(&store);
        let (vx, vw) = (tape.param(x), tape.param(w));
        let y = tape.matmul(vx, vw).unwrap();
        let y = tape.dropout(y, 0.3, &mut rng).unwrap();
        let y = tape.tanh(y);
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        (tape.scalar(loss).to_bits(), g.get(w).unwrap().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

#[test]
fn grad_check_rejects_nondeterministic_programs() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::scalar(1.0).with_requires_grad(true)).unwrap();
    let counter = std::cell::Cell::new(0u64);
    let result = grad_check(&mut store, &[x], 1e-4, |t| {
        counter.set(counter.get() + 1);
        let v = t.param(x);
        Ok(t.scale(v, counter.get() as f64))
    });
    assert!(matches!(result, Err(NumericsError::NonDeterministic { .. })));
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-30.0f64..30.0, 1..12)) {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::vector(logits));
        let y = tape.softmax(x).unwrap();
        let total: f64 = tape.data(y).iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(tape.data(y).iter().all(|&p| p > 0.0));
    }

    #[test]
    fn clipped_update_is_parallel_to_raw_gradient(g in prop::collection::vec(-5.0f64..5.0, 2..8), clip in 0.1f64..3.0) {
        let mut store = ParamStore::new();
        for (i, v) in g.iter().enumerate() {
            let id = store.add(format!("p{i}"), Tensor::scalar(0.0).with_requires_grad(true)).unwrap();
            store.accumulate(&{
                let mut gr = Gradients::empty(i + 1);
                gr.slot(id, 1)[0] = *v;
                gr
            });
        }
        let norm = clip_global_norm(&mut store, clip);
        let clipped: Vec<f64> = store.iter().map(|(_, _, t)| t.grad().unwrap()[0]).collect();
        let factor = if norm > clip { clip / norm } else { 1.0 };
        for (c, o) in clipped.iter().zip(&g) {
            prop_assert!((c - o * factor).abs() < 1e-12);
        }
    }
}

#[test]
fn smooth_grad_check_skips_only_kink_crossings() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::vector(vec![3e-5, 0.8, -0.6]).with_requires_grad(true)).unwrap();
    let f = |t: &mut Tape| {
        let v = t.param(x);
        let r = t.relu(v);
        let s = t.mul(r, r)?;
        Ok(t.sum(s))
    };
    let plain = grad_check(&mut store, &[x], 1e-4, f).unwrap();
    assert!(plain.max_relative_error > 0.1);
    assert_eq!(plain.skipped_at_kinks, 0);
    let smooth = grad_check_smooth(&mut store, &[x], 1e-4, f).unwrap();
    assert_eq!((smooth.elements_checked, smooth.skipped_at_kinks), (2, 1));
    assert!(smooth.max_relative_error < 1e-8);
}

#[test]
fn branch_pattern_tracks_pooling_winners() {
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::matrix(2, 1, vec![0.2, 0.3]).unwrap()).unwrap();
    let b = store.add("b", Tensor::matrix(2, 1, vec![0.4, 0.3]).unwrap()).unwrap();
    let pattern = |id| {
        let mut t = Tape::new(&store);
        let v = t.param(id);
        t.max_over_time(v).unwrap();
        t.branch_pattern()
    };
    assert_eq!(pattern(a), vec![1]);
    assert_eq!(pattern(b), vec![0]);
}
