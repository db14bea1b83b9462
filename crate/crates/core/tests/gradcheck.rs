mod common;

use std::sync::Arc;

use common::grad::{actor_check, critic_check, EPS, REL};
use mecslice::agent::Architecture;
use mecslice::autonet::{Activation, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn critic_loss_gradient_matches_finite_differences() {
    for seed in 0..100 {
        let bad = critic_check(seed);
        assert!(bad.is_empty(), "{bad:?}");
    }
}

#[test]
fn graph_actor_chain_matches_finite_differences() {
    for seed in 0..100 {
        let bad = actor_check(Architecture::Gcn, 2, seed);
        assert!(bad.is_empty(), "{bad:?}");
    }
}

#[test]
fn dense_actor_chain_matches_finite_differences() {
    for seed in 0..100 {
        let bad = actor_check(Architecture::Dense, 1, seed);
        assert!(bad.is_empty(), "{bad:?}");
    }
}

/// Every tape operation in one scalar function of two inputs.
fn composite(tape: &mut Tape, x: Var, w: Var) -> Var {
    let p = tape.leaf(Tensor::matrix(2, 2, vec![0.6, 0.4, 0.3, 0.7]));
    let b = tape.leaf(Tensor::row(vec![0.1, -0.2, 0.3]));
    let xw = tape.matmul(x, w).unwrap();
    let pxw = tape.block_matmul(p, xw).unwrap();
    let z = tape.add_bias(pxw, b).unwrap();
    let t = tape.activate(z, Activation::Tanh).unwrap();
    let s = tape.activate(z, Activation::Sigmoid).unwrap();
    let r = tape.activate(z, Activation::Relu).unwrap();
    let ts = tape.mul(t, s).unwrap();
    let d = tape.sub(ts, r).unwrap();
    let e = tape.add(d, z).unwrap();
    let rows = tape.concat(&[e, t], 0).unwrap();
    let cols = tape.concat(&[rows, rows], 1).unwrap();
    let flat = tape.reshape(cols, 1, 24).unwrap();
    let groups = Arc::new(vec![0..5, 7..12, 12..13, 20..24]);
    let sm = tape.activate(flat, Activation::GroupSoftmax(groups)).unwrap();
    let weights = tape.leaf(Tensor::row((0..24).map(|i| (i as f64 * 0.37).sin()).collect()));
    let weighted = tape.mul(sm, weights).unwrap();
    let scaled = tape.scale(weighted, 1.7);
    let mean = tape.mean(e);
    let total = tape.sum(scaled);
    tape.add(total, mean).unwrap()
}

#[test]
fn tape_operations_match_finite_differences() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs: Vec<f64> = (0..8).map(|_| rng.random_range(-1.5..1.5)).collect();
        let mut ws: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eval = |xs: &[f64], ws: &[f64]| {
            let mut tape = Tape::new();
            let x = tape.leaf(Tensor::matrix(2, 4, xs.to_vec()));
            let w = tape.leaf(Tensor::matrix(4, 3, ws.to_vec()));
            let out = composite(&mut tape, x, w);
            tape.value(out).values()[0]
        };
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(2, 4, xs.clone()));
        let w = tape.leaf(Tensor::matrix(4, 3, ws.clone()));
        let out = composite(&mut tape, x, w);
        let grads = tape.backward(out).unwrap();
        let (gx, gw) = (grads.get(x), grads.get(w));
        for i in 0..xs.len() {
            let orig = xs[i];
            xs[i] = orig + EPS;
            let up = eval(&xs, &ws);
            xs[i] = orig - EPS;
            let down = eval(&xs, &ws);
            xs[i] = orig;
            let n = (up - down) / (2.0 * EPS);
            assert!(common::close(gx[i], n, REL), "seed {seed} x[{i}]: {} vs {n}", gx[i]);
        }
        for i in 0..ws.len() {
            let orig = ws[i];
            ws[i] = orig + EPS;
            let up = eval(&xs, &ws);
            ws[i] = orig - EPS;
            let down = eval(&xs, &ws);
            ws[i] = orig;
            let n = (up - down) / (2.0 * EPS);
            assert!(common::close(gw[i], n, REL), "seed {seed} w[{i}]: {} vs {n}", gw[i]);
        }
    }
}
