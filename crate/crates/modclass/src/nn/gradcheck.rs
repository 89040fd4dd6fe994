//! Central finite-difference verification of every layer's gradients.
//!
//! Each check builds a tiny single-layer graph (plus one composite residual
//! unit), evaluates the scalar loss `sum(w .* y)` for a fixed random `w`,
//! and compares analytic parameter/input gradients against central
//! differences with step 1e-5, entirely in f64. The comparison metric is
//! `||ga - gn|| / max(||ga|| + ||gn||, eps)`.
//!
//! This module is the independent oracle for the backward passes: it only
//! ever calls the forward path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Layer, ModelGraph, Stage};
use super::init::init_he_uniform;
use super::layers::{BatchNorm, Conv1d, Dense};
use super::loss::softmax_xent;
use super::tensor::Tensor;
use crate::error::Result;

const FD_STEP: f64 = 1e-5;

/// Outcome of one layer-kind check over several random instances.
#[derive(Debug, Clone)]
pub struct GradCheckResult {
    pub name: String,
    pub instances: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Case {
    name: &'static str,
    batch: usize,
    channels: usize,
    len: usize,
    build: fn() -> Vec<Layer<f64>>,
}

fn cases() -> Vec<Case> {
    vec![
        Case {
            name: "conv1d_k5",
            batch: 2,
            channels: 2,
            len: 8,
            build: || vec![Layer::Conv1d(Conv1d::new(2, 3, 5).unwrap())],
        },
        Case {
            name: "conv1d_k1",
            batch: 2,
            channels: 3,
            len: 6,
            build: || vec![Layer::Conv1d(Conv1d::new(3, 2, 1).unwrap())],
        },
        Case {
            name: "batchnorm",
            batch: 4,
            channels: 3,
            len: 5,
            build: || vec![Layer::BatchNorm(BatchNorm::new(3))],
        },
        Case {
            name: "relu",
            batch: 3,
            channels: 2,
            len: 7,
            build: || vec![Layer::Relu],
        },
        Case {
            name: "selu",
            batch: 3,
            channels: 2,
            len: 7,
            build: || vec![Layer::Selu],
        },
        Case {
            name: "dropout",
            batch: 2,
            channels: 3,
            len: 6,
            build: || vec![Layer::Dropout { rate: 0.3 }],
        },
        Case {
            name: "maxpool",
            batch: 3,
            channels: 2,
            len: 8,
            build: || vec![Layer::MaxPool2],
        },
        Case {
            name: "global_avgpool",
            batch: 3,
            channels: 4,
            len: 6,
            build: || vec![Layer::GlobalAvgPool],
        },
        Case {
            name: "dense",
            batch: 3,
            channels: 1,
            len: 5,
            build: || vec![Layer::Flatten, Layer::Dense(Dense::new(5, 3))],
        },
        Case {
            name: "residual_unit",
            batch: 2,
            channels: 3,
            len: 6,
            build: || {
                vec![Layer::Residual {
                    body: vec![
                        Layer::Conv1d(Conv1d::new(3, 3, 3).unwrap()),
                        Layer::BatchNorm(BatchNorm::new(3)),
                        Layer::Relu,
                        Layer::Conv1d(Conv1d::new(3, 3, 3).unwrap()),
                        Layer::BatchNorm(BatchNorm::new(3)),
                        Layer::Relu,
                    ],
                }]
            },
        },
    ]
}

fn build_graph(case: &Case, seed: u64) -> ModelGraph<f64> {
    let mut g = ModelGraph {
        id: case.name.to_string(),
        input_channels: case.channels,
        input_len: case.len,
        num_classes: 1,
        stages: vec![Stage { label: case.name.to_string(), layers: (case.build)() }],
    };
    init_he_uniform(&mut g, seed);
    // Perturb BN statistics and biases away from their fixed points so the
    // check does not sit on special values.
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0xB1A5, 0));
    g.for_each_param(&mut |p, _| {
        for v in p.data_mut() {
            *v += rng.gen_range(-0.05..=0.05);
        }
    });
    g
}

/// Loss functional: run a training-mode forward with a cloned model and a
/// fixed dropout stream, contract the output with `w`.
fn loss_of(model: &ModelGraph<f64>, x: &Tensor<f64>, w: &[f64], drop_seed: u64) -> f64 {
    let mut m = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(drop_seed);
    let (y, _) = m.forward_train(x.clone(), &mut rng).expect("forward");
    y.data().iter().zip(w).map(|(a, b)| a * b).sum()
}

fn param_coords(model: &mut ModelGraph<f64>) -> Vec<(usize, usize)> {
    let mut coords = Vec::new();
    let mut idx = 0;
    model.for_each_param(&mut |p, _| {
        for e in 0..p.numel() {
            coords.push((idx, e));
        }
        idx += 1;
    });
    coords
}

fn perturb(model: &ModelGraph<f64>, coord: (usize, usize), delta: f64) -> ModelGraph<f64> {
    let mut m = model.clone();
    let mut idx = 0;
    m.for_each_param(&mut |p, _| {
        if idx == coord.0 {
            p.data_mut()[coord.1] += delta;
        }
        idx += 1;
    });
    m
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-12)
}

fn check_case(case: &Case, instances: usize, tolerance: f64, seed: u64) -> GradCheckResult {
    let mut max_rel = 0.0f64;
    for inst in 0..instances {
        let inst_seed = mix(seed, case.name.len() as u64, inst as u64);
        let model = build_graph(case, inst_seed);
        let mut data_rng = ChaCha8Rng::seed_from_u64(mix(inst_seed, 1, 1));
        let x = Tensor::from_vec(
            &[case.batch, case.channels, case.len],
            (0..case.batch * case.channels * case.len)
                .map(|_| data_rng.gen_range(-1.5..=1.5))
                .collect(),
        )
        .unwrap();
        let drop_seed = mix(inst_seed, 2, 2);

        // Analytic gradients.
        let mut m = model.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(drop_seed);
        let (y, cache) = m.forward_train(x.clone(), &mut rng).expect("forward");
        let w: Vec<f64> = (0..y.numel()).map(|_| data_rng.gen_range(-1.0..=1.0)).collect();
        let dy = Tensor::from_vec(y.shape(), w.clone()).unwrap();
        let dx = m.backward(cache, dy).expect("backward");

        let mut analytic = Vec::new();
        m.for_each_param(&mut |_, g| analytic.extend_from_slice(g.data()));
        analytic.extend_from_slice(dx.data());

        // Central differences over every parameter and input coordinate.
        let mut numeric = Vec::with_capacity(analytic.len());
        for coord in param_coords(&mut model.clone()) {
            let lp = loss_of(&perturb(&model, coord, FD_STEP), &x, &w, drop_seed);
            let lm = loss_of(&perturb(&model, coord, -FD_STEP), &x, &w, drop_seed);
            numeric.push((lp - lm) / (2.0 * FD_STEP));
        }
        for e in 0..x.numel() {
            let mut xp = x.clone();
            xp.data_mut()[e] += FD_STEP;
            let mut xm = x.clone();
            xm.data_mut()[e] -= FD_STEP;
            let lp = loss_of(&model, &xp, &w, drop_seed);
            let lm = loss_of(&model, &xm, &w, drop_seed);
            numeric.push((lp - lm) / (2.0 * FD_STEP));
        }

        max_rel = max_rel.max(rel_err(&analytic, &numeric));
    }
    GradCheckResult {
        name: case.name.to_string(),
        instances,
        max_rel_err: max_rel,
        tolerance,
    }
}

fn check_softmax_xent(instances: usize, tolerance: f64, seed: u64) -> GradCheckResult {
    let mut max_rel = 0.0f64;
    for inst in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x50F7, inst as u64));
        let (n, c) = (4, 6);
        let logits = Tensor::from_vec(
            &[n, c],
            (0..n * c).map(|_| rng.gen_range(-2.0..=2.0)).collect(),
        )
        .unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let (_, grad) = softmax_xent(&logits, &labels).unwrap();

        let mut numeric = Vec::with_capacity(n * c);
        for e in 0..n * c {
            let mut lp = logits.clone();
            lp.data_mut()[e] += FD_STEP;
            let mut lm = logits.clone();
            lm.data_mut()[e] -= FD_STEP;
            let (loss_p, _) = softmax_xent(&lp, &labels).unwrap();
            let (loss_m, _) = softmax_xent(&lm, &labels).unwrap();
            numeric.push((loss_p - loss_m) / (2.0 * FD_STEP));
        }
        max_rel = max_rel.max(rel_err(grad.data(), &numeric));
    }
    GradCheckResult {
        name: "softmax_xent".into(),
        instances,
        max_rel_err: max_rel,
        tolerance,
    }
}

/// Run the full gradient suite: every layer kind on `instances` random
/// instances each, in f64, against central finite differences.
pub fn run_all(instances: usize, tolerance: f64, seed: u64) -> Result<Vec<GradCheckResult>> {
    let mut results: Vec<GradCheckResult> = cases()
        .iter()
        .map(|case| check_case(case, instances, tolerance, seed))
        .collect();
    results.push(check_softmax_xent(instances, tolerance, seed));
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_kind_passes_finite_differences() {
        let results = run_all(20, 1e-4, 0xC0FFEE).unwrap();
        assert_eq!(results.len(), 11);
        for r in &results {
            assert_eq!(r.instances, 20);
            assert!(
                r.passed(),
                "{}: max relative error {} over tolerance {}",
                r.name,
                r.max_rel_err,
                r.tolerance
            );
        }
    }
}
