//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use surrogate_core::dataset::Dataset;
use surrogate_core::forest::{ForestParams, MaxFeatures, Node, Tree};
use surrogate_core::model::{FeaturePlan, Preprocessor};
use surrogate_core::mlp::{Activation, MlpModel, MlpParams};
use surrogate_core::tuning::TraceEvent;
use surrogate_core::Matrix;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn naive_mse(y: &Matrix, yhat: &Matrix) -> f64 {
    let mut total = 0.0;
    for i in 0..y.rows() {
        for j in 0..y.cols() {
            let d = y.get(i, j) - yhat.get(i, j);
            total += d * d;
        }
    }
    total / (y.rows() * y.cols()) as f64
}

/// Two-pass Pearson coefficient; 0 when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa.sqrt() * sbb.sqrt())
    }
}

/// Population covariance, straight from the definition.
pub fn covariance(x: &Matrix) -> Vec<Vec<f64>> {
    let n = x.rows() as f64;
    let f = x.cols();
    let mean: Vec<f64> = (0..f).map(|j| x.column(j).iter().sum::<f64>() / n).collect();
    let mut c = vec![vec![0.0; f]; f];
    for i in 0..f {
        for j in 0..f {
            c[i][j] = (0..x.rows())
                .map(|r| (x.get(r, i) - mean[i]) * (x.get(r, j) - mean[j]))
                .sum::<f64>()
                / n;
        }
    }
    c
}

/// Eigenvalues of a symmetric matrix from nalgebra, sorted descending.
pub fn reference_eigenvalues(c: &[Vec<f64>]) -> Vec<f64> {
    let f = c.len();
    let m = nalgebra::DMatrix::from_fn(f, f, |i, j| c[i][j]);
    let mut vals: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    vals
}

/// Regression tree found by exhaustive search, for cross-checking CART.
#[derive(Debug)]
pub enum RefTree {
    Leaf(Vec<f64>),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<RefTree>,
        right: Box<RefTree>,
    },
}

fn sse(y: &Matrix, rows: &[usize]) -> f64 {
    (0..y.cols())
        .map(|c| {
            let m = rows.iter().map(|&r| y.get(r, c)).sum::<f64>() / rows.len() as f64;
            rows.iter().map(|&r| (y.get(r, c) - m).powi(2)).sum::<f64>()
        })
        .sum()
}

fn mean_of(y: &Matrix, rows: &[usize]) -> Vec<f64> {
    (0..y.cols())
        .map(|c| rows.iter().map(|&r| y.get(r, c)).sum::<f64>() / rows.len() as f64)
        .collect()
}

/// Every (feature, midpoint) pair is scored by the children's summed squared
/// deviations; strict improvement is required, so the first of equal
/// candidates in (feature, threshold) order wins.
pub fn brute_force_tree(x: &Matrix, y: &Matrix, rows: &[usize], depth_left: usize) -> RefTree {
    if depth_left == 0 || rows.len() < 2 || sse(y, rows) == 0.0 {
        return RefTree::Leaf(mean_of(y, rows));
    }
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x.cols() {
        let mut vals: Vec<f64> = rows.iter().map(|&r| x.get(r, f)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = 0.5 * (w[0] + w[1]);
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, f) <= t);
            let cost = sse(y, &l) + sse(y, &r);
            if best.is_none_or(|(c, _, _)| cost < c - 1e-12 * c.abs().max(1e-300)) {
                best = Some((cost, f, t));
            }
        }
    }
    match best {
        None => RefTree::Leaf(mean_of(y, rows)),
        Some((_, feature, threshold)) => {
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, feature) <= threshold);
            RefTree::Split {
                feature,
                threshold,
                left: Box::new(brute_force_tree(x, y, &l, depth_left - 1)),
                right: Box::new(brute_force_tree(x, y, &r, depth_left - 1)),
            }
        }
    }
}

impl RefTree {
    pub fn predict(&self, x: &[f64]) -> &[f64] {
        match self {
            RefTree::Leaf(v) => v,
            RefTree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }
}

/// One unbootstrapped tree over every feature.
pub fn single_tree(depth: Option<usize>) -> ForestParams {
    ForestParams {
        n_estimators: 1,
        max_depth: depth,
        min_samples_leaf: 1,
        max_features: MaxFeatures::All,
        bootstrap: false,
        ..ForestParams::default()
    }
}

/// Structural equality with the exhaustive reference, leaves and thresholds to 1e-12.
pub fn same_tree(ours: &Tree, at: usize, reference: &RefTree) -> bool {
    match (&ours.nodes[at], reference) {
        (Node::Leaf { value }, RefTree::Leaf(v)) => value.iter().zip(v).all(|(a, b)| (a - b).abs() <= 1e-12),
        (
            Node::Split {
                feature,
                threshold,
                left,
                right,
            },
            RefTree::Split {
                feature: f,
                threshold: t,
                left: l,
                right: r,
            },
        ) => {
            feature == f
                && (threshold - t).abs() <= 1e-12
                && same_tree(ours, *left, l)
                && same_tree(ours, *right, r)
        }
        _ => false,
    }
}

/// A freshly initialized network with nonzero random biases.
pub fn small_net(seed: u64, hidden: Vec<usize>, activation: Activation, f: usize, p: usize) -> MlpModel {
    let params = MlpParams {
        hidden_layers: hidden,
        activation,
        seed,
        ..MlpParams::default()
    };
    let mut m = MlpModel::init(f, p, &params).unwrap();
    let mut r = rng(seed ^ 0xb1a5);
    for l in &mut m.layers {
        for b in &mut l.bias {
            *b = r.random_range(-0.5..0.5);
        }
    }
    m
}

/// Objective recomputed from the forward pass and an explicit weight penalty.
pub fn mlp_objective(m: &MlpModel, x: &Matrix, y: &Matrix, l2_alpha: f64) -> f64 {
    let out = m.forward(x).unwrap();
    let penalty: f64 = m
        .layers
        .iter()
        .map(|l| l.weights.as_slice().iter().map(|w| w * w).sum::<f64>())
        .sum();
    naive_mse(y, &out) + l2_alpha * penalty
}

/// Largest relative disagreement between the analytic gradient and central
/// differences with step `h`. Relative error is `|a - n| / max(|a|, |n|, 1e-4)`.
pub fn gradient_check(m: &MlpModel, x: &Matrix, y: &Matrix, l2_alpha: f64, h: f64) -> f64 {
    let (_, grads) = m.loss_and_gradients(x, y, l2_alpha).unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = m.clone();
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-4);
    for l in 0..m.layers.len() {
        for i in 0..m.layers[l].weights.as_slice().len() {
            let w0 = m.layers[l].weights.as_slice()[i];
            probe.layers[l].weights.as_mut_slice()[i] = w0 + h;
            let up = mlp_objective(&probe, x, y, l2_alpha);
            probe.layers[l].weights.as_mut_slice()[i] = w0 - h;
            let down = mlp_objective(&probe, x, y, l2_alpha);
            probe.layers[l].weights.as_mut_slice()[i] = w0;
            worst = worst.max(rel(grads[l].weights.as_slice()[i], (up - down) / (2.0 * h)));
        }
        for i in 0..m.layers[l].bias.len() {
            let b0 = m.layers[l].bias[i];
            probe.layers[l].bias[i] = b0 + h;
            let up = mlp_objective(&probe, x, y, l2_alpha);
            probe.layers[l].bias[i] = b0 - h;
            let down = mlp_objective(&probe, x, y, l2_alpha);
            probe.layers[l].bias[i] = b0;
            worst = worst.max(rel(grads[l].bias[i], (up - down) / (2.0 * h)));
        }
    }
    worst
}

/// Checks every traced fit/score event: fit and score row sets are disjoint,
/// and the recorded preprocessing equals a refit of `plan` on exactly the fit
/// rows. Returns the number of events audited, or the first violation.
pub fn audit_trace(events: &[TraceEvent], data: &Dataset, plan: &FeaturePlan) -> Result<usize, String> {
    use std::collections::{BTreeSet, HashMap};
    let position: HashMap<usize, usize> = data.row_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    for e in events {
        let fit: BTreeSet<usize> = e.fit_rows.iter().copied().collect();
        if let Some(id) = e.score_rows.iter().find(|id| fit.contains(id)) {
            return Err(format!("{:?}: row {id} is both fitted and scored", e.stage));
        }
        let idx: Vec<usize> = e.fit_rows.iter().map(|id| position[id]).collect();
        if Preprocessor::fit(plan, &data.x.select_rows(&idx)).unwrap() != e.preprocessor {
            return Err(format!("{:?}: preprocessing was not fitted on the fit rows alone", e.stage));
        }
    }
    Ok(events.len())
}
