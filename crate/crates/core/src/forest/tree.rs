//! Multi-output CART regression tree.
//!
//! Splits minimize the summed within-child sum of squared deviations over all
//! outputs. Candidate thresholds are midpoints between consecutive distinct
//! feature values. Among splits whose impurity agrees to within a relative
//! `1e-12`, the lowest feature index wins, then the smallest threshold.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{ForestParams, MaxFeatures};
use crate::matrix::Matrix;
use crate::seed::Rng;

/// Relative slack under which two candidate splits count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: Vec<f64>,
    },
}

/// Nodes are stored flat; the root is node 0 and children always follow their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn leaf_for(&self, x: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
                Node::Leaf { value } => return value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Grows a tree on the rows listed in `sample` (repeats allowed).
    pub fn fit(
        x: &Matrix,
        y: &Matrix,
        sample: Vec<usize>,
        params: &ForestParams,
        rng: &mut Rng,
    ) -> Tree {
        let mut builder = Builder {
            x,
            y,
            params,
            rng,
            nodes: Vec::new(),
            scratch: Vec::with_capacity(sample.len()),
            left_sum: vec![0.0; y.cols()],
        };
        let mut sample = sample;
        builder.grow(&mut sample, 0);
        Tree {
            nodes: builder.nodes,
        }
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a Matrix,
    params: &'a ForestParams,
    rng: &'a mut Rng,
    nodes: Vec<Node>,
    scratch: Vec<(f64, usize)>,
    left_sum: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    /// Σ_p (ΣL²/nL + ΣR²/nR); larger is better.
    score: f64,
}

/// Running mean; exact for constant inputs.
pub(crate) fn mean_rows<'r>(rows: impl Iterator<Item = &'r [f64]>, width: usize) -> Vec<f64> {
    let mut mean = vec![0.0; width];
    for (k, r) in rows.enumerate() {
        let inv = 1.0 / (k + 1) as f64;
        for (m, v) in mean.iter_mut().zip(r) {
            *m += (v - *m) * inv;
        }
    }
    mean
}

/// Midpoint, kept strictly below `hi` so `hi` routes right.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) * 0.5;
    if mid < hi {
        mid
    } else {
        lo
    }
}

impl Builder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let value = mean_rows(rows.iter().map(|&r| self.y.row(r)), self.y.cols());
        self.nodes.push(Node::Leaf { value });
        self.nodes.len() - 1
    }

    fn is_pure(&self, rows: &[usize]) -> bool {
        let first = self.y.row(rows[0]);
        rows[1..].iter().all(|&r| self.y.row(r) == first)
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let n = rows.len();
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok
            || n < self.params.min_samples_split
            || n < 2 * self.params.min_samples_leaf
            || self.is_pure(rows)
        {
            return self.leaf(rows);
        }
        let Some(best) = self.best_split(rows) else {
            return self.leaf(rows);
        };

        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { value: Vec::new() });
        let x = self.x;
        // Stable partition keeps the children's row order independent of candidate scanning.
        let (mut left, mut right): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| x.get(r, best.feature) <= best.threshold);
        let l = self.grow(&mut left, depth + 1);
        let r = self.grow(&mut right, depth + 1);
        self.nodes[at] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        at
    }

    fn candidate_features(&mut self) -> (Vec<usize>, Vec<usize>) {
        let f = self.x.cols();
        let k = match self.params.max_features {
            MaxFeatures::All => f,
            MaxFeatures::Sqrt => ((f as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::Fraction(frac) => ((frac * f as f64).floor() as usize).clamp(1, f),
        };
        if k >= f {
            return ((0..f).collect(), Vec::new());
        }
        let mut chosen = index::sample(self.rng, f, k).into_vec();
        chosen.sort_unstable();
        let rest = (0..f).filter(|i| !chosen.contains(i)).collect();
        (chosen, rest)
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<BestSplit> {
        let (chosen, rest) = self.candidate_features();
        let mut best = None;
        for &f in &chosen {
            self.scan_feature(rows, f, &mut best);
        }
        // Fall back to the unsampled features only when none of the sampled ones can split.
        if best.is_none() {
            for &f in &rest {
                self.scan_feature(rows, f, &mut best);
            }
        }
        best
    }

    fn scan_feature(&mut self, rows: &[usize], feature: usize, best: &mut Option<BestSplit>) {
        let n = rows.len();
        let p = self.y.cols();
        let min_leaf = self.params.min_samples_leaf;

        self.scratch.clear();
        self.scratch
            .extend(rows.iter().map(|&r| (self.x.get(r, feature), r)));
        self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        if self.scratch[0].0 == self.scratch[n - 1].0 {
            return;
        }

        let mut total = vec![0.0; p];
        for &(_, r) in &self.scratch {
            for (t, v) in total.iter_mut().zip(self.y.row(r)) {
                *t += v;
            }
        }
        self.left_sum.iter_mut().for_each(|s| *s = 0.0);

        for i in 1..n {
            let (_, prev_row) = self.scratch[i - 1];
            for (s, v) in self.left_sum.iter_mut().zip(self.y.row(prev_row)) {
                *s += v;
            }
            let lo = self.scratch[i - 1].0;
            let hi = self.scratch[i].0;
            if lo == hi || i < min_leaf || n - i < min_leaf {
                continue;
            }
            let (nl, nr) = (i as f64, (n - i) as f64);
            let mut score = 0.0;
            for (s, t) in self.left_sum.iter().zip(&total) {
                let r = t - s;
                score += s * s / nl + r * r / nr;
            }
            let better = match best {
                None => true,
                Some(b) => score > b.score + TIE_TOLERANCE * b.score.abs().max(1.0),
            };
            if better {
                *best = Some(BestSplit {
                    feature,
                    threshold: midpoint(lo, hi),
                    score,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn params(depth: Option<usize>) -> ForestParams {
        ForestParams {
            n_estimators: 1,
            max_depth: depth,
            bootstrap: false,
            ..ForestParams::default()
        }
    }

    #[test]
    fn step_split_is_midpoint() {
        let x = Matrix::column_vector(&[1.0, 2.0, 3.0, 4.0]);
        let y = Matrix::column_vector(&[0.0, 0.0, 1.0, 1.0]);
        let t = Tree::fit(
            &x,
            &y,
            (0..4).collect(),
            &params(Some(1)),
            &mut seed::rng(0),
        );
        match t.root() {
            Node::Split {
                feature, threshold, ..
            } => {
                assert_eq!(*feature, 0);
                assert!(*threshold > 2.0 && *threshold < 3.0);
            }
            n => panic!("expected split, got {n:?}"),
        }
        assert_eq!(t.leaf_for(&[1.5]), &[0.0]);
        assert_eq!(t.leaf_for(&[3.5]), &[1.0]);
    }

    #[test]
    fn min_samples_leaf_blocks_small_children() {
        let x = Matrix::column_vector(&[1.0, 2.0, 3.0, 4.0]);
        let y = Matrix::column_vector(&[0.0, 5.0, 5.0, 5.0]);
        let p = ForestParams {
            min_samples_leaf: 2,
            ..params(None)
        };
        let t = Tree::fit(&x, &y, (0..4).collect(), &p, &mut seed::rng(0));
        match t.root() {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 2.5),
            n => panic!("expected split, got {n:?}"),
        }
        assert_eq!(t.n_leaves(), 2);
    }

    #[test]
    fn midpoint_never_reaches_upper_value() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        assert!(midpoint(a, b) < b);
    }

    #[test]
    fn running_mean_exact_on_constants() {
        let rows = vec![vec![0.1, 0.7]; 7];
        assert_eq!(mean_rows(rows.iter().map(Vec::as_slice), 2), vec![0.1, 0.7]);
    }
}
