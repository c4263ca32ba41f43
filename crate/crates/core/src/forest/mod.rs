//! Bootstrap-aggregated multi-output regression trees.

mod tree;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

pub use tree::{Node, Tree, TIE_TOLERANCE};

/// How many features each split considers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    /// `None` grows until the other stopping rules fire.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 100,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::validation("n_estimators must be positive"));
        }
        if self.max_depth == Some(0) {
            return Err(Error::validation("max_depth must be positive"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::validation("min_samples_split must be at least 2"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::validation("min_samples_leaf must be at least 1"));
        }
        if let MaxFeatures::Fraction(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::validation(format!(
                    "max_features fraction {f} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    pub n_features: usize,
    pub n_outputs: usize,
}

/// Fits `params.n_estimators` trees. Tree `t` draws from its own stream
/// `derive(params.seed, t)`, so the result does not depend on how trees are
/// scheduled across threads.
pub fn fit_forest(x: &Matrix, y: &Matrix, params: &ForestParams) -> Result<ForestModel> {
    params.validate()?;
    if x.rows() == 0 {
        return Err(Error::validation("cannot fit a forest on zero rows"));
    }
    if x.rows() != y.rows() {
        return Err(Error::dimension(format!(
            "{} feature rows but {} target rows",
            x.rows(),
            y.rows()
        )));
    }
    if y.cols() == 0 || x.cols() == 0 {
        return Err(Error::dimension(
            "features and targets need at least one column",
        ));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::validation(
            "training data contains non-finite values",
        ));
    }
    let n = x.rows();
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed::derive(params.seed, t as u64));
            let sample = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            Tree::fit(x, y, sample, params, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        params: params.clone(),
        n_features: x.cols(),
        n_outputs: y.cols(),
    })
}

impl ForestModel {
    pub fn predict_row(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (k, tree) in self.trees.iter().enumerate() {
            let inv = 1.0 / (k + 1) as f64;
            for (o, v) in out.iter_mut().zip(tree.leaf_for(x)) {
                *o += (v - *o) * inv;
            }
        }
    }

    /// Mean of the per-tree leaf values for each row.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.n_features {
            return Err(Error::dimension(format!(
                "forest expects {} features, got {}",
                self.n_features,
                x.cols()
            )));
        }
        let mut out = Matrix::zeros(x.rows(), self.n_outputs);
        for r in 0..x.rows() {
            self.predict_row(x.row(r), out.row_mut(r));
        }
        Ok(out)
    }
}

pub fn predict_forest(model: &ForestModel, x: &Matrix) -> Result<Matrix> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(v: Vec<f64>) -> Tree {
        Tree {
            nodes: vec![Node::Leaf { value: v }],
        }
    }

    #[test]
    fn prediction_averages_trees() {
        let m = ForestModel {
            trees: vec![leaf(vec![1.0, 1.0]), leaf(vec![3.0, 3.0])],
            params: ForestParams::default(),
            n_features: 1,
            n_outputs: 2,
        };
        let p = m.predict(&Matrix::column_vector(&[0.0])).unwrap();
        assert_eq!(p.row(0), &[2.0, 2.0]);
        assert!(m.predict(&Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn constant_target_gives_single_leaves() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [2.0, 3.0], [4.0, 0.5], [1.0, 1.0]]).unwrap();
        let v = [0.3, -1.7, 2.1];
        let y = Matrix::from_rows(&[v; 4]).unwrap();
        let m = fit_forest(
            &x,
            &y,
            &ForestParams {
                n_estimators: 5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
        let p = m
            .predict(&Matrix::from_rows(&[[9.0, -9.0], [0.0, 0.0]]).unwrap())
            .unwrap();
        assert!(p.iter_rows().all(|r| r == v));
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Matrix::zeros(3, 2);
        assert!(fit_forest(&x, &Matrix::zeros(2, 1), &ForestParams::default()).is_err());
        assert!(fit_forest(
            &Matrix::zeros(0, 2),
            &Matrix::zeros(0, 1),
            &ForestParams::default()
        )
        .is_err());
        let bad = ForestParams {
            min_samples_split: 1,
            ..Default::default()
        };
        assert!(fit_forest(&x, &Matrix::zeros(3, 1), &bad).is_err());
        let bad = ForestParams {
            max_features: MaxFeatures::Fraction(0.0),
            ..Default::default()
        };
        assert!(fit_forest(&x, &Matrix::zeros(3, 1), &bad).is_err());
    }

    #[test]
    fn seeded_fit_is_reproducible() {
        let x = Matrix::from_rows(
            &(0..40)
                .map(|i| [i as f64, ((i * 7) % 11) as f64])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let y = Matrix::from_rows(
            &(0..40)
                .map(|i| [(i as f64).sin(), (i as f64 * 0.3).cos()])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let p = ForestParams {
            n_estimators: 8,
            max_features: MaxFeatures::Sqrt,
            seed: 11,
            ..Default::default()
        };
        assert_eq!(
            fit_forest(&x, &y, &p).unwrap(),
            fit_forest(&x, &y, &p).unwrap()
        );
        let q = ForestParams { seed: 12, ..p };
        assert_ne!(
            fit_forest(&x, &y, &p).unwrap(),
            fit_forest(&x, &y, &q).unwrap()
        );
    }
}
