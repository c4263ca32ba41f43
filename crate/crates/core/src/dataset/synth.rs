//! Synthetic stand-in for a ray-tracing/Fokker-Planck simulation database.
//!
//! Inputs are drawn by Latin hypercube sampling. Each record gets two
//! 23-point radial profiles evaluated at `t_j = j / (P - 1)`:
//!
//! ```text
//! current(t) = A(u) * g(t; m(u), w(u))            + N(0, sigma^2)
//! powers(t)  = max(0, B(u) * g(t; m'(u), w'(u))   + N(0, sigma^2))
//! g(t; m, w) = exp(-(t - m)^2 / (2 w^2))
//! ```
//!
//! `u` holds the live (non-dead) features rescaled to `[0, 1]`; `p_k` below
//! is the `k`-th live feature, wrapping around when fewer than 7 are live.
//!
//! ```text
//! A  = 0.5 + 1.5 p0 - p1 + 0.8 p2 p3
//! m  = 0.2 + 0.5 (0.5 p4 + 0.3 p5 + 0.2 p1)
//! w  = 0.06 + 0.12 (0.6 p6 + 0.4 p2)
//! B  = 0.2 + p0 p5 + 0.5 p3 + 0.3 p2
//! m' = 0.15 + 0.6 (0.7 p6 + 0.3 p4)
//! w' = 0.08 + 0.1 (0.5 p1 + 0.5 p2)
//! ```
//!
//! Dead features are sampled like the others but never enter the formulas.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureSpec, Manifest, TargetGroup, HOLDOUT, N_FOLDS};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

/// Names used for the default nine inputs; the last two are the default dead features.
pub const DEFAULT_FEATURE_NAMES: [&str; 9] = [
    "ne0", "te0", "b0", "freq", "npar", "launch_z", "rf_power", "elecfld", "zeff",
];

pub const CURRENT_GROUP: &str = "current";
pub const POWERS_GROUP: &str = "powers";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_records: usize,
    pub seed: u64,
    pub feature_ranges: Vec<(f64, f64)>,
    pub dead_features: Vec<usize>,
    pub noise_sigma: f64,
    pub profile_length: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_records: 2000,
            seed: 0,
            feature_ranges: vec![(0.0, 1.0); 9],
            dead_features: vec![7, 8],
            noise_sigma: 0.05,
            profile_length: 23,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let f = self.feature_ranges.len();
        if self.n_records < 10 {
            return Err(Error::validation(format!(
                "n_records = {} is too small to form folds (need >= 10)",
                self.n_records
            )));
        }
        if f == 0 {
            return Err(Error::validation("at least one feature is required"));
        }
        if let Some(&(lo, hi)) = self
            .feature_ranges
            .iter()
            .find(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(Error::validation(format!(
                "feature range [{lo}, {hi}] is invalid"
            )));
        }
        if let Some(&d) = self.dead_features.iter().find(|&&d| d >= f) {
            return Err(Error::validation(format!(
                "dead feature index {d} out of range"
            )));
        }
        if self.live_features().is_empty() {
            return Err(Error::validation("every feature is dead"));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::validation(
                "noise_sigma must be finite and nonnegative",
            ));
        }
        if self.profile_length == 0 {
            return Err(Error::validation("profile_length must be positive"));
        }
        Ok(())
    }

    pub fn live_features(&self) -> Vec<usize> {
        (0..self.feature_ranges.len())
            .filter(|i| !self.dead_features.contains(i))
            .collect()
    }

    pub fn manifest(&self) -> Manifest {
        let f = self.feature_ranges.len();
        let features = self
            .feature_ranges
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| FeatureSpec {
                name: if f == DEFAULT_FEATURE_NAMES.len() {
                    DEFAULT_FEATURE_NAMES[i].to_owned()
                } else {
                    format!("x{i:02}")
                },
                lo,
                hi,
            })
            .collect();
        let cols = |prefix: &str| {
            (0..self.profile_length)
                .map(|j| format!("{prefix}_{j:02}"))
                .collect()
        };
        Manifest {
            features,
            targets: vec![
                TargetGroup {
                    group: CURRENT_GROUP.into(),
                    columns: cols("cur"),
                },
                TargetGroup {
                    group: POWERS_GROUP.into(),
                    columns: cols("pow"),
                },
            ],
            fold_column: "fold".into(),
        }
    }
}

/// Per-feature stratified sample: each of the `n` equal-width strata holds exactly one point.
fn latin_hypercube(n: usize, ranges: &[(f64, f64)], root: u64) -> Matrix {
    let mut x = Matrix::zeros(n, ranges.len());
    for (f, &(lo, hi)) in ranges.iter().enumerate() {
        let mut rng = seed::rng(seed::derive(root, f as u64));
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (r, s) in strata.into_iter().enumerate() {
            let jitter: f64 = rng.random();
            x.set(r, f, lo + (hi - lo) * (s as f64 + jitter) / n as f64);
        }
    }
    x
}

fn gauss(t: f64, m: f64, w: f64) -> f64 {
    let z = (t - m) / w;
    (-0.5 * z * z).exp()
}

struct ProfileShape {
    amp: f64,
    center: f64,
    width: f64,
}

fn shapes(p: impl Fn(usize) -> f64) -> (ProfileShape, ProfileShape) {
    let current = ProfileShape {
        amp: 0.5 + 1.5 * p(0) - p(1) + 0.8 * p(2) * p(3),
        center: 0.2 + 0.5 * (0.5 * p(4) + 0.3 * p(5) + 0.2 * p(1)),
        width: 0.06 + 0.12 * (0.6 * p(6) + 0.4 * p(2)),
    };
    let powers = ProfileShape {
        amp: 0.2 + p(0) * p(5) + 0.5 * p(3) + 0.3 * p(2),
        center: 0.15 + 0.6 * (0.7 * p(6) + 0.3 * p(4)),
        width: 0.08 + 0.1 * (0.5 * p(1) + 0.5 * p(2)),
    };
    (current, powers)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.n_records;
    let p = spec.profile_length;
    let root = seed::derive(spec.seed, seed::SYNTH);
    let x = latin_hypercube(n, &spec.feature_ranges, seed::derive(root, 0));
    let live = spec.live_features();

    let mut noise_rng = seed::rng(seed::derive(root, 1));
    let noise = (spec.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma).expect("validated sigma"));
    let mut draw = move || noise.as_ref().map_or(0.0, |d| d.sample(&mut noise_rng));

    let t: Vec<f64> = (0..p)
        .map(|j| {
            if p == 1 {
                0.0
            } else {
                j as f64 / (p - 1) as f64
            }
        })
        .collect();
    let mut current = Matrix::zeros(n, p);
    let mut powers = Matrix::zeros(n, p);
    for r in 0..n {
        let row = x.row(r);
        let unit = |k: usize| {
            let f = live[k % live.len()];
            let (lo, hi) = spec.feature_ranges[f];
            (row[f] - lo) / (hi - lo)
        };
        let (cur, pow) = shapes(unit);
        for (j, &tj) in t.iter().enumerate() {
            current.set(r, j, cur.amp * gauss(tj, cur.center, cur.width) + draw());
        }
        for (j, &tj) in t.iter().enumerate() {
            powers.set(
                r,
                j,
                (pow.amp * gauss(tj, pow.center, pow.width) + draw()).max(0.0),
            );
        }
    }

    let folds = assign_folds(n, seed::derive(root, 2));
    Dataset::new(x, vec![current, powers], folds, spec.manifest())
}

/// 20% hold-out, remainder dealt round-robin into the five CV folds, in shuffled order.
fn assign_folds(n: usize, stream: u64) -> Vec<i8> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(stream));
    let n_test = (n as f64 * 0.2).round() as usize;
    let mut folds = vec![0i8; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = if pos < n_test {
            HOLDOUT
        } else {
            ((pos - n_test) % N_FOLDS) as i8
        };
    }
    folds
}
