//! Tabular simulation data: feature matrix, target profiles, and fold labels.
//!
//! Fold encoding: `-1` marks the hold-out test partition, `0..=4` the five
//! cross-validation folds.

mod io;
mod standardize;
mod synth;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use io::{load_dataset, load_dir, save_dataset, save_dir, CSV_FILE, MANIFEST_FILE};
pub use standardize::{Standardizer, DEGENERATE_STD};
pub use synth::{
    generate_synthetic, SyntheticSpec, CURRENT_GROUP, DEFAULT_FEATURE_NAMES, POWERS_GROUP,
};

/// Fold label of the hold-out partition.
pub const HOLDOUT: i8 = -1;
/// Number of labeled cross-validation folds.
pub const N_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetGroup {
    pub group: String,
    pub columns: Vec<String>,
}

/// Column layout of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub features: Vec<FeatureSpec>,
    pub targets: Vec<TargetGroup>,
    pub fold_column: String,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::validation("manifest lists no features"));
        }
        if self.targets.is_empty() {
            return Err(Error::validation("manifest lists no target groups"));
        }
        let p = self.targets[0].columns.len();
        if p == 0 {
            return Err(Error::validation(
                "target groups must have at least one column",
            ));
        }
        for g in &self.targets {
            if g.columns.len() != p {
                return Err(Error::validation(format!(
                    "target group `{}` has {} columns, expected {p}",
                    g.group,
                    g.columns.len()
                )));
            }
        }
        for f in &self.features {
            if !(f.lo < f.hi) {
                return Err(Error::validation(format!(
                    "feature `{}` range [{}, {}] is empty",
                    f.name, f.lo, f.hi
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for name in self.all_columns() {
            if !seen.insert(name) {
                return Err(Error::validation(format!(
                    "column name `{name}` is not unique"
                )));
            }
        }
        let mut groups = std::collections::HashSet::new();
        for g in &self.targets {
            if !groups.insert(g.group.as_str()) {
                return Err(Error::validation(format!(
                    "duplicate target group `{}`",
                    g.group
                )));
            }
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn profile_length(&self) -> usize {
        self.targets.first().map_or(0, |g| g.columns.len())
    }

    /// CSV column order: features, each target group in order, fold.
    pub fn all_columns(&self) -> impl Iterator<Item = &str> {
        self.features
            .iter()
            .map(|f| f.name.as_str())
            .chain(
                self.targets
                    .iter()
                    .flat_map(|g| g.columns.iter().map(String::as_str)),
            )
            .chain(std::iter::once(self.fold_column.as_str()))
    }

    pub fn group_index(&self, group: &str) -> Result<usize> {
        self.targets
            .iter()
            .position(|g| g.group == group)
            .ok_or_else(|| Error::validation(format!("unknown target group `{group}`")))
    }
}

/// Features, target groups and fold labels for a set of records.
///
/// `row_ids` carries each record's position in the originally loaded or
/// generated table through every split, so tests can trace which records
/// were used where.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    /// One matrix per manifest target group, same order.
    pub targets: Vec<Matrix>,
    pub folds: Vec<i8>,
    pub row_ids: Vec<usize>,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn new(
        x: Matrix,
        targets: Vec<Matrix>,
        folds: Vec<i8>,
        manifest: Manifest,
    ) -> Result<Self> {
        let row_ids = (0..x.rows()).collect();
        let d = Dataset {
            x,
            targets,
            folds,
            row_ids,
            manifest,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        self.manifest.validate()?;
        let n = self.x.rows();
        if self.x.cols() != self.manifest.features.len() {
            return Err(Error::dimension(format!(
                "feature matrix has {} columns, manifest lists {}",
                self.x.cols(),
                self.manifest.features.len()
            )));
        }
        if self.targets.len() != self.manifest.targets.len() {
            return Err(Error::dimension(
                "target matrices do not match manifest groups",
            ));
        }
        for (y, g) in self.targets.iter().zip(&self.manifest.targets) {
            if y.rows() != n || y.cols() != g.columns.len() {
                return Err(Error::dimension(format!(
                    "target group `{}` is {}x{}, expected {n}x{}",
                    g.group,
                    y.rows(),
                    y.cols(),
                    g.columns.len()
                )));
            }
        }
        if self.folds.len() != n || self.row_ids.len() != n {
            return Err(Error::dimension("fold labels do not match row count"));
        }
        if let Some(f) = self.folds.iter().find(|&&f| !valid_fold(f)) {
            return Err(Error::validation(format!(
                "fold value {f} outside {{-1, 0..4}}"
            )));
        }
        if !self.x.is_finite() || self.targets.iter().any(|y| !y.is_finite()) {
            return Err(Error::validation("dataset contains non-finite values"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn target(&self, group: &str) -> Result<&Matrix> {
        Ok(&self.targets[self.manifest.group_index(group)?])
    }

    /// All target groups side by side, in manifest order.
    pub fn all_targets(&self) -> Matrix {
        let mut it = self.targets.iter();
        let first = it
            .next()
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(self.len(), 0));
        it.fold(first, |acc, y| acc.hstack(y).expect("validated row counts"))
    }

    pub fn target_names(&self) -> Vec<String> {
        self.manifest
            .targets
            .iter()
            .flat_map(|g| g.columns.iter().cloned())
            .collect()
    }

    /// Subset of rows, in the order given.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(idx),
            targets: self.targets.iter().map(|y| y.select_rows(idx)).collect(),
            folds: idx.iter().map(|&i| self.folds[i]).collect(),
            row_ids: idx.iter().map(|&i| self.row_ids[i]).collect(),
            manifest: self.manifest.clone(),
        }
    }

    fn partition(&self, pred: impl Fn(i8) -> bool) -> (Vec<usize>, Vec<usize>) {
        (0..self.len()).partition(|&i| pred(self.folds[i]))
    }

    /// Rows whose fold label is in `folds`.
    pub fn with_folds(&self, folds: &[usize]) -> Dataset {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.folds[i] >= 0 && folds.contains(&(self.folds[i] as usize)))
            .collect();
        self.select(&idx)
    }

    /// Distinct CV fold labels present, ascending.
    pub fn fold_labels(&self) -> Vec<usize> {
        let mut present = [false; N_FOLDS];
        for &f in &self.folds {
            if f >= 0 {
                present[f as usize] = true;
            }
        }
        (0..N_FOLDS).filter(|&k| present[k]).collect()
    }

    /// SHA-256 over the raw bits of every value and fold label.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in self.x.as_slice() {
            h.update(v.to_le_bytes());
        }
        for y in &self.targets {
            for v in y.as_slice() {
                h.update(v.to_le_bytes());
            }
        }
        for f in &self.folds {
            h.update(f.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub(crate) fn valid_fold(f: i8) -> bool {
    f == HOLDOUT || (0..N_FOLDS as i8).contains(&f)
}

/// Splits off the hold-out partition (fold `-1`). Row order is preserved in both parts.
pub fn split_holdout(d: &Dataset) -> Result<(Dataset, Dataset)> {
    let (test, train) = d.partition(|f| f == HOLDOUT);
    if train.is_empty() {
        return Err(Error::validation("training partition is empty"));
    }
    if test.is_empty() {
        return Err(Error::validation("hold-out partition is empty"));
    }
    Ok((d.select(&train), d.select(&test)))
}

/// Splits training data into the complement of fold `k` and fold `k` itself.
pub fn extract_fold(train: &Dataset, k: usize) -> Result<(Dataset, Dataset)> {
    if k >= N_FOLDS {
        return Err(Error::validation(format!(
            "fold index {k} outside 0..{}",
            N_FOLDS - 1
        )));
    }
    if train.folds.contains(&HOLDOUT) {
        return Err(Error::validation("training data contains hold-out rows"));
    }
    let (val, fit) = train.partition(|f| f as usize == k);
    if val.is_empty() {
        return Err(Error::validation(format!("validation fold {k} is empty")));
    }
    Ok((train.select(&fit), train.select(&val)))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy(folds: &[i8]) -> Dataset {
        let n = folds.len();
        let manifest = Manifest {
            features: vec![FeatureSpec {
                name: "a".into(),
                lo: 0.0,
                hi: 1.0,
            }],
            targets: vec![TargetGroup {
                group: "current".into(),
                columns: vec!["c0".into()],
            }],
            fold_column: "fold".into(),
        };
        let x = Matrix::column_vector(&(0..n).map(|i| i as f64).collect::<Vec<_>>());
        let y = Matrix::column_vector(&(0..n).map(|i| 10.0 * i as f64).collect::<Vec<_>>());
        Dataset::new(x, vec![y], folds.to_vec(), manifest).unwrap()
    }

    #[test]
    fn holdout_counts() {
        let d = toy(&[0, 1, 2, 3, 4, 0, 1, -1, -1, -1]);
        let (train, test) = split_holdout(&d).unwrap();
        assert_eq!(train.len(), 7);
        assert_eq!(test.len(), 3);
        assert_eq!(test.row_ids, vec![7, 8, 9]);
    }

    #[test]
    fn holdout_requires_both_parts() {
        assert!(split_holdout(&toy(&[-1, -1, -1])).is_err());
        assert!(split_holdout(&toy(&[0, 1])).is_err());
        let (train, test) = split_holdout(&toy(&[0, -1])).unwrap();
        assert_eq!(train.row_ids, vec![0]);
        assert_eq!(test.row_ids, vec![1]);
    }

    #[test]
    fn fold_extraction() {
        let d = toy(&[0, 0, 1, 2]);
        let (fit, val) = extract_fold(&d, 1).unwrap();
        assert_eq!(val.row_ids, vec![2]);
        assert_eq!(fit.row_ids, vec![0, 1, 3]);
        assert!(extract_fold(&d, 4).is_err());
        assert!(extract_fold(&d, 5).is_err());

        let (fit, val) = extract_fold(&toy(&[0, 1, 2, 3, 4]), 0).unwrap();
        assert_eq!((fit.len(), val.len()), (4, 1));
    }

    #[test]
    fn extract_fold_rejects_holdout_rows() {
        assert!(extract_fold(&toy(&[0, 1, -1]), 0).is_err());
    }

    #[test]
    fn bad_fold_label_rejected() {
        let mut d = toy(&[0, 1]);
        d.folds[1] = 5;
        assert!(d.validate().is_err());
    }

    #[test]
    fn manifest_rejects_duplicate_names() {
        let mut m = toy(&[0]).manifest;
        m.targets[0].columns[0] = "a".into();
        assert!(m.validate().is_err());
    }
}
