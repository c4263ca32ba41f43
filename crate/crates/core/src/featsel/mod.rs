//! Feature reduction: Pearson correlation maps, threshold elimination, and PCA.

mod eigen;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::persist::{fmt_f64, write_text};

pub use eigen::symmetric_eigen;

/// Default elimination threshold on `max |r|`.
pub const DEFAULT_THRESHOLD: f64 = 0.1;
/// Cells with `|r|` below this are flagged as masked in the long-format export.
pub const DISPLAY_THRESHOLD: f64 = 0.1;

/// Pearson coefficients between every feature (row) and target (column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMap {
    pub r: Matrix,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    pub threshold: f64,
}

impl FeatureSelection {
    /// Keeps only the selected columns.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let n = self.kept.len() + self.dropped.len();
        if x.cols() != n {
            return Err(Error::dimension(format!(
                "selection covers {n} features, data has {}",
                x.cols()
            )));
        }
        Ok(x.select_cols(&self.kept))
    }

    pub fn n_features(&self) -> usize {
        self.kept.len() + self.dropped.len()
    }
}

/// Centered column divided by its Euclidean norm; `None` for constant columns.
fn unit_deviations(col: &[f64]) -> Option<Vec<f64>> {
    let first = col[0];
    if col.iter().all(|&v| v == first) {
        return None;
    }
    let mean = col.iter().sum::<f64>() / col.len() as f64;
    let dev: Vec<f64> = col.iter().map(|v| v - mean).collect();
    let norm = dev.iter().map(|d| d * d).sum::<f64>().sqrt();
    Some(dev.into_iter().map(|d| d / norm).collect())
}

/// Pearson `r` for every (feature, target) pair. Constant columns correlate as 0.
pub fn correlation_map(
    x: &Matrix,
    y: &Matrix,
    feature_names: Vec<String>,
    target_names: Vec<String>,
) -> Result<CorrelationMap> {
    if x.rows() < 2 {
        return Err(Error::validation("correlation needs at least 2 rows"));
    }
    if x.rows() != y.rows() {
        return Err(Error::dimension(format!(
            "{} feature rows but {} target rows",
            x.rows(),
            y.rows()
        )));
    }
    if feature_names.len() != x.cols() || target_names.len() != y.cols() {
        return Err(Error::dimension("column names do not match matrix widths"));
    }
    let xs: Vec<_> = (0..x.cols())
        .map(|c| unit_deviations(&x.column(c)))
        .collect();
    let ys: Vec<_> = (0..y.cols())
        .map(|c| unit_deviations(&y.column(c)))
        .collect();
    let mut r = Matrix::zeros(x.cols(), y.cols());
    for (i, xi) in xs.iter().enumerate() {
        for (j, yj) in ys.iter().enumerate() {
            if let (Some(a), Some(b)) = (xi, yj) {
                let v: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
                r.set(i, j, v.clamp(-1.0, 1.0));
            }
        }
    }
    Ok(CorrelationMap {
        r,
        feature_names,
        target_names,
    })
}

impl CorrelationMap {
    /// Largest `|r|` across targets, per feature.
    pub fn max_abs(&self) -> Vec<f64> {
        self.r
            .iter_rows()
            .map(|row| row.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .collect()
    }

    pub fn to_matrix_csv(&self) -> String {
        let mut out = String::from("feature");
        for t in &self.target_names {
            out.push(',');
            out.push_str(t);
        }
        out.push('\n');
        for (name, row) in self.feature_names.iter().zip(self.r.iter_rows()) {
            out.push_str(name);
            for v in row {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    /// One line per cell; `masked` marks cells a heat map would leave blank.
    pub fn to_long_csv(&self) -> String {
        let mut out = String::from("feature,target,r,masked\n");
        for (name, row) in self.feature_names.iter().zip(self.r.iter_rows()) {
            for (t, v) in self.target_names.iter().zip(row) {
                let _ = writeln!(
                    out,
                    "{name},{t},{},{}",
                    fmt_f64(*v),
                    v.abs() < DISPLAY_THRESHOLD
                );
            }
        }
        out
    }

    /// Writes the matrix CSV to `path` and the long format next to it as `<stem>_long.csv`.
    pub fn export(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        write_text(path, &self.to_matrix_csv())?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("correlation");
        write_text(
            path.with_file_name(format!("{stem}_long.csv")),
            &self.to_long_csv(),
        )
    }
}

/// Keeps feature `i` iff `max_j |r[i][j]| >= threshold`.
pub fn select_features(c: &CorrelationMap, threshold: f64) -> Result<FeatureSelection> {
    if !(threshold >= 0.0) {
        return Err(Error::validation(format!(
            "threshold {threshold} must be nonnegative"
        )));
    }
    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    for (i, m) in c.max_abs().into_iter().enumerate() {
        if m >= threshold {
            kept.push(i);
        } else {
            dropped.push(i);
        }
    }
    if kept.is_empty() {
        return Err(Error::validation(format!(
            "threshold {threshold} eliminates every feature"
        )));
    }
    Ok(FeatureSelection {
        kept,
        dropped,
        threshold,
    })
}

/// Projection onto the leading eigenvectors of the population covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaTransform {
    pub mean: Vec<f64>,
    /// `k × F`, orthonormal rows, largest-magnitude entry of each row positive.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
}

pub fn fit_pca(x: &Matrix, k: usize) -> Result<PcaTransform> {
    let f = x.cols();
    if x.rows() < 2 {
        return Err(Error::validation("PCA needs at least 2 rows"));
    }
    if k == 0 || k > f {
        return Err(Error::validation(format!(
            "cannot keep {k} components of {f} features"
        )));
    }
    let n = x.rows() as f64;
    let mean = x.column_means();
    let mut cov = Matrix::zeros(f, f);
    for row in x.iter_rows() {
        let d: Vec<f64> = row.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..f {
            for j in i..f {
                let c = cov.get(i, j) + d[i] * d[j];
                cov.set(i, j, c);
            }
        }
    }
    for i in 0..f {
        for j in i..f {
            let c = cov.get(i, j) / n;
            cov.set(i, j, c);
            cov.set(j, i, c);
        }
    }

    let (vals, vecs) = symmetric_eigen(&cov);
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    let mut components = Matrix::zeros(k, f);
    let mut explained_variance = Vec::with_capacity(k);
    for (row, &i) in order.iter().take(k).enumerate() {
        let mut v = vecs.column(i);
        let lead = v.iter().enumerate().fold(
            0,
            |best, (j, x)| if x.abs() > v[best].abs() { j } else { best },
        );
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.row_mut(row).copy_from_slice(&v);
        explained_variance.push(vals[i].max(0.0));
    }
    Ok(PcaTransform {
        mean,
        components,
        explained_variance,
    })
}

impl PcaTransform {
    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// `(X − mean) · componentsᵀ`.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::dimension(format!(
                "PCA fitted on {} features, got {}",
                self.mean.len(),
                x.cols()
            )));
        }
        let k = self.n_components();
        let mut out = Matrix::zeros(x.rows(), k);
        let mut centered = vec![0.0; x.cols()];
        for r in 0..x.rows() {
            for ((c, v), m) in centered.iter_mut().zip(x.row(r)).zip(&self.mean) {
                *c = v - m;
            }
            for (o, comp) in out.row_mut(r).iter_mut().zip(self.components.iter_rows()) {
                *o = comp.iter().zip(&centered).map(|(a, b)| a * b).sum();
            }
        }
        Ok(out)
    }

    /// `mean + z · components`.
    pub fn inverse_transform(&self, z: &Matrix) -> Result<Matrix> {
        if z.cols() != self.n_components() {
            return Err(Error::dimension(
                "score width does not match component count",
            ));
        }
        let mut out = z.matmul(&self.components)?;
        for r in 0..out.rows() {
            for (v, m) in out.row_mut(r).iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        Ok(out)
    }
}

pub fn transform_pca(p: &PcaTransform, x: &Matrix) -> Result<Matrix> {
    p.transform(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn map_of(rows: &[&[f64]]) -> CorrelationMap {
        let r = Matrix::from_rows(rows).unwrap();
        CorrelationMap {
            feature_names: names("f", r.rows()),
            target_names: names("t", r.cols()),
            r,
        }
    }

    #[test]
    fn perfect_linear_relations() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.37 - 1.0).collect();
        let xm = Matrix::column_vector(&x);
        let ys =
            Matrix::from_rows(&x.iter().map(|v| [2.0 * v + 1.0, -v]).collect::<Vec<_>>()).unwrap();
        let c = correlation_map(&xm, &ys, names("f", 1), names("t", 2)).unwrap();
        assert!((c.r.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((c.r.get(0, 1) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_columns_correlate_as_zero() {
        let x = Matrix::from_rows(&[[1.0, 3.0], [2.0, 3.0], [4.0, 3.0]]).unwrap();
        let y = Matrix::from_rows(&[[0.5, 7.0], [0.1, 7.0], [0.9, 7.0]]).unwrap();
        let c = correlation_map(&x, &y, names("f", 2), names("t", 2)).unwrap();
        assert_eq!(c.r.get(1, 0), 0.0);
        assert_eq!(c.r.get(0, 1), 0.0);
        assert_ne!(c.r.get(0, 0), 0.0);
    }

    #[test]
    fn correlation_requires_two_rows() {
        let x = Matrix::zeros(1, 1);
        assert!(correlation_map(&x, &x, names("f", 1), names("t", 1)).is_err());
    }

    #[test]
    fn weak_feature_dropped() {
        let m = map_of(&[&[0.3, -0.5], &[0.05, -0.05], &[-0.9, 0.4]]);
        let s = select_features(&m, 0.1).unwrap();
        assert_eq!(s.kept, vec![0, 2]);
        assert_eq!(s.dropped, vec![1]);
        let all = select_features(&m, 0.0).unwrap();
        assert_eq!(all.kept, vec![0, 1, 2]);
        assert!(select_features(&m, 0.95).is_err());
        assert!(select_features(&m, -0.1).is_err());
    }

    #[test]
    fn long_export_masks_weak_cells() {
        let m = map_of(&[&[0.3, 0.05]]);
        let long = m.to_long_csv();
        let lines: Vec<&str> = long.lines().collect();
        assert_eq!(lines[0], "feature,target,r,masked");
        assert!(lines[1].ends_with(",false"));
        assert!(lines[2].ends_with(",true"));
    }

    #[test]
    fn rank_one_line() {
        let x = Matrix::from_rows(
            &(0..8)
                .map(|i| [i as f64, 3.0 * i as f64])
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let p = fit_pca(&x, 2).unwrap();
        let total: f64 = {
            let m = x.column_means();
            x.iter_rows()
                .map(|r| (r[0] - m[0]).powi(2) + (r[1] - m[1]).powi(2))
                .sum::<f64>()
                / 8.0
        };
        assert!((p.explained_variance[0] - total).abs() < 1e-10);
        assert!(p.explained_variance[1].abs() <= 1e-12);

        let p1 = fit_pca(&x, 1).unwrap();
        let z = p1.transform(&x).unwrap();
        let zm = z.column_means()[0];
        let var = z.column(0).iter().map(|v| (v - zm).powi(2)).sum::<f64>() / 8.0;
        assert!((var - p1.explained_variance[0]).abs() < 1e-10);
        assert!(zm.abs() < 1e-12);
    }

    #[test]
    fn mean_rows_map_to_origin() {
        let x = Matrix::from_rows(&[
            [1.0, 2.0, 0.0],
            [3.0, -1.0, 2.0],
            [0.0, 0.5, 1.0],
            [2.0, 2.0, 2.0],
        ])
        .unwrap();
        let p = fit_pca(&x, 2).unwrap();
        let z = p
            .transform(&Matrix::from_rows(std::slice::from_ref(&p.mean)).unwrap())
            .unwrap();
        assert!(z.as_slice().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn sign_convention_positive_leading_entry() {
        let x = Matrix::from_rows(&[[1.0, -2.0], [-1.0, 2.1], [0.5, -0.9], [-0.4, 1.0]]).unwrap();
        let p = fit_pca(&x, 2).unwrap();
        for row in p.components.iter_rows() {
            let lead = row
                .iter()
                .copied()
                .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn pca_rejects_bad_k() {
        let x = Matrix::zeros(4, 3);
        assert!(fit_pca(&x, 4).is_err());
        assert!(fit_pca(&x, 0).is_err());
        assert!(fit_pca(&Matrix::zeros(1, 3), 1).is_err());
    }
}
