use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{valid_fold, Dataset, Manifest};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::persist::{fmt_f64, read_json, write_json, write_text};

/// File names used inside a dataset directory.
pub const CSV_FILE: &str = "data.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn load_dataset(
    csv_path: impl AsRef<Path>,
    manifest_path: impl AsRef<Path>,
) -> Result<Dataset> {
    let manifest: Manifest = read_json(manifest_path)?;
    manifest.validate()?;
    let csv_path = csv_path.as_ref();
    let csv_err = |source| Error::Csv {
        path: csv_path.to_owned(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(csv_path)
        .map_err(csv_err)?;
    let header: HashMap<String, usize> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_owned(), i))
        .collect();
    let locate = |name: &str| {
        header
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };

    let feature_cols = manifest
        .features
        .iter()
        .map(|f| locate(&f.name))
        .collect::<Result<Vec<_>>>()?;
    let group_cols = manifest
        .targets
        .iter()
        .map(|g| {
            g.columns
                .iter()
                .map(|c| locate(c))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let fold_col = locate(&manifest.fold_column)?;

    let mut x = Vec::new();
    let mut ys: Vec<Vec<f64>> = vec![Vec::new(); manifest.targets.len()];
    let mut folds = Vec::new();
    let header_names: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();

    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(csv_err)?;
        let cell = |col: usize| -> Result<f64> {
            let raw = record.get(col).ok_or_else(|| Error::Parse {
                row,
                column: header_names[col].clone(),
                message: "missing cell".into(),
            })?;
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: header_names[col].clone(),
                message: format!("cannot parse `{raw}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: header_names[col].clone(),
                    message: format!("non-finite value `{raw}`"),
                });
            }
            Ok(v)
        };
        for &c in &feature_cols {
            x.push(cell(c)?);
        }
        for (y, cols) in ys.iter_mut().zip(&group_cols) {
            for &c in cols {
                y.push(cell(c)?);
            }
        }
        let f = cell(fold_col)?;
        if f.fract() != 0.0 || !(-128.0..=127.0).contains(&f) || !valid_fold(f as i8) {
            return Err(Error::validation(format!(
                "row {row}: fold value {f} outside {{-1, 0..4}}"
            )));
        }
        folds.push(f as i8);
    }

    let n = folds.len();
    let x = Matrix::from_vec(n, feature_cols.len(), x)?;
    let targets = ys
        .into_iter()
        .zip(&group_cols)
        .map(|(y, cols)| Matrix::from_vec(n, cols.len(), y))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(x, targets, folds, manifest)
}

pub fn save_dataset(
    d: &Dataset,
    csv_path: impl AsRef<Path>,
    manifest_path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = String::new();
    let header: Vec<&str> = d.manifest.all_columns().collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..d.len() {
        for v in d.x.row(r) {
            out.push_str(&fmt_f64(*v));
            out.push(',');
        }
        for y in &d.targets {
            for v in y.row(r) {
                out.push_str(&fmt_f64(*v));
                out.push(',');
            }
        }
        let _ = writeln!(out, "{}", d.folds[r]);
    }
    write_text(csv_path, &out)?;
    write_json(&d.manifest, manifest_path)
}

/// Loads `data.csv` + `manifest.json` from a dataset directory.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    load_dataset(dir.join(CSV_FILE), dir.join(MANIFEST_FILE))
}

pub fn save_dir(d: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    save_dataset(d, dir.join(CSV_FILE), dir.join(MANIFEST_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureSpec, TargetGroup};

    fn manifest() -> Manifest {
        Manifest {
            features: vec![
                FeatureSpec {
                    name: "ne".into(),
                    lo: 0.0,
                    hi: 1.0,
                },
                FeatureSpec {
                    name: "zeff".into(),
                    lo: 1.0,
                    hi: 3.0,
                },
            ],
            targets: vec![
                TargetGroup {
                    group: "current".into(),
                    columns: vec!["cur_00".into()],
                },
                TargetGroup {
                    group: "powers".into(),
                    columns: vec!["pow_00".into()],
                },
            ],
            fold_column: "fold".into(),
        }
    }

    fn write_case(dir: &Path, csv: &str) -> (std::path::PathBuf, std::path::PathBuf) {
        let c = dir.join("d.csv");
        let m = dir.join("m.json");
        std::fs::write(&c, csv).unwrap();
        write_json(&manifest(), &m).unwrap();
        (c, m)
    }

    #[test]
    fn loads_five_rows() {
        let dir = tempfile::tempdir().unwrap();
        let csv = "ne,zeff,cur_00,pow_00,fold\n\
                   0.1,1.5,1,2,0\n0.2,1.6,1,2,1\n0.3,1.7,1,2,2\n0.4,1.8,1,2,-1\n0.5,1.9,1,2,4\n";
        let (c, m) = write_case(dir.path(), csv);
        let d = load_dataset(&c, &m).unwrap();
        assert_eq!(d.len(), 5);
        assert_eq!(d.folds, vec![0, 1, 2, -1, 4]);
        assert_eq!(d.x.get(4, 1), 1.9);
    }

    #[test]
    fn column_order_in_file_is_irrelevant() {
        let dir = tempfile::tempdir().unwrap();
        let (c, m) = write_case(dir.path(), "fold,pow_00,cur_00,zeff,ne\n3,2,1,1.5,0.1\n");
        let d = load_dataset(&c, &m).unwrap();
        assert_eq!(d.x.row(0), &[0.1, 1.5]);
        assert_eq!(d.targets[1].get(0, 0), 2.0);
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let (c, m) = write_case(dir.path(), "ne,cur_00,pow_00,fold\n0.1,1,2,0\n");
        let err = load_dataset(&c, &m).unwrap_err();
        assert!(matches!(&err, Error::MissingColumn(name) if name == "zeff"));
        assert!(err.to_string().contains("zeff"));
    }

    #[test]
    fn nan_cell_reports_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let (c, m) = write_case(
            dir.path(),
            "ne,zeff,cur_00,pow_00,fold\n0.1,1.5,1,2,0\n0.1,1.5,1,NaN,0\n",
        );
        match load_dataset(&c, &m).unwrap_err() {
            Error::Parse { row, column, .. } => assert_eq!((row, column.as_str()), (2, "pow_00")),
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn unparseable_cell_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (c, m) = write_case(dir.path(), "ne,zeff,cur_00,pow_00,fold\nabc,1.5,1,2,0\n");
        assert!(matches!(
            load_dataset(&c, &m),
            Err(Error::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn out_of_range_fold_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (c, m) = write_case(dir.path(), "ne,zeff,cur_00,pow_00,fold\n0.1,1.5,1,2,7\n");
        assert!(matches!(load_dataset(&c, &m), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dir(dir.path()).unwrap_err();
        assert!(err.is_io());
    }
}
