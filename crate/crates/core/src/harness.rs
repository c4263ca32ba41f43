//! Final training on the whole training partition, hold-out evaluation,
//! case ranking, and report export.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{split_holdout, Dataset, HOLDOUT};
use crate::error::{Error, Result};
use crate::featsel::{correlation_map, select_features, CorrelationMap, DEFAULT_THRESHOLD};
use crate::matrix::Matrix;
use crate::model::{FeatureMode, FeaturePlan, FittedPipeline, ModelKind, Preprocessor};
use crate::persist::{fmt_f64, write_json, write_text};
use crate::seed;
use crate::tuning::{
    mean_std, mse, nested_cv, select_best, Candidate, CvReport, NestedCvConfig, ParamSpace,
};

/// Number of principal components used when a PCA plan is requested without `k`.
pub const DEFAULT_PCA_COMPONENTS: usize = 5;

pub const TIMING_BOUNDARY: &str =
    "monotonic wall clock around the model fit/predict calls only; excludes I/O, standardization, selection and PCA";

/// Correlations between every feature and every column of `group`.
pub fn group_correlations(data: &Dataset, group: &str) -> Result<CorrelationMap> {
    let g = data.manifest.group_index(group)?;
    correlation_map(
        &data.x,
        data.target(group)?,
        data.manifest.feature_names(),
        data.manifest.targets[g].columns.clone(),
    )
}

/// Builds the concrete feature plan for `mode` from the training partition.
pub fn resolve_plan(
    mode: FeatureMode,
    train: &Dataset,
    group: &str,
    threshold: f64,
    k: usize,
) -> Result<FeaturePlan> {
    Ok(match mode {
        FeatureMode::All => FeaturePlan::All,
        FeatureMode::Reduced => FeaturePlan::Reduced {
            selection: select_features(&group_correlations(train, group)?, threshold)?,
        },
        FeatureMode::Pca => FeaturePlan::Pca { k },
    })
}

/// A pipeline fitted on the full training partition, with what is needed to evaluate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model_kind: ModelKind,
    pub target_group: String,
    pub feature_plan: FeaturePlan,
    pub candidate: Candidate,
    pub root_seed: u64,
    pub model_seed: u64,
    pub cv_mean_mse: f64,
    pub cv_std_mse: f64,
    pub train_digest: String,
    /// Per-output training-target means, the mean-predictor baseline.
    pub baseline_means: Vec<f64>,
    pub pipeline: FittedPipeline,
    pub train_seconds: f64,
}

/// Fits preprocessing on every training row, then the model under `seed`.
/// Only the model fit is timed.
pub fn train_final(
    candidate: &Candidate,
    plan: &FeaturePlan,
    train: &Dataset,
    group: &str,
    seed: u64,
) -> Result<(FittedPipeline, f64)> {
    if train.folds.contains(&HOLDOUT) {
        return Err(Error::validation(
            "final training data contains hold-out rows",
        ));
    }
    let y = train.target(group)?;
    let params = candidate.to_params(seed)?;
    let preprocessor = Preprocessor::fit(plan, &train.x)?;
    let z = preprocessor.transform(&train.x)?;
    let start = Instant::now();
    let model = params.fit(&z, y)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok((
        FittedPipeline {
            preprocessor,
            model,
        },
        seconds,
    ))
}

/// Trains the candidate that won `report`'s best outer fold, seeded from the report's root seed.
pub fn train_from_report(report: &CvReport, train: &Dataset) -> Result<TrainedModel> {
    if train.digest() != report.dataset_digest {
        return Err(Error::validation(
            "training data differs from the data the CV report was computed on",
        ));
    }
    let candidate = select_best(report)?.clone();
    let model_seed = seed::derive(report.root_seed, seed::FINAL);
    let (pipeline, train_seconds) = train_final(
        &candidate,
        &report.feature_plan,
        train,
        &report.target_group,
        model_seed,
    )?;
    Ok(TrainedModel {
        model_kind: report.model_kind,
        target_group: report.target_group.clone(),
        feature_plan: report.feature_plan.clone(),
        candidate,
        root_seed: report.root_seed,
        model_seed,
        cv_mean_mse: report.mean_mse,
        cv_std_mse: report.std_mse,
        train_digest: train.digest(),
        baseline_means: train.target(&report.target_group)?.column_means(),
        pipeline,
        train_seconds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub train_seconds: f64,
    /// Batch predict time divided by the number of hold-out records.
    pub inference_seconds_per_record: f64,
    /// Median over hold-out records of a one-row predict call.
    pub inference_seconds_single: f64,
    pub boundary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseProfile {
    pub index: usize,
    pub mse: f64,
    pub truth: Vec<f64>,
    pub predicted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseTriplet {
    pub good: CaseProfile,
    pub average: CaseProfile,
    pub poor: CaseProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalReport {
    pub model_kind: ModelKind,
    pub target_group: String,
    pub feature_mode: FeatureMode,
    pub feature_plan: FeaturePlan,
    pub candidate: Candidate,
    pub root_seed: u64,
    pub model_seed: u64,
    pub train_digest: String,
    pub test_digest: String,
    pub cv_mean_mse: f64,
    pub cv_std_mse: f64,
    pub holdout_mse: f64,
    pub baseline_mse: f64,
    /// Mean over each record's outputs.
    pub per_record_mse: Vec<f64>,
    pub cases: CaseTriplet,
    pub timing: Timing,
}

impl FinalReport {
    pub fn key(&self) -> (ModelKind, FeatureMode, String) {
        (
            self.model_kind,
            self.feature_mode,
            self.target_group.clone(),
        )
    }

    fn stem(&self) -> String {
        format!(
            "{}_{}_{}",
            self.model_kind, self.feature_mode, self.target_group
        )
    }
}

/// Mean over columns of the squared error, one value per row.
pub fn per_record_mse(y: &Matrix, yhat: &Matrix) -> Result<Vec<f64>> {
    mse(y, yhat)?;
    Ok(y.iter_rows()
        .zip(yhat.iter_rows())
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() / a.len() as f64)
        .collect())
}

/// `(good, average, poor)` record indices: minimum, nearest the median, and
/// maximum per-record MSE. Lowest index wins ties.
pub fn rank_cases(per_record: &[f64]) -> Result<(usize, usize, usize)> {
    let t = per_record.len();
    if t < 3 {
        return Err(Error::validation(format!(
            "case ranking needs at least 3 records, got {t}"
        )));
    }
    let mut sorted = per_record.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if t % 2 == 1 {
        sorted[t / 2]
    } else {
        0.5 * (sorted[t / 2 - 1] + sorted[t / 2])
    };
    let argmin_by = |key: &dyn Fn(f64) -> f64| {
        (0..t)
            .min_by(|&a, &b| {
                key(per_record[a])
                    .total_cmp(&key(per_record[b]))
                    .then(a.cmp(&b))
            })
            .expect("t >= 3")
    };
    let good = argmin_by(&|v| v);
    let poor = argmin_by(&|v| -v);
    let average = argmin_by(&|v| (v - median).abs());
    Ok((good, average, poor))
}

fn case_triplet(per_record: &[f64], truth: &Matrix, pred: &Matrix) -> Result<CaseTriplet> {
    let (g, a, p) = rank_cases(per_record)?;
    let profile = |i: usize| CaseProfile {
        index: i,
        mse: per_record[i],
        truth: truth.row(i).to_vec(),
        predicted: pred.row(i).to_vec(),
    };
    Ok(CaseTriplet {
        good: profile(g),
        average: profile(a),
        poor: profile(p),
    })
}

/// Scores a trained model on the hold-out rows.
pub fn evaluate_holdout(trained: &TrainedModel, test: &Dataset) -> Result<FinalReport> {
    if test.is_empty() {
        return Err(Error::validation("hold-out set is empty"));
    }
    if test.folds.iter().any(|&f| f != HOLDOUT) {
        return Err(Error::validation(
            "evaluation data contains non-hold-out rows",
        ));
    }
    let y = test.target(&trained.target_group)?;
    let z = trained.pipeline.preprocessor.transform(&test.x)?;
    let model = &trained.pipeline.model;

    let start = Instant::now();
    let pred = model.predict(&z)?;
    let batch = start.elapsed().as_secs_f64() / test.len() as f64;

    let mut single = Vec::with_capacity(test.len());
    for r in 0..z.rows() {
        let row = Matrix::from_vec(1, z.cols(), z.row(r).to_vec())?;
        let start = Instant::now();
        model.predict(&row)?;
        single.push(start.elapsed().as_secs_f64());
    }
    single.sort_by(f64::total_cmp);
    let single_median = single[single.len() / 2];

    let per_record = per_record_mse(y, &pred)?;
    let (holdout_mse, _) = mean_std(&per_record);
    let baseline = Matrix::from_rows(&vec![trained.baseline_means.clone(); y.rows()])?;

    Ok(FinalReport {
        model_kind: trained.model_kind,
        target_group: trained.target_group.clone(),
        feature_mode: trained.feature_plan.mode(),
        feature_plan: trained.feature_plan.clone(),
        candidate: trained.candidate.clone(),
        root_seed: trained.root_seed,
        model_seed: trained.model_seed,
        train_digest: trained.train_digest.clone(),
        test_digest: test.digest(),
        cv_mean_mse: trained.cv_mean_mse,
        cv_std_mse: trained.cv_std_mse,
        holdout_mse,
        baseline_mse: mse(y, &baseline)?,
        cases: case_triplet(&per_record, y, &pred)?,
        per_record_mse: per_record,
        timing: Timing {
            train_seconds: trained.train_seconds,
            inference_seconds_per_record: batch,
            inference_seconds_single: single_median,
            boundary: TIMING_BOUNDARY.to_owned(),
        },
    })
}

pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const REPORTS_FILE: &str = "reports.json";

/// Long-format profile table for one report: one row per (case, output index).
pub fn cases_csv(r: &FinalReport) -> String {
    let mut s = String::from("case,record,output,truth,predicted\n");
    for (name, c) in [
        ("good", &r.cases.good),
        ("average", &r.cases.average),
        ("poor", &r.cases.poor),
    ] {
        for (i, (t, p)) in c.truth.iter().zip(&c.predicted).enumerate() {
            let _ = writeln!(s, "{name},{},{i},{},{}", c.index, fmt_f64(*t), fmt_f64(*p));
        }
    }
    s
}

pub fn cases_file_name(r: &FinalReport) -> String {
    format!("cases_{}.csv", r.stem())
}

pub fn report_file_name(r: &FinalReport) -> String {
    format!("{}.json", r.stem())
}

/// Writes the summary table, timing table, per-report case profiles and the
/// combined report JSON into `out_dir`. Rows are sorted by model, feature
/// mode, then target group. Returns the written paths.
pub fn make_report(reports: &[FinalReport], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    if reports.is_empty() {
        return Err(Error::validation("no evaluations to report"));
    }
    let mut sorted: Vec<&FinalReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.key());
    let mut seen = BTreeSet::new();
    for r in &sorted {
        if !seen.insert(r.key()) {
            return Err(Error::validation(format!(
                "duplicate evaluation for {}",
                r.stem()
            )));
        }
    }

    let mut summary =
        String::from("model,features,group,cv_mean_mse,cv_std_mse,holdout_mse,baseline_mse\n");
    let mut timings =
        String::from("model,features,group,train_minutes,inference_ms_batch,inference_ms_single\n");
    for r in &sorted {
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{}",
            r.model_kind,
            r.feature_mode,
            r.target_group,
            fmt_f64(r.cv_mean_mse),
            fmt_f64(r.cv_std_mse),
            fmt_f64(r.holdout_mse),
            fmt_f64(r.baseline_mse)
        );
        let _ = writeln!(
            timings,
            "{},{},{},{},{},{}",
            r.model_kind,
            r.feature_mode,
            r.target_group,
            fmt_f64(r.timing.train_seconds / 60.0),
            fmt_f64(r.timing.inference_seconds_per_record * 1e3),
            fmt_f64(r.timing.inference_seconds_single * 1e3)
        );
    }

    let mut written = Vec::new();
    let mut emit = |name: String, text: &str| -> Result<()> {
        let path = out_dir.join(name);
        write_text(&path, text)?;
        written.push(path);
        Ok(())
    };
    emit(SUMMARY_FILE.to_owned(), &summary)?;
    emit(TIMINGS_FILE.to_owned(), &timings)?;
    for r in &sorted {
        emit(cases_file_name(r), &cases_csv(r))?;
    }
    let path = out_dir.join(REPORTS_FILE);
    write_json(&sorted, &path)?;
    written.push(path);
    Ok(written)
}

/// One end-to-end run on a dataset with hold-out labels.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model_kind: ModelKind,
    pub group: String,
    pub features: FeatureMode,
    pub n_iter: usize,
    pub seed: u64,
    pub space: Option<ParamSpace>,
    pub threshold: f64,
    pub pca_components: usize,
}

impl Experiment {
    pub fn new(
        model_kind: ModelKind,
        group: &str,
        features: FeatureMode,
        n_iter: usize,
        seed: u64,
    ) -> Self {
        Experiment {
            model_kind,
            group: group.to_owned(),
            features,
            n_iter,
            seed,
            space: None,
            threshold: DEFAULT_THRESHOLD,
            pca_components: DEFAULT_PCA_COMPONENTS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub cv: CvReport,
    pub model: TrainedModel,
    pub report: FinalReport,
}

/// Tune, train and evaluate in sequence.
pub fn run_experiment(data: &Dataset, e: &Experiment) -> Result<ExperimentOutcome> {
    let (train, test) = split_holdout(data)?;
    let plan = resolve_plan(e.features, &train, &e.group, e.threshold, e.pca_components)?;
    let space = e
        .space
        .clone()
        .unwrap_or_else(|| ParamSpace::default_for(e.model_kind));
    if space.model_kind != e.model_kind {
        return Err(Error::validation(
            "search space is for a different model kind",
        ));
    }
    let cv = nested_cv(
        &NestedCvConfig {
            space: &space,
            n_iter: e.n_iter,
            group: &e.group,
            plan: &plan,
            seed: e.seed,
        },
        &train,
    )?;
    let model = train_from_report(&cv, &train)?;
    let report = evaluate_holdout(&model, &test)?;
    Ok(ExperimentOutcome { cv, model, report })
}
