//! MSE metric, randomized search, k-fold and nested cross-validation.

mod space;

use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{extract_fold, Dataset, HOLDOUT, N_FOLDS};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{FeaturePlan, FittedPipeline, ModelKind, ModelParams, Preprocessor};
use crate::seed;

pub use space::{
    default_params, sample_candidates, Candidate, ParamRange, ParamSpace, ParamValue,
    FOREST_PARAMS, MLP_PARAMS,
};

/// Mean of `(y - yhat)^2` over all entries.
pub fn mse(y: &Matrix, yhat: &Matrix) -> Result<f64> {
    if y.shape() != yhat.shape() {
        return Err(Error::dimension(format!(
            "cannot compare {:?} with {:?}",
            y.shape(),
            yhat.shape()
        )));
    }
    let n = y.as_slice().len();
    if n == 0 {
        return Err(Error::validation("MSE of an empty matrix is undefined"));
    }
    let sum: f64 = y
        .as_slice()
        .iter()
        .zip(yhat.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n as f64)
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Where in the tuning procedure a fit/score happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Stage {
    /// Plain k-fold CV, validation fold `fold`.
    Cv { fold: usize },
    /// Inner CV of nested CV.
    Inner {
        outer: usize,
        candidate: usize,
        fold: usize,
    },
    /// Refit of the inner winner, scored on the outer fold.
    Refit { outer: usize },
}

/// One fit/score event, recorded for leakage audits.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub stage: Stage,
    pub fit_rows: Vec<usize>,
    pub score_rows: Vec<usize>,
    pub preprocessor: Preprocessor,
}

#[derive(Debug, Default)]
pub struct TraceLog {
    events: Mutex<Vec<TraceEvent>>,
}

impl TraceLog {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, e: TraceEvent) {
        self.events.lock().expect("trace lock").push(e);
    }

    pub fn events(&self) -> Vec<TraceEvent> {
        self.events.lock().expect("trace lock").clone()
    }
}

/// Fits on one partition and returns the MSE on another.
pub trait FoldScorer: Sync {
    fn score(
        &self,
        stage: Stage,
        params: &ModelParams,
        plan: &FeaturePlan,
        fit: &Dataset,
        val: &Dataset,
        group: &str,
    ) -> Result<f64>;
}

/// The real scorer: fit preprocessing and model on `fit`, predict `val`.
#[derive(Debug, Default)]
pub struct ModelScorer<'a> {
    pub trace: Option<&'a TraceLog>,
}

impl FoldScorer for ModelScorer<'_> {
    fn score(
        &self,
        stage: Stage,
        params: &ModelParams,
        plan: &FeaturePlan,
        fit: &Dataset,
        val: &Dataset,
        group: &str,
    ) -> Result<f64> {
        let pipeline = FittedPipeline::fit(plan, params, &fit.x, fit.target(group)?)?;
        let pred = pipeline.predict(&val.x)?;
        if let Some(trace) = self.trace {
            trace.push(TraceEvent {
                stage,
                fit_rows: fit.row_ids.clone(),
                score_rows: val.row_ids.clone(),
                preprocessor: pipeline.preprocessor.clone(),
            });
        }
        mse(val.target(group)?, &pred)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
    pub std_mse: f64,
}

impl CvScore {
    fn from_scores(fold_mse: Vec<f64>) -> Self {
        let (mean_mse, std_mse) = mean_std(&fold_mse);
        CvScore {
            fold_mse,
            mean_mse,
            std_mse,
        }
    }
}

fn check_cv_data(train: &Dataset) -> Result<()> {
    if train.folds.contains(&HOLDOUT) {
        return Err(Error::validation(
            "cross-validation data contains hold-out rows",
        ));
    }
    Ok(())
}

/// Each fold of `folds` in turn validates a model fitted on the others.
#[allow(clippy::too_many_arguments)]
fn cv_over(
    scorer: &dyn FoldScorer,
    params: &ModelParams,
    plan: &FeaturePlan,
    data: &Dataset,
    group: &str,
    folds: &[usize],
    seed_for: impl Fn(usize) -> u64,
    stage_for: impl Fn(usize) -> Stage,
) -> Result<CvScore> {
    let mut scores = Vec::with_capacity(folds.len());
    for &k in folds {
        let rest: Vec<usize> = folds.iter().copied().filter(|&f| f != k).collect();
        let fit = data.with_folds(&rest);
        let val = data.with_folds(&[k]);
        if val.is_empty() || fit.is_empty() {
            return Err(
                Error::validation(format!("fold {k} leaves an empty partition")).in_fold(k),
            );
        }
        let p = params.clone().with_seed(seed_for(k));
        scores.push(
            scorer
                .score(stage_for(k), &p, plan, &fit, &val, group)
                .map_err(|e| e.in_fold(k))?,
        );
    }
    Ok(CvScore::from_scores(scores))
}

/// 5-fold CV of one candidate. Fold `k` fits with seed `derive(derive(seed, CV), k)`.
pub fn cross_validate(
    candidate: &Candidate,
    train: &Dataset,
    group: &str,
    plan: &FeaturePlan,
    seed: u64,
) -> Result<CvScore> {
    cross_validate_with(&ModelScorer::default(), candidate, train, group, plan, seed)
}

pub fn cross_validate_with(
    scorer: &dyn FoldScorer,
    candidate: &Candidate,
    train: &Dataset,
    group: &str,
    plan: &FeaturePlan,
    seed: u64,
) -> Result<CvScore> {
    check_cv_data(train)?;
    train.target(group)?;
    let params = candidate.to_params(0)?;
    let cv_seed = seed::derive(seed, seed::CV);
    let folds: Vec<usize> = (0..N_FOLDS).collect();
    cv_over(
        scorer,
        &params,
        plan,
        train,
        group,
        &folds,
        |k| seed::derive(cv_seed, k as u64),
        |fold| Stage::Cv { fold },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub draw_index: usize,
    pub inner_mean_mse: f64,
    pub inner_std_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub best_candidate: Candidate,
    /// Inner-CV mean MSE of the winner.
    pub best_inner_mse: f64,
    /// MSE of the refitted winner on the outer fold.
    pub best_mse: f64,
    pub candidates: Vec<CandidateScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model_kind: ModelKind,
    pub target_group: String,
    pub feature_plan: FeaturePlan,
    pub space: ParamSpace,
    pub n_iter: usize,
    pub root_seed: u64,
    pub dataset_digest: String,
    pub folds: Vec<FoldRecord>,
    pub mean_mse: f64,
    pub std_mse: f64,
    pub wall_seconds: f64,
}

pub struct NestedCvConfig<'a> {
    pub space: &'a ParamSpace,
    pub n_iter: usize,
    pub group: &'a str,
    pub plan: &'a FeaturePlan,
    pub seed: u64,
}

/// Nested CV: each labeled fold in turn is the outer validation fold; a
/// randomized search scored by inner CV on the other four picks a candidate,
/// which is refitted on those four and scored once on the held fold.
pub fn nested_cv(cfg: &NestedCvConfig<'_>, train: &Dataset) -> Result<CvReport> {
    nested_cv_with(&ModelScorer::default(), cfg, train)
}

pub fn nested_cv_with(
    scorer: &dyn FoldScorer,
    cfg: &NestedCvConfig<'_>,
    train: &Dataset,
) -> Result<CvReport> {
    let start = Instant::now();
    check_cv_data(train)?;
    train.target(cfg.group)?;
    cfg.space.validate()?;
    if cfg.n_iter == 0 {
        return Err(Error::validation("n_iter must be positive"));
    }

    let mut folds = Vec::with_capacity(N_FOLDS);
    for k in 0..N_FOLDS {
        let outer_seed = seed::derive(cfg.seed, seed::OUTER + k as u64);
        let (outer_fit, outer_val) = extract_fold(train, k).map_err(|e| e.in_fold(k))?;
        let inner_folds: Vec<usize> = (0..N_FOLDS).filter(|&f| f != k).collect();
        let candidates = sample_candidates(
            cfg.space,
            cfg.n_iter,
            seed::derive(outer_seed, seed::SEARCH),
        )?;

        let scores: Vec<CvScore> = candidates
            .par_iter()
            .map(|c| {
                let i = c.draw_index;
                let cand_seed = seed::derive(outer_seed, seed::CANDIDATE + i as u64);
                let params = c.to_params(0).map_err(|e| e.in_candidate(k, i))?;
                cv_over(
                    scorer,
                    &params,
                    cfg.plan,
                    &outer_fit,
                    cfg.group,
                    &inner_folds,
                    |j| seed::derive(cand_seed, j as u64),
                    |j| Stage::Inner {
                        outer: k,
                        candidate: i,
                        fold: j,
                    },
                )
                .map_err(|e| e.in_candidate(k, i))
            })
            .collect::<Result<_>>()?;

        let best = (0..scores.len())
            .min_by(|&a, &b| {
                scores[a]
                    .mean_mse
                    .total_cmp(&scores[b].mean_mse)
                    .then(a.cmp(&b))
            })
            .expect("n_iter > 0");
        let winner = &candidates[best];
        let params = winner
            .to_params(seed::derive(outer_seed, seed::REFIT))
            .map_err(|e| e.in_candidate(k, best))?;
        let best_mse = scorer
            .score(
                Stage::Refit { outer: k },
                &params,
                cfg.plan,
                &outer_fit,
                &outer_val,
                cfg.group,
            )
            .map_err(|e| e.in_candidate(k, best))?;

        folds.push(FoldRecord {
            fold: k,
            best_candidate: winner.clone(),
            best_inner_mse: scores[best].mean_mse,
            best_mse,
            candidates: candidates
                .iter()
                .zip(&scores)
                .map(|(c, s)| CandidateScore {
                    draw_index: c.draw_index,
                    inner_mean_mse: s.mean_mse,
                    inner_std_mse: s.std_mse,
                })
                .collect(),
        });
    }

    let outer: Vec<f64> = folds.iter().map(|f| f.best_mse).collect();
    let (mean_mse, std_mse) = mean_std(&outer);
    Ok(CvReport {
        model_kind: cfg.space.model_kind,
        target_group: cfg.group.to_owned(),
        feature_plan: cfg.plan.clone(),
        space: cfg.space.clone(),
        n_iter: cfg.n_iter,
        root_seed: cfg.seed,
        dataset_digest: train.digest(),
        folds,
        mean_mse,
        std_mse,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Candidate of the fold with the lowest outer MSE; lowest fold index on ties.
pub fn select_best(report: &CvReport) -> Result<&Candidate> {
    report
        .folds
        .iter()
        .min_by(|a, b| a.best_mse.total_cmp(&b.best_mse).then(a.fold.cmp(&b.fold)))
        .map(|f| &f.best_candidate)
        .ok_or_else(|| Error::validation("CV report has no fold records"))
}
