//! Declarative hyperparameter spaces and seeded random sampling.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{ForestParams, MaxFeatures};
use crate::mlp::{Activation, MlpParams};
use crate::model::{ModelKind, ModelParams};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
    Layers(Vec<usize>),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Real(r) => write!(f, "{r}"),
            ParamValue::Text(s) => f.write_str(s),
            ParamValue::Layers(l) => {
                let parts: Vec<String> = l.iter().map(usize::to_string).collect();
                write!(f, "[{}]", parts.join(","))
            }
        }
    }
}

impl From<i64> for ParamValue {
    fn from(v: i64) -> Self {
        ParamValue::Int(v)
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Real(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Text(v.to_owned())
    }
}

impl From<Vec<usize>> for ParamValue {
    fn from(v: Vec<usize>) -> Self {
        ParamValue::Layers(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRange {
    /// Uniform over the listed values.
    Choice(Vec<ParamValue>),
    /// Uniform over `lo..=hi`.
    IntRange { lo: i64, hi: i64 },
    /// `exp(U(ln lo, ln hi))`.
    LogUniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub model_kind: ModelKind,
    pub entries: BTreeMap<String, ParamRange>,
}

/// One sampled configuration. Parameters absent from `assignments` keep the
/// model's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub model_kind: ModelKind,
    pub assignments: BTreeMap<String, ParamValue>,
    pub draw_index: usize,
}

pub const FOREST_PARAMS: [&str; 6] = [
    "n_estimators",
    "max_depth",
    "min_samples_split",
    "min_samples_leaf",
    "max_features",
    "bootstrap",
];

pub const MLP_PARAMS: [&str; 8] = [
    "hidden_layers",
    "activation",
    "learning_rate",
    "l2_alpha",
    "batch_size",
    "max_epochs",
    "early_stop_patience",
    "validation_fraction",
];

fn known_params(kind: ModelKind) -> &'static [&'static str] {
    match kind {
        ModelKind::Forest => &FOREST_PARAMS,
        ModelKind::Mlp => &MLP_PARAMS,
    }
}

fn bad(name: &str, v: &ParamValue) -> Error {
    Error::validation(format!("invalid value `{v}` for parameter `{name}`"))
}

fn as_count(name: &str, v: &ParamValue) -> Result<usize> {
    match v {
        ParamValue::Int(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(bad(name, v)),
    }
}

fn as_real(name: &str, v: &ParamValue) -> Result<f64> {
    match v {
        ParamValue::Real(r) => Ok(*r),
        ParamValue::Int(i) => Ok(*i as f64),
        _ => Err(bad(name, v)),
    }
}

/// Count or the text `none` (unlimited / disabled).
fn as_optional_count(name: &str, v: &ParamValue) -> Result<Option<usize>> {
    match v {
        ParamValue::Text(s) if s == "none" => Ok(None),
        _ => as_count(name, v).map(Some),
    }
}

fn apply_forest(p: &mut ForestParams, name: &str, v: &ParamValue) -> Result<()> {
    match name {
        "n_estimators" => p.n_estimators = as_count(name, v)?,
        "max_depth" => p.max_depth = as_optional_count(name, v)?,
        "min_samples_split" => p.min_samples_split = as_count(name, v)?,
        "min_samples_leaf" => p.min_samples_leaf = as_count(name, v)?,
        "max_features" => {
            p.max_features = match v {
                ParamValue::Text(s) if s == "all" => MaxFeatures::All,
                ParamValue::Text(s) if s == "sqrt" => MaxFeatures::Sqrt,
                ParamValue::Real(f) => MaxFeatures::Fraction(*f),
                _ => return Err(bad(name, v)),
            }
        }
        "bootstrap" => {
            p.bootstrap = match v {
                ParamValue::Bool(b) => *b,
                _ => return Err(bad(name, v)),
            }
        }
        _ => {
            return Err(Error::validation(format!(
                "`{name}` is not a forest parameter"
            )))
        }
    }
    Ok(())
}

fn apply_mlp(p: &mut MlpParams, name: &str, v: &ParamValue) -> Result<()> {
    match name {
        "hidden_layers" => {
            p.hidden_layers = match v {
                ParamValue::Layers(l) => l.clone(),
                ParamValue::Int(i) if *i > 0 => vec![*i as usize],
                _ => return Err(bad(name, v)),
            }
        }
        "activation" => {
            p.activation = match v {
                ParamValue::Text(s) if s == "relu" => Activation::Relu,
                ParamValue::Text(s) if s == "tanh" => Activation::Tanh,
                _ => return Err(bad(name, v)),
            }
        }
        "learning_rate" => p.learning_rate = as_real(name, v)?,
        "l2_alpha" => p.l2_alpha = as_real(name, v)?,
        "batch_size" => p.batch_size = as_count(name, v)?,
        "max_epochs" => p.max_epochs = as_count(name, v)?,
        "early_stop_patience" => p.early_stop_patience = as_optional_count(name, v)?,
        "validation_fraction" => p.validation_fraction = as_real(name, v)?,
        _ => {
            return Err(Error::validation(format!(
                "`{name}` is not an MLP parameter"
            )))
        }
    }
    Ok(())
}

/// Defaults used for parameters a space does not mention. Forest: 50 trees,
/// other settings as [`ForestParams::default`]. MLP: [`MlpParams::default`]
/// with 100 epochs.
pub fn default_params(kind: ModelKind) -> ModelParams {
    match kind {
        ModelKind::Forest => ModelParams::Forest(ForestParams {
            n_estimators: 50,
            ..ForestParams::default()
        }),
        ModelKind::Mlp => ModelParams::Mlp(MlpParams {
            max_epochs: 100,
            ..MlpParams::default()
        }),
    }
}

impl Candidate {
    /// Resolves the assignments into concrete model parameters seeded with `seed`.
    pub fn to_params(&self, seed: u64) -> Result<ModelParams> {
        let mut params = default_params(self.model_kind);
        for (name, v) in &self.assignments {
            match &mut params {
                ModelParams::Forest(p) => apply_forest(p, name, v)?,
                ModelParams::Mlp(p) => apply_mlp(p, name, v)?,
            }
        }
        match &params {
            ModelParams::Forest(p) => p.validate()?,
            ModelParams::Mlp(p) => p.validate()?,
        }
        Ok(params.with_seed(seed))
    }

    /// Compact `name=value` listing, in name order.
    pub fn describe(&self) -> String {
        let parts: Vec<String> = self
            .assignments
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        parts.join(" ")
    }
}

impl ParamRange {
    fn values_to_check(&self) -> Vec<ParamValue> {
        match self {
            ParamRange::Choice(vs) => vs.clone(),
            ParamRange::IntRange { lo, hi } => vec![ParamValue::Int(*lo), ParamValue::Int(*hi)],
            ParamRange::LogUniform { lo, hi } => vec![ParamValue::Real(*lo), ParamValue::Real(*hi)],
        }
    }

    fn sample(&self, rng: &mut seed::Rng) -> ParamValue {
        match self {
            ParamRange::Choice(vs) => vs[rng.random_range(0..vs.len())].clone(),
            ParamRange::IntRange { lo, hi } => ParamValue::Int(rng.random_range(*lo..=*hi)),
            ParamRange::LogUniform { lo, hi } => {
                if lo == hi {
                    ParamValue::Real(*lo)
                } else {
                    ParamValue::Real(rng.random_range(lo.ln()..hi.ln()).exp())
                }
            }
        }
    }
}

impl ParamSpace {
    pub fn new(model_kind: ModelKind) -> Self {
        ParamSpace {
            model_kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: &str, range: ParamRange) -> Self {
        self.entries.insert(name.to_owned(), range);
        self
    }

    /// Checks names, range bounds, and that every endpoint or listed value
    /// resolves to valid model parameters.
    pub fn validate(&self) -> Result<()> {
        let known = known_params(self.model_kind);
        for (name, range) in &self.entries {
            if !known.contains(&name.as_str()) {
                return Err(Error::validation(format!(
                    "`{name}` is not a {} parameter",
                    self.model_kind
                )));
            }
            match range {
                ParamRange::Choice(vs) if vs.is_empty() => {
                    return Err(Error::validation(format!(
                        "`{name}` has an empty choice list"
                    )))
                }
                ParamRange::IntRange { lo, hi } if lo > hi => {
                    return Err(Error::validation(format!(
                        "`{name}` range [{lo}, {hi}] is empty"
                    )))
                }
                ParamRange::LogUniform { lo, hi } if !(*lo > 0.0 && lo <= hi && hi.is_finite()) => {
                    return Err(Error::validation(format!(
                        "`{name}` log-uniform range [{lo}, {hi}] needs 0 < lo <= hi"
                    )))
                }
                _ => {}
            }
            for v in range.values_to_check() {
                let probe = Candidate {
                    model_kind: self.model_kind,
                    assignments: BTreeMap::from([(name.clone(), v)]),
                    draw_index: 0,
                };
                probe.to_params(0)?;
            }
        }
        Ok(())
    }

    /// Search space used when none is supplied.
    pub fn default_for(kind: ModelKind) -> ParamSpace {
        match kind {
            ModelKind::Forest => ParamSpace::new(kind)
                .with("n_estimators", ParamRange::IntRange { lo: 20, hi: 80 })
                .with(
                    "max_depth",
                    ParamRange::Choice(vec![10.into(), 16.into(), "none".into()]),
                )
                .with("min_samples_leaf", ParamRange::IntRange { lo: 1, hi: 4 })
                .with(
                    "max_features",
                    ParamRange::Choice(vec!["all".into(), 0.6.into(), "sqrt".into()]),
                ),
            ModelKind::Mlp => ParamSpace::new(kind)
                .with(
                    "hidden_layers",
                    ParamRange::Choice(vec![
                        vec![50].into(),
                        vec![100].into(),
                        vec![100, 50].into(),
                        vec![64, 64].into(),
                    ]),
                )
                .with(
                    "activation",
                    ParamRange::Choice(vec!["relu".into(), "tanh".into()]),
                )
                .with(
                    "learning_rate",
                    ParamRange::LogUniform { lo: 1e-2, hi: 1e-1 },
                )
                .with("l2_alpha", ParamRange::LogUniform { lo: 1e-6, hi: 1e-3 })
                .with("batch_size", ParamRange::Choice(vec![32.into(), 64.into()])),
        }
    }
}

/// Draws `n_iter` independent candidates; entries are visited in name order.
pub fn sample_candidates(space: &ParamSpace, n_iter: usize, seed: u64) -> Result<Vec<Candidate>> {
    space.validate()?;
    let mut rng = seed::rng(seed);
    Ok((0..n_iter)
        .map(|draw_index| Candidate {
            model_kind: space.model_kind,
            assignments: space
                .entries
                .iter()
                .map(|(name, range)| (name.clone(), range.sample(&mut rng)))
                .collect(),
            draw_index,
        })
        .collect())
}
