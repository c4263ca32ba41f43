//! Model kinds, feature plans, and the fitted preprocess + regress pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Standardizer;
use crate::error::{Error, Result};
use crate::featsel::{fit_pca, FeatureSelection, PcaTransform};
use crate::forest::{fit_forest, ForestModel, ForestParams};
use crate::matrix::Matrix;
use crate::mlp::{fit_mlp, MlpModel, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "rfr", alias = "forest")]
    Forest,
    #[serde(rename = "mlp")]
    Mlp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Forest => "rfr",
            ModelKind::Mlp => "mlp",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rfr" | "forest" => Ok(ModelKind::Forest),
            "mlp" => Ok(ModelKind::Mlp),
            _ => Err(Error::validation(format!(
                "unknown model kind `{s}` (expected rfr or mlp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    All,
    Reduced,
    Pca,
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::All => "all",
            FeatureMode::Reduced => "reduced",
            FeatureMode::Pca => "pca",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FeatureMode::All),
            "reduced" => Ok(FeatureMode::Reduced),
            "pca" => Ok(FeatureMode::Pca),
            _ => Err(Error::validation(format!("unknown feature mode `{s}`"))),
        }
    }
}

/// Which inputs a model sees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FeaturePlan {
    All,
    /// Columns outside the selection are never read.
    Reduced {
        selection: FeatureSelection,
    },
    /// Standardized features projected on `k` principal components fitted on the same rows.
    Pca {
        k: usize,
    },
}

impl FeaturePlan {
    pub fn mode(&self) -> FeatureMode {
        match self {
            FeaturePlan::All => FeatureMode::All,
            FeaturePlan::Reduced { .. } => FeatureMode::Reduced,
            FeaturePlan::Pca { .. } => FeatureMode::Pca,
        }
    }
}

/// Feature transform fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub selection: Option<FeatureSelection>,
    pub standardizer: Standardizer,
    pub pca: Option<PcaTransform>,
}

impl Preprocessor {
    pub fn fit(plan: &FeaturePlan, x: &Matrix) -> Result<Preprocessor> {
        let selection = match plan {
            FeaturePlan::Reduced { selection } => Some(selection.clone()),
            _ => None,
        };
        let x = match &selection {
            Some(s) => s.apply(x)?,
            None => x.clone(),
        };
        let standardizer = Standardizer::fit(&x)?;
        let pca = match plan {
            FeaturePlan::Pca { k } => Some(fit_pca(&standardizer.transform(&x)?, *k)?),
            _ => None,
        };
        Ok(Preprocessor {
            selection,
            standardizer,
            pca,
        })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        let x = match &self.selection {
            Some(s) => s.apply(x)?,
            None => x.clone(),
        };
        let z = self.standardizer.transform(&x)?;
        match &self.pca {
            Some(p) => p.transform(&z),
            None => Ok(z),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum ModelParams {
    Forest(ForestParams),
    Mlp(MlpParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Forest(_) => ModelKind::Forest,
            ModelParams::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            ModelParams::Forest(p) => p.seed = seed,
            ModelParams::Mlp(p) => p.seed = seed,
        }
        self
    }

    pub fn fit(&self, x: &Matrix, y: &Matrix) -> Result<Model> {
        match self {
            ModelParams::Forest(p) => fit_forest(x, y, p).map(Model::Forest),
            ModelParams::Mlp(p) => fit_mlp(x, y, p).map(Model::Mlp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum Model {
    Forest(ForestModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Forest(_) => ModelKind::Forest,
            Model::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Model::Forest(m) => m.predict(x),
            Model::Mlp(m) => m.predict(x),
        }
    }
}

/// Preprocessor and regressor fitted together on one set of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub preprocessor: Preprocessor,
    pub model: Model,
}

impl FittedPipeline {
    pub fn fit(
        plan: &FeaturePlan,
        params: &ModelParams,
        x: &Matrix,
        y: &Matrix,
    ) -> Result<FittedPipeline> {
        let preprocessor = Preprocessor::fit(plan, x)?;
        let model = params.fit(&preprocessor.transform(x)?, y)?;
        Ok(FittedPipeline {
            preprocessor,
            model,
        })
    }

    /// Predictions for raw (unstandardized) feature rows.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.model.predict(&self.preprocessor.transform(x)?)
    }
}
