//! Fitted ensembles: prediction and JSON persistence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gbm::{sigmoid, softmax};
use super::tree::Tree;
use super::{ForestParams, GbmParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MODEL_SCHEMA: &str = "attentrack-model/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Forest(ForestParams),
    Gbm(GbmParams),
}

impl ModelParams {
    pub fn seed(&self) -> u64 {
        match self {
            ModelParams::Forest(p) => p.seed,
            ModelParams::Gbm(p) => p.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Ensemble {
    Forest {
        trees: Vec<Tree>,
    },
    Gbm {
        /// Class indices seen in training; the model scores only these.
        classes: Vec<usize>,
        /// One raw score for two classes (logit of the second), else one per class.
        init: Vec<f64>,
        learning_rate: f64,
        stages: Vec<Vec<Tree>>,
        /// Mean training deviance before the first stage and after each stage.
        train_deviance: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub schema: String,
    pub class_names: Vec<String>,
    pub n_features: usize,
    pub params: ModelParams,
    pub ensemble: Ensemble,
}

impl EnsembleModel {
    pub(crate) fn new(n_classes: usize, n_features: usize, params: ModelParams, ensemble: Ensemble) -> Self {
        Self {
            schema: MODEL_SCHEMA.to_string(),
            class_names: (0..n_classes).map(|c| c.to_string()).collect(),
            n_features,
            params,
            ensemble,
        }
    }

    pub fn with_class_names(mut self, names: &[&str]) -> Result<Self> {
        if names.len() != self.class_names.len() {
            return Err(Error::InvalidInput(format!(
                "{} class names for a {}-class model",
                names.len(),
                self.class_names.len()
            )));
        }
        self.class_names = names.iter().map(|s| s.to_string()).collect();
        Ok(self)
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn seed(&self) -> u64 {
        self.params.seed()
    }

    pub fn trees(&self) -> Vec<&Tree> {
        match &self.ensemble {
            Ensemble::Forest { trees } => trees.iter().collect(),
            Ensemble::Gbm { stages, .. } => stages.iter().flatten().collect(),
        }
    }

    pub fn train_deviance(&self) -> Option<&[f64]> {
        match &self.ensemble {
            Ensemble::Gbm { train_deviance, .. } => Some(train_deviance),
            Ensemble::Forest { .. } => None,
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features {
            return Err(Error::InvalidInput(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        let k = self.n_classes();
        match &self.ensemble {
            Ensemble::Forest { trees } => {
                let mut p = vec![0.0; k];
                for t in trees {
                    for (a, v) in p.iter_mut().zip(t.predict_value(x)) {
                        *a += v;
                    }
                }
                let m = trees.len() as f64;
                Ok(p.into_iter().map(|v| v / m).collect())
            }
            Ensemble::Gbm {
                classes,
                init,
                learning_rate,
                stages,
                ..
            } => {
                let mut raw = init.clone();
                for stage in stages {
                    for (r, t) in raw.iter_mut().zip(stage) {
                        *r += learning_rate * t.predict_value(x)[0];
                    }
                }
                let local = if raw.len() == 1 {
                    let p1 = sigmoid(raw[0]);
                    vec![1.0 - p1, p1]
                } else {
                    softmax(&raw)
                };
                let mut p = vec![0.0; k];
                for (&c, v) in classes.iter().zip(local) {
                    p[c] = v;
                }
                Ok(p)
            }
        }
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    pub fn predict_proba_matrix(&self, x: &Matrix) -> Result<Vec<Vec<f64>>> {
        (0..x.n_rows()).map(|i| self.predict_proba(x.row(i))).collect()
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<usize>> {
        (0..x.n_rows()).map(|i| self.predict(x.row(i))).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.schema != MODEL_SCHEMA {
            return Err(Error::Schema(format!("unsupported model schema {:?}, expected {MODEL_SCHEMA}", m.schema)));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Index of the largest value; the first wins on ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}
