//! Evaluation protocols: leave-one-user-out cold start, personalization,
//! incremental personal data, feature ablation and group models.

mod metrics;
mod protocols;
mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::trees::{fit_forest, fit_gbm, EnsembleModel, ForestParams, GbmParams};

pub use metrics::{binary_auc, compute_metrics, midranks, random_baseline, MetricSet, Prf};
pub use protocols::{
    chronological_split, run_ablation, run_group_model, run_incremental, run_louo, run_personalization,
    AblationReport, Comparison, Experiment, Fold, IncrementalPoint, IncrementalReport, LouoReport, PairedFold,
    ProfilePredicate, Skip, DEFAULT_FRACTIONS, MIN_PERSONAL_RECORDS,
};
pub use report::{
    ablation_csv, ablation_markdown, comparison_csv, comparison_markdown, incremental_csv, incremental_markdown, louo_csv,
    louo_markdown,
};

/// Anything that maps a feature vector to class probabilities.
pub trait Predictor: Send + Sync {
    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl Predictor for EnsembleModel {
    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        EnsembleModel::predict_proba(self, x)
    }
}

/// A training procedure; `seed` is supplied per fold.
pub trait Learner: Sync {
    fn name(&self) -> String;
    fn fit(&self, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Box<dyn Predictor>>;
}

/// The two ensemble families with their hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Forest(ForestParams),
    Gbm(GbmParams),
}

impl ModelSpec {
    pub const TOKENS: [&'static str; 2] = ["rf", "gb"];

    pub fn fit_model(&self, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<EnsembleModel> {
        match self {
            ModelSpec::Forest(p) => fit_forest(x, y, n_classes, &ForestParams { seed, ..p.clone() }),
            ModelSpec::Gbm(p) => fit_gbm(x, y, n_classes, &GbmParams { seed, ..p.clone() }),
        }
    }

    pub fn with_n_estimators(self, n: usize) -> Self {
        match self {
            ModelSpec::Forest(p) => ModelSpec::Forest(ForestParams { n_estimators: n, ..p }),
            ModelSpec::Gbm(p) => ModelSpec::Gbm(GbmParams { n_estimators: n, ..p }),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelSpec::Forest(_) => "RF",
            ModelSpec::Gbm(_) => "GB",
        })
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    /// `rf` or `gb`, with default hyperparameters.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rf" => Ok(ModelSpec::Forest(ForestParams::default())),
            "gb" => Ok(ModelSpec::Gbm(GbmParams::default())),
            _ => Err(Error::UnknownToken {
                kind: "model",
                token: s.to_string(),
                allowed: Self::TOKENS.to_vec(),
            }),
        }
    }
}

impl Learner for ModelSpec {
    fn name(&self) -> String {
        self.to_string()
    }

    fn fit(&self, x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> Result<Box<dyn Predictor>> {
        Ok(Box::new(self.fit_model(x, y, n_classes, seed)?))
    }
}

/// Mean and population standard deviation over folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            sd: var.sqrt(),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrfSummary {
    pub precision: MeanSd,
    pub recall: MeanSd,
    pub f1: MeanSd,
}

impl PrfSummary {
    fn of(prfs: &[Prf]) -> Option<Self> {
        let col = |get: fn(&Prf) -> f64| MeanSd::of(&prfs.iter().map(get).collect::<Vec<_>>());
        Some(Self {
            precision: col(|p| p.precision)?,
            recall: col(|p| p.recall)?,
            f1: col(|p| p.f1)?,
        })
    }
}

/// Per-metric mean ± SD across folds. AUC is averaged over the folds where
/// it is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_folds: usize,
    pub accuracy: MeanSd,
    pub positive: Option<PrfSummary>,
    pub macro_avg: PrfSummary,
    pub weighted: PrfSummary,
    pub auc: Option<MeanSd>,
}

impl Summary {
    pub fn of(sets: &[&MetricSet]) -> Option<Self> {
        let accuracy = MeanSd::of(&sets.iter().map(|m| m.accuracy).collect::<Vec<_>>())?;
        let positive: Option<Vec<Prf>> = sets.iter().map(|m| m.positive).collect();
        let macro_avg: Vec<Prf> = sets.iter().map(|m| m.macro_avg).collect();
        let weighted: Vec<Prf> = sets.iter().map(|m| m.weighted).collect();
        let aucs: Vec<f64> = sets.iter().filter_map(|m| m.auc).collect();
        Some(Self {
            n_folds: sets.len(),
            accuracy,
            positive: positive.and_then(|p| PrfSummary::of(&p)),
            macro_avg: PrfSummary::of(&macro_avg)?,
            weighted: PrfSummary::of(&weighted)?,
            auc: MeanSd::of(&aucs),
        })
    }

    pub fn mean_auc(&self) -> Option<f64> {
        self.auc.map(|a| a.mean)
    }
}
