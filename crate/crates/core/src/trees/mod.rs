//! CART trees, random forests and gradient boosted trees.

mod binned;
mod forest;
mod gbm;
mod model;
mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::rng_from;

pub use forest::{balanced_class_weights, bootstrap_counts, fit_forest, fit_forest_with_counts};
pub use gbm::{fit_gbm, softmax};
pub use model::{argmax, Ensemble, EnsembleModel, ModelParams, MODEL_SCHEMA};
pub use tree::{Tree, TreeTarget};

/// Split quality measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    FriedmanMse,
}

/// Number of features examined at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    /// `ceil(sqrt(D))` features, drawn per node.
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    None,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub min_impurity_decrease: f64,
    pub max_features: MaxFeatures,
    pub seed: u64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            criterion: Criterion::Gini,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            min_impurity_decrease: 0.0,
            max_features: MaxFeatures::All,
            seed: 42,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == Some(0) {
            return Err(Error::InvalidInput("max_depth must be positive".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::InvalidInput("min_samples_split must be at least 2".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::InvalidInput("min_samples_leaf must be at least 1".into()));
        }
        if !(self.min_impurity_decrease >= 0.0) {
            return Err(Error::InvalidInput("min_impurity_decrease must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub class_weight: ClassWeight,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            class_weight: ClassWeight::Balanced,
            bootstrap: true,
            seed: 42,
        }
    }
}

impl ForestParams {
    pub(crate) fn tree_params(&self, seed: u64) -> TreeParams {
        TreeParams {
            criterion: Criterion::Gini,
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            min_impurity_decrease: 0.0,
            max_features: self.max_features,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            learning_rate: 0.1,
            max_depth: 3,
            subsample: 1.0,
            seed: 42,
        }
    }
}

/// Fits a single tree. Class labels go with `gini`, real targets with
/// `friedman_mse`; `weights` default to 1.
pub fn fit_tree(x: &Matrix, target: TreeTarget<'_>, weights: Option<&[f64]>, p: &TreeParams) -> Result<Tree> {
    p.validate()?;
    let binned = binned::Binned::new(x)?;
    let ones;
    let w = match weights {
        Some(w) => w,
        None => {
            ones = vec![1.0; x.n_rows()];
            &ones
        }
    };
    if w.len() == x.n_rows() && w.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidInput("sample weights must be positive".into()));
    }
    let rng = (p.max_features == MaxFeatures::Sqrt).then(|| rng_from(p.seed));
    Ok(tree::grow(&binned, target, w, p, rng)?.tree)
}

/// Distinct class indices present in `y`, ascending.
pub(crate) fn classes_present(y: &[usize], n_classes: usize) -> Result<Vec<usize>> {
    let mut seen = vec![false; n_classes];
    for &c in y {
        if c >= n_classes {
            return Err(Error::InvalidInput(format!("label {c} >= n_classes {n_classes}")));
        }
        seen[c] = true;
    }
    let present: Vec<usize> = (0..n_classes).filter(|&c| seen[c]).collect();
    if present.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "at least two classes are required to fit a classifier, found {}",
            present.len()
        )));
    }
    Ok(present)
}

pub(crate) fn check_xy(x: &Matrix, n: usize) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::InvalidInput("cannot fit on an empty matrix".into()));
    }
    if x.n_rows() != n {
        return Err(Error::InvalidInput(format!("{} rows but {n} labels", x.n_rows())));
    }
    Ok(())
}
