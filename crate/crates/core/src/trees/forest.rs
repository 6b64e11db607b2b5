//! Bagged gini trees with per-node feature subsampling.

use rand::Rng as _;
use rayon::prelude::*;

use super::binned::Binned;
use super::model::{Ensemble, EnsembleModel, ModelParams};
use super::tree::{grow, TreeTarget};
use super::{check_xy, classes_present, ClassWeight, ForestParams, MaxFeatures};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, rng_from};

/// `n / (k * n_c)` for each class present in `y` (0 for absent classes), so
/// that `sum_c w_c * n_c == n`.
pub fn balanced_class_weights(y: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        counts[c] += 1;
    }
    let k = counts.iter().filter(|&&c| c > 0).count() as f64;
    let n = y.len() as f64;
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { n / (k * c as f64) })
        .collect()
}

fn tree_seed(seed: u64, tree_idx: usize) -> u64 {
    derive_seed(seed, tree_idx as u64)
}

/// How many times each of the `n` rows appears in tree `tree_idx`'s
/// bootstrap sample.
pub fn bootstrap_counts(seed: u64, tree_idx: usize, n: usize) -> Vec<u32> {
    let mut rng = rng_from(tree_seed(seed, tree_idx));
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

pub fn fit_forest(x: &Matrix, y: &[usize], n_classes: usize, p: &ForestParams) -> Result<EnsembleModel> {
    check_xy(x, y.len())?;
    let n = y.len();
    let counts: Vec<Vec<u32>> = (0..p.n_estimators)
        .map(|t| if p.bootstrap { bootstrap_counts(p.seed, t, n) } else { vec![1; n] })
        .collect();
    fit_forest_with_counts(x, y, n_classes, p, &counts)
}

/// Fits one tree per entry of `counts`, using those multiplicities in place
/// of the seeded bootstrap.
pub fn fit_forest_with_counts(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    p: &ForestParams,
    counts: &[Vec<u32>],
) -> Result<EnsembleModel> {
    check_xy(x, y.len())?;
    classes_present(y, n_classes)?;
    if p.n_estimators == 0 || counts.len() != p.n_estimators {
        return Err(Error::InvalidInput(format!(
            "n_estimators is {} but {} count vectors were given",
            p.n_estimators,
            counts.len()
        )));
    }
    p.tree_params(0).validate()?;
    let class_w = match p.class_weight {
        ClassWeight::Balanced => balanced_class_weights(y, n_classes),
        ClassWeight::None => vec![1.0; n_classes],
    };
    let binned = Binned::new(x)?;
    let trees = counts
        .par_iter()
        .enumerate()
        .map(|(t, c)| {
            if c.len() != y.len() {
                return Err(Error::InvalidInput("bootstrap count vector has the wrong length".into()));
            }
            let weights: Vec<f64> = c.iter().zip(y).map(|(&k, &cls)| k as f64 * class_w[cls]).collect();
            let seed = derive_seed(tree_seed(p.seed, t), 1);
            let tp = p.tree_params(seed);
            let rng = (p.max_features == MaxFeatures::Sqrt).then(|| rng_from(seed));
            let target = TreeTarget::Classes { labels: y, n_classes };
            Ok(grow(&binned, target, &weights, &tp, rng)?.tree)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleModel::new(
        n_classes,
        x.n_cols(),
        ModelParams::Forest(p.clone()),
        Ensemble::Forest { trees },
    ))
}
