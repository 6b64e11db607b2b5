//! Gradient boosting on the multinomial (or binomial) deviance.

use rand::Rng as _;

use super::binned::Binned;
use super::model::{Ensemble, EnsembleModel, ModelParams};
use super::tree::{grow, Tree, TreeTarget};
use super::{check_xy, classes_present, Criterion, GbmParams, MaxFeatures, TreeParams};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, rng_from};

const DENOM_EPS: f64 = 1e-150;

/// Numerically stable softmax.
pub fn softmax(raw: &[f64]) -> Vec<f64> {
    let m = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = raw.iter().map(|r| (r - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn log_sum_exp(raw: &[f64]) -> f64 {
    let m = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + raw.iter().map(|r| (r - m).exp()).sum::<f64>().ln()
}

/// Mean negative log-likelihood of the raw scores. `raw` is row-major with
/// `k` columns; `k == 1` means the binary logit.
pub(crate) fn deviance(raw: &[f64], k: usize, y: &[usize]) -> f64 {
    let n = y.len();
    let total: f64 = if k == 1 {
        raw.iter().zip(y).map(|(&z, &c)| softplus(z) - if c == 1 { z } else { 0.0 }).sum()
    } else {
        raw.chunks(k).zip(y).map(|(row, &c)| log_sum_exp(row) - row[c]).sum()
    };
    total / n as f64
}

fn validate(p: &GbmParams) -> Result<()> {
    if p.n_estimators == 0 {
        return Err(Error::InvalidInput("n_estimators must be at least 1".into()));
    }
    if !(p.learning_rate > 0.0 && p.learning_rate.is_finite()) {
        return Err(Error::InvalidInput("learning_rate must be positive".into()));
    }
    if !(p.subsample > 0.0 && p.subsample <= 1.0) {
        return Err(Error::InvalidInput("subsample must lie in (0, 1]".into()));
    }
    if p.max_depth == 0 {
        return Err(Error::InvalidInput("max_depth must be positive".into()));
    }
    Ok(())
}

pub fn fit_gbm(x: &Matrix, y: &[usize], n_classes: usize, p: &GbmParams) -> Result<EnsembleModel> {
    check_xy(x, y.len())?;
    validate(p)?;
    let classes = classes_present(y, n_classes)?;
    // Labels re-indexed over the classes present.
    let mut local = vec![usize::MAX; n_classes];
    for (j, &c) in classes.iter().enumerate() {
        local[c] = j;
    }
    let yl: Vec<usize> = y.iter().map(|&c| local[c]).collect();
    let n = y.len();
    let n_present = classes.len();
    let k = if n_present == 2 { 1 } else { n_present };

    let mut prior = vec![0.0f64; n_present];
    for &c in &yl {
        prior[c] += 1.0;
    }
    let init: Vec<f64> = if k == 1 {
        vec![(prior[1] / prior[0]).ln()]
    } else {
        prior.iter().map(|c| (c / n as f64).ln()).collect()
    };

    let binned = Binned::new(x)?;
    let tp = TreeParams {
        criterion: Criterion::FriedmanMse,
        max_depth: Some(p.max_depth),
        min_samples_split: 2,
        min_samples_leaf: 1,
        min_impurity_decrease: 0.0,
        max_features: MaxFeatures::All,
        seed: p.seed,
    };
    let mut raw: Vec<f64> = (0..n).flat_map(|_| init.iter().copied()).collect();
    let mut train_deviance = vec![deviance(&raw, k, &yl)];
    let mut stages: Vec<Vec<Tree>> = Vec::with_capacity(p.n_estimators);
    let n_in = ((p.subsample * n as f64).floor() as usize).clamp(1, n);

    for stage in 0..p.n_estimators {
        let weights = if n_in < n {
            let mut rng = rng_from(derive_seed(p.seed, stage as u64));
            let mut idx: Vec<usize> = (0..n).collect();
            let mut w = vec![0.0; n];
            for i in 0..n_in {
                let j = rng.random_range(i..n);
                idx.swap(i, j);
                w[idx[i]] = 1.0;
            }
            w
        } else {
            vec![1.0; n]
        };
        let probs: Vec<f64> = if k == 1 {
            raw.iter().map(|&z| sigmoid(z)).collect()
        } else {
            raw.chunks(k).flat_map(softmax).collect()
        };
        let scale = if k == 1 { 1.0 } else { (k as f64 - 1.0) / k as f64 };
        let mut trees = Vec::with_capacity(k);
        for j in 0..k {
            let target_class = if k == 1 { 1 } else { j };
            let pj: Vec<f64> = (0..n).map(|i| probs[i * k + j]).collect();
            let resid: Vec<f64> = (0..n)
                .map(|i| if yl[i] == target_class { 1.0 } else { 0.0 } - pj[i])
                .collect();
            let grown = grow(&binned, TreeTarget::Values(&resid), &weights, &tp, None)?;
            let mut tree = grown.tree;
            let mut num = vec![0.0; tree.n_nodes()];
            let mut den = vec![0.0; tree.n_nodes()];
            for i in 0..n {
                let leaf = grown.leaf_of[i];
                if leaf != u32::MAX {
                    num[leaf as usize] += weights[i] * resid[i];
                    den[leaf as usize] += weights[i] * pj[i] * (1.0 - pj[i]);
                }
            }
            for node in 0..tree.n_nodes() {
                if tree.is_leaf(node) {
                    let v = if den[node].abs() < DENOM_EPS { 0.0 } else { scale * num[node] / den[node] };
                    tree.value[node] = vec![v];
                }
            }
            for i in 0..n {
                let leaf = match grown.leaf_of[i] {
                    u32::MAX => tree.leaf_index(x.row(i)),
                    l => l as usize,
                };
                raw[i * k + j] += p.learning_rate * tree.value[leaf][0];
            }
            trees.push(tree);
        }
        stages.push(trees);
        train_deviance.push(deviance(&raw, k, &yl));
    }

    Ok(EnsembleModel::new(
        n_classes,
        x.n_cols(),
        ModelParams::Gbm(p.clone()),
        Ensemble::Gbm {
            classes,
            init,
            learning_rate: p.learning_rate,
            stages,
            train_deviance,
        },
    ))
}
