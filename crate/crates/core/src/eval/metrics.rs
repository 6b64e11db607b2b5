//! Classification metrics and the random baseline.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::trees::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy, precision/recall/F1 under three averaging conventions, and AUC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub n: usize,
    pub accuracy: f64,
    /// Class index 1 as the positive class; two-class problems only.
    pub positive: Option<Prf>,
    pub macro_avg: Prf,
    pub weighted: Prf,
    /// Absent when `y_true` holds a single class.
    pub auc: Option<f64>,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Ranks with ties assigned their average (1-based).
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// ROC AUC of `score` for `positive` via the Mann-Whitney statistic.
/// `None` unless both groups are non-empty.
pub fn binary_auc(positive: &[bool], score: &[f64]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let ranks = midranks(score);
    let r_pos: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Some((r_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

/// Metrics of predictions against the truth. `y_score` holds one
/// probability vector per sample; its width fixes the number of classes.
pub fn compute_metrics(y_true: &[usize], y_pred: &[usize], y_score: &[Vec<f64>]) -> Result<MetricSet> {
    let n = y_true.len();
    if y_pred.len() != n || y_score.len() != n {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {n} labels, {} predictions, {} score vectors",
            y_pred.len(),
            y_score.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("no samples to score".into()));
    }
    let k = y_score[0].len();
    if y_score.iter().any(|s| s.len() != k) {
        return Err(Error::InvalidInput("score vectors differ in width".into()));
    }
    if let Some(&bad) = y_true.iter().chain(y_pred).find(|&&c| c >= k) {
        return Err(Error::InvalidInput(format!("class {bad} outside the {k} scored classes")));
    }
    let (mut tp, mut support, mut predicted) = (vec![0usize; k], vec![0usize; k], vec![0usize; k]);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        support[t] += 1;
        predicted[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    let accuracy = correct as f64 / n as f64;
    let per_class: Vec<Prf> = (0..k)
        .map(|c| {
            let precision = ratio(tp[c], predicted[c]);
            let recall = ratio(tp[c], support[c]);
            Prf { precision, recall, f1: f1(precision, recall) }
        })
        .collect();
    let labels: Vec<usize> = (0..k).filter(|&c| support[c] + predicted[c] > 0).collect();
    let m = labels.len() as f64;
    let macro_avg = Prf {
        precision: labels.iter().map(|&c| per_class[c].precision).sum::<f64>() / m,
        recall: labels.iter().map(|&c| per_class[c].recall).sum::<f64>() / m,
        f1: labels.iter().map(|&c| per_class[c].f1).sum::<f64>() / m,
    };
    let wsum = |get: fn(&Prf) -> f64| -> f64 {
        labels.iter().map(|&c| support[c] as f64 * get(&per_class[c])).sum::<f64>() / n as f64
    };
    let weighted = Prf {
        precision: wsum(|p| p.precision),
        recall: wsum(|p| p.recall),
        f1: wsum(|p| p.f1),
    };
    assert!(
        (weighted.recall - accuracy).abs() <= 1e-12,
        "weighted recall {} differs from accuracy {accuracy}",
        weighted.recall
    );
    let positive = (k == 2).then(|| per_class[1]);

    let auc = if k == 2 {
        let pos: Vec<bool> = y_true.iter().map(|&c| c == 1).collect();
        let s: Vec<f64> = y_score.iter().map(|v| v[1]).collect();
        binary_auc(&pos, &s)
    } else {
        let per: Vec<f64> = (0..k)
            .filter_map(|c| {
                let pos: Vec<bool> = y_true.iter().map(|&t| t == c).collect();
                let s: Vec<f64> = y_score.iter().map(|v| v[c]).collect();
                binary_auc(&pos, &s)
            })
            .collect();
        (!per.is_empty()).then(|| per.iter().sum::<f64>() / per.len() as f64)
    };
    Ok(MetricSet {
        n,
        accuracy,
        positive,
        macro_avg,
        weighted,
        auc,
    })
}

/// Chance-level predictions: scores uniform on the probability simplex and
/// the predicted class their argmax (uniform over classes).
pub fn random_baseline(n: usize, n_classes: usize, seed: u64) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut rng = rng_from(seed);
    let scores: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            if n_classes == 2 {
                let s: f64 = rng.random();
                vec![1.0 - s, s]
            } else {
                let e: Vec<f64> = (0..n_classes).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
                let t: f64 = e.iter().sum();
                e.into_iter().map(|v| v / t).collect()
            }
        })
        .collect();
    let pred = scores.iter().map(|s| argmax(s)).collect();
    (pred, scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn onehot(y: &[usize]) -> Vec<Vec<f64>> {
        y.iter().map(|&c| if c == 1 { vec![0.0, 1.0] } else { vec![1.0, 0.0] }).collect()
    }

    #[test]
    fn confusion_matrix_example() {
        let m = compute_metrics(&[1, 1, 0, 0], &[1, 0, 0, 0], &onehot(&[1, 0, 0, 0])).unwrap();
        assert_eq!(m.accuracy, 0.75);
        let p = m.positive.unwrap();
        assert_eq!(p.precision, 1.0);
        assert_eq!(p.recall, 0.5);
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-12);
        // class 0: precision 2/3, recall 1
        assert!((m.macro_avg.precision - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-12);
        assert!((m.macro_avg.recall - 0.75).abs() < 1e-12);
        assert_eq!(m.weighted.recall, m.accuracy);
    }

    #[test]
    fn perfect_ranking_has_unit_auc() {
        let s = vec![vec![0.9, 0.1], vec![0.8, 0.2], vec![0.3, 0.7], vec![0.1, 0.9]];
        let m = compute_metrics(&[0, 0, 1, 1], &[0, 0, 1, 1], &s).unwrap();
        assert_eq!(m.auc, Some(1.0));
    }

    #[test]
    fn single_class_truth_has_no_auc() {
        let m = compute_metrics(&[1, 1], &[1, 0], &onehot(&[1, 0])).unwrap();
        assert_eq!(m.auc, None);
    }

    #[test]
    fn ties_get_midranks() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(binary_auc(&[true, false], &[0.5, 0.5]), Some(0.5));
    }

    #[test]
    fn auc_matches_pair_counting() {
        let pos = [true, false, true, false, true, false, false];
        let s = [0.9, 0.4, 0.4, 0.1, 0.7, 0.8, 0.4];
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..7 {
            for j in 0..7 {
                if pos[i] && !pos[j] {
                    pairs += 1.0;
                    wins += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((binary_auc(&pos, &s).unwrap() - wins / pairs).abs() < 1e-12);
    }

    #[test]
    fn multiclass_uses_macro_one_vs_rest() {
        let s = vec![vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8], vec![0.5, 0.4, 0.1]];
        let m = compute_metrics(&[0, 1, 2, 1], &[0, 1, 2, 0], &s).unwrap();
        assert!(m.positive.is_none());
        // class 0: pos score 0.8 vs negs {0.1, 0.1, 0.5} -> 1; class 1: pos {0.8, 0.4} vs {0.1, 0.1} -> 1; class 2 -> 1
        assert_eq!(m.auc, Some(1.0));
        assert_eq!(m.weighted.recall, m.accuracy);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(compute_metrics(&[0, 1], &[0], &onehot(&[0, 1])).is_err());
    }

    #[test]
    fn baseline_is_seeded_and_valid() {
        let (p1, s1) = random_baseline(50, 3, 7);
        let (p2, s2) = random_baseline(50, 3, 7);
        assert_eq!((&p1, &s1), (&p2, &s2));
        for s in &s1 {
            assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let (p, s) = random_baseline(1, 2, 0);
        assert_eq!(p.len(), 1);
        assert!(p[0] < 2 && s[0].len() == 2);
    }
}
