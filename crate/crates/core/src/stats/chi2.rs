//! Pearson chi-square test of independence.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::descriptive::GroupField;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(row_labels: Vec<String>, col_labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != row_labels.len() || counts.iter().any(|r| r.len() != col_labels.len()) {
            return Err(Error::InvalidInput("contingency counts do not match the labels".into()));
        }
        if row_labels.len() < 2 || col_labels.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a contingency table needs at least 2x2 cells, got {}x{}",
                row_labels.len(),
                col_labels.len()
            )));
        }
        Ok(Self {
            row_labels,
            col_labels,
            counts,
        })
    }

    /// Unlabelled table; rows and columns are named by index.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let rows = (0..counts.len()).map(|i| i.to_string()).collect();
        let cols = (0..counts.first().map_or(0, Vec::len)).map(|j| j.to_string()).collect();
        Self::new(rows, cols, counts)
    }

    pub fn transpose(&self) -> Self {
        let counts = (0..self.col_labels.len())
            .map(|j| self.counts.iter().map(|r| r[j]).collect())
            .collect();
        Self {
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
            counts,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    pub n: u64,
}

pub fn chi_square(t: &ContingencyTable) -> Result<ChiSquare> {
    let row_sums: Vec<u64> = t.counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..t.col_labels.len()).map(|j| t.counts.iter().map(|r| r[j]).sum()).collect();
    if let Some(i) = row_sums.iter().position(|&s| s == 0) {
        return Err(Error::InvalidInput(format!("row `{}` has a zero total", t.row_labels[i])));
    }
    if let Some(j) = col_sums.iter().position(|&s| s == 0) {
        return Err(Error::InvalidInput(format!("column `{}` has a zero total", t.col_labels[j])));
    }
    let n = t.total();
    let mut terms = Vec::with_capacity(row_sums.len() * col_sums.len());
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = (row_sums[i] * col_sums[j]) as f64 / n as f64;
            let d = o as f64 - e;
            terms.push(d * d / e);
        }
    }
    // A fixed summation order makes the statistic invariant under transposition.
    terms.sort_by(f64::total_cmp);
    let chi2: f64 = terms.iter().sum();
    let df = (row_sums.len() - 1) * (col_sums.len() - 1);
    let p = ChiSquared::new(df as f64)
        .map_err(|e| Error::InvalidInput(e.to_string()))?
        .sf(chi2);
    Ok(ChiSquare { chi2, df, p, n })
}

/// Counts of `field` (rows) against attention level (columns), keeping only
/// the categories and levels that occur.
pub fn contingency(d: &Dataset, field: GroupField) -> Result<ContingencyTable> {
    let groups = field.groups(d);
    let levels: Vec<u8> = (1..=5u8).filter(|&a| d.records().iter().any(|r| r.attention == a)).collect();
    let counts = groups
        .iter()
        .map(|(_, idx)| {
            levels
                .iter()
                .map(|&a| idx.iter().filter(|&&i| d.records()[i].attention == a).count() as u64)
                .collect()
        })
        .collect();
    ContingencyTable::new(
        groups.into_iter().map(|(g, _)| g).collect(),
        levels.iter().map(|a| a.to_string()).collect(),
        counts,
    )
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn independence_gives_zero() {
        let r = chi_square(&ContingencyTable::from_counts(vec![vec![10, 10], vec![10, 10]]).unwrap()).unwrap();
        assert_eq!(r.chi2, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn hand_computed_two_by_two() {
        let r = chi_square(&ContingencyTable::from_counts(vec![vec![10, 20], vec![20, 10]]).unwrap()).unwrap();
        // every expected count is 15: 4 * 25 / 15
        assert!((r.chi2 - 100.0 / 15.0).abs() < 1e-12);
        assert_eq!(r.df, 1);
        assert!(r.p < 0.01 && r.p > 0.009);
    }

    #[test]
    fn zero_margin_is_named() {
        let t = ContingencyTable::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into()],
            vec![vec![0, 0], vec![3, 4]],
        )
        .unwrap();
        let err = chi_square(&t).unwrap_err().to_string();
        assert!(err.contains("`a`"), "{err}");
        assert!(ContingencyTable::from_counts(vec![vec![1, 2]]).is_err());
    }

    proptest! {
        #[test]
        fn transpose_invariant_and_non_negative(
            counts in (2usize..6, 2usize..6).prop_flat_map(|(r, c)| {
                proptest::collection::vec(proptest::collection::vec(1u64..50, c), r)
            })
        ) {
            let t = ContingencyTable::from_counts(counts).unwrap();
            let a = chi_square(&t).unwrap();
            let b = chi_square(&t.transpose()).unwrap();
            prop_assert_eq!(a.chi2, b.chi2);
            prop_assert_eq!(a.df, b.df);
            prop_assert!(a.chi2 >= 0.0);
        }
    }
}
