//! Column preprocessing shared by every tree of an ensemble.
//!
//! Each feature value is replaced by its rank among the feature's distinct
//! sorted values. Low-cardinality columns (one-hot blocks, flags) are also
//! stored sparsely: per row, only the entries that differ from the column's
//! most common rank. Split search over a node then costs O(rows × non-default
//! entries) for those columns instead of a sort per column.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub(crate) const LOW_CARD_MAX: usize = 16;

#[derive(Debug)]
pub(crate) struct Binned {
    pub n_rows: usize,
    pub n_features: usize,
    /// Distinct sorted values per feature.
    pub values: Vec<Vec<f64>>,
    /// Column-major ranks.
    ranks: Vec<u32>,
    pub low_card: Vec<bool>,
    /// First bin of each low-cardinality feature in a node's bin buffer.
    pub bin_offset: Vec<usize>,
    pub n_bins: usize,
    pub default_rank: Vec<u32>,
    /// Rows in ascending rank order, for high-cardinality features only.
    pub order: Vec<Vec<u32>>,
    row_ptr: Vec<usize>,
    /// Global bin index (`bin_offset + rank`) of each sparse entry.
    entries: Vec<u32>,
}

impl Binned {
    pub fn new(x: &Matrix) -> Result<Self> {
        let (n_rows, n_features) = (x.n_rows(), x.n_cols());
        if x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature matrix contains non-finite values".into()));
        }
        let mut values = Vec::with_capacity(n_features);
        let mut ranks = vec![0u32; n_rows * n_features];
        let mut low_card = Vec::with_capacity(n_features);
        let mut bin_offset = Vec::with_capacity(n_features);
        let mut default_rank = Vec::with_capacity(n_features);
        let mut n_bins = 0;
        let mut order = Vec::with_capacity(n_features);
        let mut col = Vec::with_capacity(n_rows);
        for f in 0..n_features {
            col.clear();
            col.extend((0..n_rows).map(|i| x.get(i, f)));
            let mut distinct = col.clone();
            distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
            distinct.dedup();
            let mut counts = vec![0usize; distinct.len()];
            for (i, v) in col.iter().enumerate() {
                let r = distinct.partition_point(|d| d < v);
                ranks[f * n_rows + i] = r as u32;
                counts[r] += 1;
            }
            let (def, _) = counts
                .iter()
                .enumerate()
                .fold((0usize, 0usize), |best, (r, &c)| if c > best.1 { (r, c) } else { best });
            default_rank.push(def as u32);
            let low = distinct.len() <= LOW_CARD_MAX;
            low_card.push(low);
            bin_offset.push(n_bins);
            if low {
                n_bins += distinct.len();
                order.push(Vec::new());
            } else {
                let column = &ranks[f * n_rows..(f + 1) * n_rows];
                let mut rows: Vec<u32> = (0..n_rows as u32).collect();
                rows.sort_by_key(|&r| column[r as usize]);
                order.push(rows);
            }
            values.push(distinct);
        }
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        let mut entries = Vec::new();
        row_ptr.push(0);
        for i in 0..n_rows {
            for f in 0..n_features {
                let r = ranks[f * n_rows + i];
                if low_card[f] && r != default_rank[f] {
                    entries.push((bin_offset[f] + r as usize) as u32);
                }
            }
            row_ptr.push(entries.len());
        }
        Ok(Self {
            n_rows,
            n_features,
            values,
            ranks,
            low_card,
            bin_offset,
            n_bins,
            default_rank,
            order,
            row_ptr,
            entries,
        })
    }

    #[inline]
    pub fn rank(&self, feature: usize, row: usize) -> u32 {
        self.ranks[feature * self.n_rows + row]
    }

    #[inline]
    pub fn sparse_bins(&self, row: usize) -> &[u32] {
        &self.entries[self.row_ptr[row]..self.row_ptr[row + 1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_and_defaults() {
        let x = Matrix::from_rows(&[vec![0.0, 3.5], vec![1.0, -1.0], vec![0.0, 3.5], vec![0.0, 2.0]]).unwrap();
        let b = Binned::new(&x).unwrap();
        assert_eq!(b.values[0], vec![0.0, 1.0]);
        assert_eq!(b.values[1], vec![-1.0, 2.0, 3.5]);
        assert_eq!(b.default_rank, vec![0, 2]);
        assert_eq!(b.rank(1, 1), 0);
        assert!(b.sparse_bins(0).is_empty());
        assert_eq!(b.sparse_bins(1), &[1, 2]);
        assert_eq!(b.sparse_bins(3), &[3]);
        assert_eq!(b.n_bins, 5);
    }

    #[test]
    fn rejects_nan() {
        let x = Matrix::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(Binned::new(&x).is_err());
    }
}
