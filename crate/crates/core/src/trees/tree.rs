//! Greedy CART growth over a [`Binned`] view.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::binned::Binned;
use super::{Criterion, MaxFeatures, TreeParams};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Splits whose impurity decrease does not exceed this are not made.
pub(crate) const GAIN_EPS: f64 = 1e-12;
/// Candidates within this (relative) margin of the incumbent count as ties.
pub(crate) const TIE_EPS: f64 = 1e-10;

/// A fitted tree in flattened, preorder form. Node 0 is the root; leaves have
/// `feature == -1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub n_features: usize,
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub n_samples: Vec<u32>,
    /// Class distribution (classification) or a single additive value.
    pub value: Vec<Vec<f64>>,
}

impl Tree {
    fn empty(n_features: usize) -> Self {
        Self {
            n_features,
            feature: Vec::new(),
            threshold: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            n_samples: Vec::new(),
            value: Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn n_leaves(&self) -> usize {
        self.feature.iter().filter(|&&f| f < 0).count()
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.feature[node] < 0
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, n: usize) -> usize {
            if t.is_leaf(n) {
                0
            } else {
                1 + go(t, t.left[n] as usize).max(go(t, t.right[n] as usize))
            }
        }
        go(self, 0)
    }

    /// `(feature, threshold)` of the root, or `None` for a single leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        (!self.is_leaf(0)).then(|| (self.feature[0] as usize, self.threshold[0]))
    }

    #[inline]
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut n = 0;
        while self.feature[n] >= 0 {
            n = if x[self.feature[n] as usize] <= self.threshold[n] {
                self.left[n] as usize
            } else {
                self.right[n] as usize
            };
        }
        n
    }

    pub fn predict_value(&self, x: &[f64]) -> &[f64] {
        &self.value[self.leaf_index(x)]
    }
}

fn scan_presorted(node_rows: usize, all_rows: usize) -> bool {
    let m = node_rows as f64;
    m * m.max(2.0).log2() > all_rows as f64 / 2.0
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    rank_cut: u32,
    threshold: f64,
    gain: f64,
}

/// Target of a tree fit.
#[derive(Debug, Clone, Copy)]
pub enum TreeTarget<'a> {
    Classes { labels: &'a [usize], n_classes: usize },
    Values(&'a [f64]),
}

pub(crate) struct Grown {
    pub tree: Tree,
    /// Leaf reached by each training row (`u32::MAX` when out of sample).
    pub leaf_of: Vec<u32>,
}

struct Builder<'a> {
    binned: &'a Binned,
    criterion: Criterion,
    /// Statistic slots per row/bin; the last slot is the row count.
    width: usize,
    row_stats: Vec<f64>,
    params: &'a TreeParams,
    rng: Option<Rng>,
    n_draw: usize,
    total_weight: f64,
    /// Membership flags of the node being searched (set only while scanning).
    in_node: Vec<bool>,
    tree: Tree,
    leaf_of: Vec<u32>,
}

pub(crate) fn grow(
    binned: &Binned,
    target: TreeTarget<'_>,
    weights: &[f64],
    params: &TreeParams,
    rng: Option<Rng>,
) -> Result<Grown> {
    let n = binned.n_rows;
    if n == 0 {
        return Err(Error::InvalidInput("cannot fit a tree on zero rows".into()));
    }
    if weights.len() != n {
        return Err(Error::InvalidInput(format!("{} weights for {n} rows", weights.len())));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidInput("sample weights must be finite and non-negative".into()));
    }
    let width = match (params.criterion, target) {
        (Criterion::Gini, TreeTarget::Classes { labels, n_classes }) => {
            if labels.len() != n {
                return Err(Error::InvalidInput(format!("{} labels for {n} rows", labels.len())));
            }
            if let Some(&bad) = labels.iter().find(|&&c| c >= n_classes) {
                return Err(Error::InvalidInput(format!("label {bad} >= n_classes {n_classes}")));
            }
            n_classes + 1
        }
        (Criterion::FriedmanMse, TreeTarget::Values(y)) => {
            if y.len() != n {
                return Err(Error::InvalidInput(format!("{} targets for {n} rows", y.len())));
            }
            3
        }
        _ => {
            return Err(Error::InvalidInput(
                "gini needs class labels and friedman_mse needs real targets".into(),
            ))
        }
    };
    let mut row_stats = vec![0.0; n * width];
    for i in 0..n {
        let s = &mut row_stats[i * width..(i + 1) * width];
        match target {
            TreeTarget::Classes { labels, .. } => s[labels[i]] = weights[i],
            TreeTarget::Values(y) => {
                s[0] = weights[i];
                s[1] = weights[i] * y[i];
            }
        }
        s[width - 1] = 1.0;
    }
    let n_draw = match params.max_features {
        MaxFeatures::All => binned.n_features,
        MaxFeatures::Sqrt => ((binned.n_features as f64).sqrt().ceil() as usize).max(1),
    };
    let mut rows: Vec<u32> = (0..n as u32).filter(|&i| weights[i as usize] > 0.0).collect();
    if rows.is_empty() {
        return Err(Error::InvalidInput("all sample weights are zero".into()));
    }
    let total_weight = rows.iter().map(|&i| weights[i as usize]).sum();
    let mut b = Builder {
        binned,
        criterion: params.criterion,
        width,
        row_stats,
        params,
        rng,
        n_draw,
        total_weight,
        in_node: vec![false; n],
        tree: Tree::empty(binned.n_features),
        leaf_of: vec![u32::MAX; n],
    };
    b.build(&mut rows, 0, None);
    Ok(Grown {
        tree: b.tree,
        leaf_of: b.leaf_of,
    })
}

impl Builder<'_> {
    fn stats_of(&self, rows: &[u32]) -> Vec<f64> {
        let mut total = vec![0.0; self.width];
        for &r in rows {
            let s = &self.row_stats[r as usize * self.width..(r as usize + 1) * self.width];
            for (t, v) in total.iter_mut().zip(s) {
                *t += v;
            }
        }
        total
    }

    fn weight_of(&self, total: &[f64]) -> f64 {
        match self.criterion {
            Criterion::Gini => total[..self.width - 1].iter().sum(),
            Criterion::FriedmanMse => total[0],
        }
    }

    fn leaf_value(&self, total: &[f64]) -> Vec<f64> {
        match self.criterion {
            Criterion::Gini => {
                let k = self.width - 1;
                let w: f64 = total[..k].iter().sum();
                total[..k].iter().map(|c| c / w).collect()
            }
            Criterion::FriedmanMse => vec![if total[0] > 0.0 { total[1] / total[0] } else { 0.0 }],
        }
    }

    fn splittable(&self, n_rows: usize, depth: usize) -> bool {
        let p = self.params;
        n_rows >= p.min_samples_split && n_rows >= 2 * p.min_samples_leaf && p.max_depth.is_none_or(|d| depth < d)
    }

    /// Sums row statistics into the low-cardinality bins. Only non-default
    /// ranks are accumulated; each feature's default bin is filled in when the
    /// feature is examined.
    fn accumulate(&self, rows: &[u32]) -> Vec<f64> {
        let binned = self.binned;
        let w = self.width;
        let mut bins = vec![0.0; binned.n_bins * w];
        for &r in rows {
            let s = &self.row_stats[r as usize * w..(r as usize + 1) * w];
            for &b in binned.sparse_bins(r as usize) {
                let at = b as usize * w;
                for (d, v) in bins[at..at + w].iter_mut().zip(s) {
                    *d += v;
                }
            }
        }
        bins
    }

    fn build(&mut self, rows: &mut [u32], depth: usize, bins: Option<Vec<f64>>) -> u32 {
        let node = self.tree.feature.len();
        let total = self.stats_of(rows);
        self.tree.feature.push(-1);
        self.tree.threshold.push(0.0);
        self.tree.left.push(0);
        self.tree.right.push(0);
        self.tree.n_samples.push(rows.len() as u32);
        self.tree.value.push(self.leaf_value(&total));

        let p = self.params;
        let node_weight = self.weight_of(&total);
        let mut found = None;
        if self.splittable(rows.len(), depth) {
            let mut bins = bins.unwrap_or_else(|| self.accumulate(rows));
            let split = self.best_split(rows, &total, &mut bins).filter(|s| {
                s.gain > GAIN_EPS && node_weight / self.total_weight * s.gain >= p.min_impurity_decrease
            });
            found = split.map(|s| (s, bins));
        }
        let Some((split, parent_bins)) = found else {
            for &r in rows.iter() {
                self.leaf_of[r as usize] = node as u32;
            }
            return node as u32;
        };

        let binned = self.binned;
        let mut left_rows: Vec<u32> = Vec::with_capacity(rows.len());
        let mut right_rows: Vec<u32> = Vec::with_capacity(rows.len());
        for &r in rows.iter() {
            if binned.rank(split.feature, r as usize) <= split.rank_cut {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }
        let n_left = left_rows.len();
        rows[..n_left].copy_from_slice(&left_rows);
        rows[n_left..].copy_from_slice(&right_rows);
        drop((left_rows, right_rows));

        self.tree.feature[node] = split.feature as i32;
        self.tree.threshold[node] = split.threshold;
        let (lo, hi) = rows.split_at_mut(n_left);

        // The larger child's bins are the parent's minus the smaller child's.
        let (mut left_bins, mut right_bins) = (None, None);
        let (need_l, need_r) = (self.splittable(lo.len(), depth + 1), self.splittable(hi.len(), depth + 1));
        if need_l || need_r {
            let left_small = lo.len() <= hi.len();
            let small = self.accumulate(if left_small { lo } else { hi });
            let mut large = parent_bins;
            for (l, s) in large.iter_mut().zip(&small) {
                *l -= s;
            }
            (left_bins, right_bins) = if left_small { (Some(small), Some(large)) } else { (Some(large), Some(small)) };
        }
        let l = self.build(lo, depth + 1, left_bins.filter(|_| need_l));
        let r = self.build(hi, depth + 1, right_bins.filter(|_| need_r));
        self.tree.left[node] = l;
        self.tree.right[node] = r;
        node as u32
    }

    fn best_split(&mut self, rows: &[u32], total: &[f64], bins: &mut [f64]) -> Option<Split> {
        let binned = self.binned;
        // Large nodes walk the presorted row order instead of sorting.
        let scan = scan_presorted(rows.len(), binned.n_rows);
        if scan {
            for &r in rows {
                self.in_node[r as usize] = true;
            }
        }
        let nf = binned.n_features;
        let mut candidates: Vec<Split> = Vec::new();
        if self.n_draw >= nf && self.rng.is_none() {
            for f in 0..nf {
                if let (_, Some(s)) = self.eval_feature(f, rows, total, bins) {
                    candidates.push(s);
                }
            }
        } else {
            // Draw features without replacement until `n_draw` non-constant
            // ones have been examined.
            let mut order: Vec<usize> = (0..nf).collect();
            let mut informative = 0;
            let mut i = 0;
            while informative < self.n_draw && i < nf {
                let j = match self.rng.as_mut() {
                    Some(rng) => rng.random_range(i..nf),
                    None => i,
                };
                order.swap(i, j);
                let f = order[i];
                i += 1;
                let (constant, s) = self.eval_feature(f, rows, total, bins);
                if !constant {
                    informative += 1;
                }
                if let Some(s) = s {
                    candidates.push(s);
                }
            }
            candidates.sort_by_key(|s| s.feature);
        }
        if scan {
            for &r in rows {
                self.in_node[r as usize] = false;
            }
        }
        let mut best: Option<Split> = None;
        for c in candidates {
            match best {
                Some(b) if c.gain <= b.gain + TIE_EPS * b.gain.abs().max(1.0) => {}
                _ => best = Some(c),
            }
        }
        best
    }

    /// Best threshold of one feature: `(is_constant_in_node, best split)`.
    fn eval_feature(&self, f: usize, rows: &[u32], total: &[f64], bins: &mut [f64]) -> (bool, Option<Split>) {
        match self.criterion {
            Criterion::FriedmanMse => self.eval_with(f, rows, total, bins, MseAcc::new(total)),
            Criterion::Gini => self.eval_with(f, rows, total, bins, GiniAcc::new(total)),
        }
    }

    fn eval_with<A: Acc>(
        &self,
        f: usize,
        rows: &[u32],
        total: &[f64],
        bins: &mut [f64],
        mut acc: A,
    ) -> (bool, Option<Split>) {
        let binned = self.binned;
        let w = self.width;
        let msl = self.params.min_samples_leaf as f64;
        let n_total = total[w - 1];
        let mut best: Option<(u32, u32, f64)> = None;
        let mut consider = |acc: &A, lo: u32, hi: u32| {
            let nl = acc.count();
            if nl < msl || n_total - nl < msl {
                return;
            }
            let gain = acc.gain();
            match best {
                Some((_, _, g)) if gain <= g + TIE_EPS * g.abs().max(1.0) => {}
                _ => best = Some((lo, hi, gain)),
            }
        };

        if binned.low_card[f] {
            let off = binned.bin_offset[f];
            let n_ranks = binned.values[f].len();
            let def = binned.default_rank[f] as usize;
            let block = &mut bins[off * w..(off + n_ranks) * w];
            let (mut n_present, mut last) = (0usize, 0usize);
            for k in 0..w {
                let rest: f64 = (0..n_ranks).filter(|&r| r != def).map(|r| block[r * w + k]).sum();
                block[def * w + k] = total[k] - rest;
            }
            for r in 0..n_ranks {
                if block[r * w + w - 1] > 0.5 {
                    n_present += 1;
                    last = r;
                }
            }
            if n_present < 2 {
                return (true, None);
            }
            let mut prev: Option<usize> = None;
            for r in 0..=last {
                if block[r * w + w - 1] <= 0.5 {
                    continue;
                }
                if let Some(p) = prev {
                    consider(&acc, p as u32, r as u32);
                }
                acc.add(&block[r * w..(r + 1) * w]);
                prev = Some(r);
            }
        } else {
            let stats = &self.row_stats;
            let mut walk = |it: &mut dyn Iterator<Item = (u32, u32)>| -> bool {
                let Some((mut cur, r0)) = it.next() else { return true };
                let first = cur;
                acc.add(&stats[r0 as usize * w..(r0 as usize + 1) * w]);
                for (rank, r) in it {
                    if rank != cur {
                        consider(&acc, cur, rank);
                        cur = rank;
                    }
                    acc.add(&stats[r as usize * w..(r as usize + 1) * w]);
                }
                first == cur
            };
            let constant = if scan_presorted(rows.len(), binned.n_rows) {
                let in_node = &self.in_node;
                walk(
                    &mut binned.order[f]
                        .iter()
                        .filter(|&&r| in_node[r as usize])
                        .map(|&r| (binned.rank(f, r as usize), r)),
                )
            } else {
                let mut keyed: Vec<(u32, u32)> = rows.iter().map(|&r| (binned.rank(f, r as usize), r)).collect();
                keyed.sort_unstable();
                walk(&mut keyed.into_iter())
            };
            if constant {
                return (true, None);
            }
        }
        let split = best.map(|(lo, hi, gain)| {
            let values = &binned.values[f];
            let (a, b) = (values[lo as usize], values[hi as usize]);
            let mut threshold = a / 2.0 + b / 2.0;
            if !(threshold < b) || threshold < a {
                threshold = a;
            }
            Split {
                feature: f,
                rank_cut: lo,
                threshold,
                gain,
            }
        });
        (false, split)
    }
}

/// Running left-side statistics of a threshold sweep.
trait Acc {
    fn add(&mut self, s: &[f64]);
    /// Rows on the left so far.
    fn count(&self) -> f64;
    /// Impurity decrease of splitting here, local to the node.
    fn gain(&self) -> f64;
}

struct MseAcc {
    total: [f64; 3],
    left: [f64; 3],
}

impl MseAcc {
    fn new(total: &[f64]) -> Self {
        Self {
            total: [total[0], total[1], total[2]],
            left: [0.0; 3],
        }
    }
}

impl Acc for MseAcc {
    #[inline]
    fn add(&mut self, s: &[f64]) {
        self.left[0] += s[0];
        self.left[1] += s[1];
        self.left[2] += s[2];
    }

    #[inline]
    fn count(&self) -> f64 {
        self.left[2]
    }

    #[inline]
    fn gain(&self) -> f64 {
        let (wl, wr) = (self.left[0], self.total[0] - self.left[0]);
        if wl <= 0.0 || wr <= 0.0 {
            return 0.0;
        }
        let diff = self.left[1] / wl - (self.total[1] - self.left[1]) / wr;
        wl * wr / (wl + wr) * diff * diff
    }
}

struct GiniAcc<'a> {
    total: &'a [f64],
    left: Vec<f64>,
    parent_sq: f64,
}

impl<'a> GiniAcc<'a> {
    fn new(total: &'a [f64]) -> Self {
        let k = total.len() - 1;
        Self {
            total,
            left: vec![0.0; total.len()],
            parent_sq: total[..k].iter().map(|c| c * c).sum(),
        }
    }
}

impl Acc for GiniAcc<'_> {
    #[inline]
    fn add(&mut self, s: &[f64]) {
        for (l, v) in self.left.iter_mut().zip(s) {
            *l += v;
        }
    }

    #[inline]
    fn count(&self) -> f64 {
        self.left[self.left.len() - 1]
    }

    fn gain(&self) -> f64 {
        let k = self.left.len() - 1;
        let (mut wl, mut wr, mut sl, mut sr) = (0.0, 0.0, 0.0, 0.0);
        for (l, t) in self.left[..k].iter().zip(&self.total[..k]) {
            let r = t - l;
            wl += l;
            wr += r;
            sl += l * l;
            sr += r * r;
        }
        if wl <= 0.0 || wr <= 0.0 {
            return 0.0;
        }
        let w = wl + wr;
        (sl / wl + sr / wr) / w - self.parent_sq / (w * w)
    }
}
