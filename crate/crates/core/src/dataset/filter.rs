use std::collections::BTreeMap;

use serde::Serialize;

use super::Dataset;

/// A user is "constant" when one attention level covers at least this share
/// of their records.
pub const CONSTANT_ATTENTION_SHARE: f64 = 0.95;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FilterReport {
    /// (user, record count) for users under the record minimum.
    pub too_few_records: Vec<(String, usize)>,
    /// (user, dominant level, its share) for near-constant labelers.
    pub constant_attention: Vec<(String, u8, f64)>,
    pub kept_users: Vec<String>,
}

impl FilterReport {
    pub fn removed(&self) -> usize {
        self.too_few_records.len() + self.constant_attention.len()
    }
}

/// Drops every record of users with fewer than `min_records` records and,
/// optionally, of users whose labels are nearly all one level. Profiles of
/// removed users are dropped with them.
pub fn filter_users(d: &Dataset, min_records: usize, drop_constant_attention: bool) -> (Dataset, FilterReport) {
    let mut per_user: BTreeMap<&str, [usize; 5]> = BTreeMap::new();
    for p in d.profiles() {
        per_user.entry(p.user_id.as_str()).or_default();
    }
    for r in d.records() {
        per_user.entry(r.user_id.as_str()).or_default()[(r.attention - 1) as usize] += 1;
    }
    let mut report = FilterReport::default();
    let mut keep = Vec::new();
    for (user, counts) in &per_user {
        let n: usize = counts.iter().sum();
        if n < min_records {
            report.too_few_records.push((user.to_string(), n));
            continue;
        }
        if drop_constant_attention && n > 0 {
            let (level, top) = counts
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, c)| (i as u8 + 1, *c))
                .unwrap();
            let share = top as f64 / n as f64;
            if share >= CONSTANT_ATTENTION_SHARE {
                report.constant_attention.push((user.to_string(), level, share));
                continue;
            }
        }
        keep.push(user.to_string());
    }
    let records = d
        .records()
        .iter()
        .filter(|r| keep.binary_search(&r.user_id).is_ok())
        .cloned()
        .collect();
    let profiles = d
        .profiles()
        .iter()
        .filter(|p| keep.binary_search(&p.user_id).is_ok())
        .cloned()
        .collect();
    report.kept_users = keep;
    (
        Dataset::from_parts_unchecked(records, profiles, d.taxonomy().clone()),
        report,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::dataset;

    fn varied(n: usize) -> Vec<u8> {
        (0..n).map(|i| (i % 5) as u8 + 1).collect()
    }

    #[test]
    fn small_user_removed() {
        let d = dataset(&[varied(12), varied(100)]);
        let (f, rep) = filter_users(&d, 80, false);
        assert_eq!(f.users(), vec!["U01".to_string()]);
        assert_eq!(rep.too_few_records, vec![("U00".to_string(), 12)]);
        assert_eq!(f.len(), 100);
    }

    #[test]
    fn no_op_when_everyone_qualifies() {
        let d = dataset(&[varied(90), varied(100)]);
        let (f, rep) = filter_users(&d, 80, true);
        assert_eq!(f, d);
        assert_eq!(rep.removed(), 0);
    }

    #[test]
    fn near_constant_user_removed() {
        // 98 of 100 labels are 5: share 0.98 >= 0.95.
        let mut labels = vec![5u8; 98];
        labels.extend([1, 2]);
        let d = dataset(&[labels, varied(100)]);
        let (f, rep) = filter_users(&d, 80, true);
        assert_eq!(f.users(), vec!["U01".to_string()]);
        assert_eq!(rep.constant_attention.len(), 1);
        assert_eq!(rep.constant_attention[0].1, 5);
        assert!((rep.constant_attention[0].2 - 0.98).abs() < 1e-12);
        let (kept, _) = filter_users(&d, 80, false);
        assert_eq!(kept.users().len(), 2);
    }

    #[test]
    fn share_just_below_threshold_kept() {
        let mut labels = vec![4u8; 94];
        labels.extend([1, 2, 3, 1, 2, 3]);
        let d = dataset(&[labels]);
        let (f, _) = filter_users(&d, 0, true);
        assert_eq!(f.len(), 100);
    }

    #[test]
    fn idempotent() {
        let mut constant = vec![2u8; 99];
        constant.push(3);
        let d = dataset(&[varied(10), constant, varied(120), varied(85)]);
        let (once, _) = filter_users(&d, 80, true);
        let (twice, rep) = filter_users(&once, 80, true);
        assert_eq!(once, twice);
        assert_eq!(rep.removed(), 0);
    }

    #[test]
    fn empty_result_is_legal() {
        let d = dataset(&[varied(5)]);
        let (f, _) = filter_users(&d, 80, true);
        assert!(f.is_empty());
    }
}
