//! Cohen's kappa for two coders.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Chance-corrected agreement; 1 when chance agreement is already certain.
pub fn cohens_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!("coders rated {} and {} items", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("no items to compare".into()));
    }
    let n = a.len() as f64;
    let mut margins: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        margins.entry(x).or_default().0 += 1;
        margins.entry(y).or_default().1 += 1;
        agree += usize::from(x == y);
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = margins.values().map(|&(ca, cb)| (ca as f64 / n) * (cb as f64 / n)).sum();
    if p_e == 1.0 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn fixtures() {
        assert_eq!(cohens_kappa(&["x", "y", "x"], &["x", "y", "x"]).unwrap(), 1.0);
        assert_eq!(cohens_kappa(&["x", "x", "y", "y"], &["x", "y", "x", "y"]).unwrap(), 0.0);
        assert_eq!(cohens_kappa(&["x", "x", "x", "y"], &["x", "x", "y", "y"]).unwrap(), 0.5);
        assert_eq!(cohens_kappa(&["x", "x"], &["x", "x"]).unwrap(), 1.0);
        assert!(cohens_kappa(&["x"], &["x", "y"]).is_err());
    }

    proptest! {
        #[test]
        fn symmetric(pairs in proptest::collection::vec((0u8..4, 0u8..4), 1..60)) {
            let (a, b): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            prop_assert_eq!(cohens_kappa(&a, &b).unwrap(), cohens_kappa(&b, &a).unwrap());
        }
    }
}
