//! Stratified sparse annotation masks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{PointCloud, UNLABELED};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Indices of points whose labels are revealed to training.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseLabelMask {
    /// Sorted ascending.
    pub indices: Vec<usize>,
    pub fraction: f64,
    pub seed: u64,
}

impl SparseLabelMask {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Copy of `labels` with every unmasked entry replaced by [`UNLABELED`].
    pub fn apply(&self, labels: &[u32]) -> Vec<u32> {
        let mut out = vec![UNLABELED; labels.len()];
        for &i in &self.indices {
            out[i] = labels[i];
        }
        out
    }
}

/// Number of points kept for a class with `count` members.
pub fn stratum_size(count: usize, fraction: f64) -> usize {
    if count == 0 {
        return 0;
    }
    ((fraction * count as f64).round() as usize).clamp(1, count)
}

/// Per-class uniform sampling without replacement over a label array.
///
/// For every class present, `round(fraction · count)` indices are kept (at
/// least one). Sentinel entries are never selected.
pub fn sample_sparse_mask(labels: &[u32], num_classes: usize, fraction: f64, seed: u64) -> Result<SparseLabelMask> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Argument(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l == UNLABELED {
            continue;
        }
        let bucket = by_class
            .get_mut(l as usize)
            .ok_or_else(|| Error::Argument(format!("label {l} out of range for {num_classes} classes")))?;
        bucket.push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = Vec::new();
    for members in &by_class {
        let k = stratum_size(members.len(), fraction);
        if k == 0 {
            continue;
        }
        let picked = rand::seq::index::sample(&mut rng, members.len(), k);
        indices.extend(picked.into_iter().map(|j| members[j]));
    }
    indices.sort_unstable();
    Ok(SparseLabelMask { indices, fraction, seed })
}

/// Samples a stratified mask over a labeled cloud.
pub fn sample_sparse_labels<T: Scalar>(cloud: &PointCloud<T>, fraction: f64, seed: u64) -> Result<SparseLabelMask> {
    let (Some(labels), Some(c)) = (cloud.labels(), cloud.num_classes()) else {
        return Err(Error::Argument("sparse sampling needs a labeled cloud".into()));
    };
    sample_sparse_mask(labels, c, fraction, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn balanced(per_class: usize, classes: u32) -> PointCloud<f32> {
        let n = per_class * classes as usize;
        let labels: Vec<u32> = (0..n).map(|i| (i % classes as usize) as u32).collect();
        PointCloud::with_labels(vec![[0.0; 4]; n], labels, classes as usize).unwrap()
    }

    #[test]
    fn full_fraction_is_everything() {
        let c = balanced(10, 3);
        let m = sample_sparse_labels(&c, 1.0, 5).unwrap();
        assert_eq!(m.indices, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn five_percent_of_thousand() {
        let c = balanced(1000, 4);
        let m = sample_sparse_labels(&c, 0.05, 1).unwrap();
        let labels = c.labels().unwrap();
        for class in 0..4 {
            assert_eq!(m.indices.iter().filter(|&&i| labels[i] == class).count(), 50);
        }
    }

    #[test]
    fn seeds_change_sets_not_counts() {
        let c = balanced(1000, 4);
        let labels = c.labels().unwrap();
        let counts = |m: &SparseLabelMask| {
            let mut h = [0usize; 4];
            for &i in &m.indices {
                h[labels[i] as usize] += 1;
            }
            h
        };
        let masks: Vec<_> = (0..8).map(|s| sample_sparse_labels(&c, 0.05, s).unwrap()).collect();
        for m in &masks {
            assert_eq!(counts(m), [50; 4]);
        }
        assert_ne!(masks[0].indices, masks[1].indices);
        assert_eq!(masks[3], sample_sparse_labels(&c, 0.05, 3).unwrap());
    }

    #[test]
    fn bad_fraction() {
        let c = balanced(4, 2);
        assert!(sample_sparse_labels(&c, 0.0, 0).is_err());
        assert!(sample_sparse_labels(&c, 1.01, 0).is_err());
        assert!(sample_sparse_labels(&c, f64::NAN, 0).is_err());
    }

    #[test]
    fn tiny_class_keeps_one() {
        let labels = vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 1, UNLABELED];
        let m = sample_sparse_mask(&labels, 2, 0.01, 0).unwrap();
        assert_eq!(m.len(), 2);
        assert!(m.indices.contains(&9));
        let applied = m.apply(&labels);
        assert_eq!(applied.iter().filter(|&&l| l != UNLABELED).count(), 2);
    }

    proptest! {
        #[test]
        fn rounding_rule_holds(labels in proptest::collection::vec(0u32..5, 1..400), fraction in 0.001f64..=1.0, seed in any::<u64>()) {
            let m = sample_sparse_mask(&labels, 5, fraction, seed).unwrap();
            for c in 0..5u32 {
                let count = labels.iter().filter(|&&l| l == c).count();
                let got = m.indices.iter().filter(|&&i| labels[i] == c).count();
                prop_assert_eq!(got, stratum_size(count, fraction));
            }
            prop_assert!(m.indices.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
