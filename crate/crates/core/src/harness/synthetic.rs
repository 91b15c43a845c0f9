//! Synthetic benchmark data.

use rand_distr::{Distribution, StandardNormal};

use crate::subspace::{Dataset, IncompleteRecord};

use super::rng::stream;

/// Two isotropic unit-variance Gaussian classes in `dim` dimensions, means at
/// `±(separation/2)·1/√dim`, so the mean gap is `separation` and the Bayes
/// accuracy is `Φ(separation/2)`. Labels alternate `-1, +1`.
pub fn two_gaussian_blobs(n: usize, dim: usize, separation: f64, seed: u64) -> Dataset {
    let mut rng = stream(seed, &[0x626c6f62]);
    let shift = separation / 2.0 / (dim as f64).sqrt();
    let records = (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { -1 } else { 1 };
            let values = (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z + label as f64 * shift
                })
                .collect();
            IncompleteRecord::complete(values, Some(label))
        })
        .collect();
    Dataset::new(records, dim).expect("records share the requested dimension")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_deterministic() {
        let a = two_gaussian_blobs(10, 3, 4.0, 1);
        assert_eq!(a, two_gaussian_blobs(10, 3, 4.0, 1));
        let labels = a.labels().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 5);
        assert!(a.is_complete());
    }
}
