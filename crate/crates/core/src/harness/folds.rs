//! Stratified k-fold splits.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};

use super::rng::stream;

/// A train/test split by position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles each class separately and deals its members round-robin into
/// `k` folds, so every fold sees both classes whenever each class has at
/// least `k` members. Indices inside each fold are sorted.
pub fn stratified_folds(labels: &[i32], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 folds, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::InvalidConfig(format!("{} records cannot fill {k} folds", labels.len())));
    }
    let mut rng = stream(seed, &[0x666f6c64]);
    let mut classes: Vec<i32> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();

    let mut assignment = vec![0usize; labels.len()];
    let mut next = 0usize;
    for class in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for m in members {
            assignment[m] = next % k;
            next += 1;
        }
    }

    Ok((0..k)
        .map(|f| Fold {
            train: (0..labels.len()).filter(|&i| assignment[i] != f).collect(),
            test: (0..labels.len()).filter(|&i| assignment[i] == f).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_and_stratify() {
        let labels: Vec<i32> = (0..23).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let folds = stratified_folds(&labels, 5, 4).unwrap();
        let mut seen = vec![0; labels.len()];
        for f in &folds {
            for &t in &f.test {
                seen[t] += 1;
            }
            assert_eq!(f.train.len() + f.test.len(), labels.len());
            assert!(f.test.iter().any(|&i| labels[i] == 1));
            assert!(f.test.iter().any(|&i| labels[i] == -1));
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(folds, stratified_folds(&labels, 5, 4).unwrap());
        assert!(stratified_folds(&labels, 1, 0).is_err());
    }
}
