//! Evaluation metrics.

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;

use crate::error::{Error, Result};

/// Best fraction of agreement over one-to-one matchings between predicted
/// and true labels (Hungarian assignment on the confusion matrix). Label
/// values are arbitrary; the two sides may use different numbers of labels.
pub fn clustering_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::Dimension("no labels".into()));
    }
    let p_ids = dense_ids(pred);
    let t_ids = dense_ids(truth);
    let np = p_ids.iter().max().map_or(0, |m| m + 1);
    let nt = t_ids.iter().max().map_or(0, |m| m + 1);
    let size = np.max(nt);
    let mut confusion = Matrix::new(size, size, 0i64);
    for (&p, &t) in p_ids.iter().zip(&t_ids) {
        confusion[(p, t)] += 1;
    }
    let (matched, _) = kuhn_munkres(&confusion);
    Ok(matched as f64 / pred.len() as f64)
}

/// Relabels values to 0.. in order of first appearance.
fn dense_ids(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Fraction of positions where `pred` equals `truth`.
pub fn classification_accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Dimension("prediction and truth lengths differ or are empty".into()));
    }
    Ok(pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_force(pred: &[usize], truth: &[usize]) -> f64 {
        let k = pred.iter().chain(truth).max().unwrap() + 1;
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best = 0;
        permute(&mut perm, 0, &mut |p| {
            let hits = pred.iter().zip(truth).filter(|(&a, &b)| p[a] == b).count();
            best = best.max(hits);
        });
        best as f64 / pred.len() as f64
    }

    fn permute(v: &mut Vec<usize>, i: usize, f: &mut impl FnMut(&[usize])) {
        if i == v.len() {
            f(v);
            return;
        }
        for j in i..v.len() {
            v.swap(i, j);
            permute(v, i + 1, f);
            v.swap(i, j);
        }
    }

    #[test]
    fn examples() {
        assert_eq!(clustering_accuracy(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(clustering_accuracy(&[5, 5, 2, 2], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(clustering_accuracy(&[0, 1, 0, 1], &[0, 0, 1, 1]).unwrap(), 0.5);
        assert_eq!(clustering_accuracy(&[0, 1, 2, 3], &[0, 0, 0, 0]).unwrap(), 0.25);
        assert!(clustering_accuracy(&[0], &[0, 1]).is_err());
    }

    proptest! {
        #[test]
        fn matches_permutation_search(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..30)) {
            let (pred, truth): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let got = clustering_accuracy(&pred, &truth).unwrap();
            prop_assert!((got - brute_force(&pred, &truth)).abs() < 1e-15);
        }

        #[test]
        fn relabel_invariant(truth in prop::collection::vec(0usize..5, 1..30), shift in 1usize..7) {
            let pred: Vec<usize> = truth.iter().map(|&t| (t * 3 + shift) % 17).collect();
            prop_assert_eq!(clustering_accuracy(&pred, &truth).unwrap(), 1.0);
            prop_assert_eq!(clustering_accuracy(&truth, &pred).unwrap(), 1.0);
        }
    }
}
