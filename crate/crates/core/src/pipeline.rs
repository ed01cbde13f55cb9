//! End-to-end helpers shared by the command line and the test suites.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hierarchy::{self, HierarchyConfig, HierarchyTree};
use crate::prox::DenseMatrix;
use crate::sequence::{LeafSet, SequenceSample};
use crate::solver::{FeatureMatrix, SolverConfig};

/// Training frames, optionally subsampled to at most `max_frames` (in their
/// original order) with a seeded draw.
pub fn pooled_frames(train: &[SequenceSample], max_frames: Option<usize>, seed: u64) -> Result<FeatureMatrix> {
    let total: usize = train.iter().map(SequenceSample::len).sum();
    if total == 0 {
        return Err(Error::Dimension("no training frames".into()));
    }
    let m = train[0].features.nrows();
    if train.iter().any(|s| s.features.nrows() != m) {
        return Err(Error::Dimension("training sequences differ in feature dimension".into()));
    }
    let mut all = DenseMatrix::zeros(m, total);
    let mut at = 0;
    for s in train {
        all.columns_mut(at, s.len()).copy_from(&s.features);
        at += s.len();
    }
    let x = match max_frames {
        Some(k) if k < total => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = sample(&mut rng, total, k).into_vec();
            picked.sort_unstable();
            all.select_columns(&picked)
        }
        _ => all,
    };
    FeatureMatrix::new(x)
}

/// Learns the leaf subspaces from training frames with HCS-LRR.
pub fn learn_leaves(
    train: &[SequenceSample],
    scfg: &SolverConfig,
    hcfg: &HierarchyConfig,
    max_frames: Option<usize>,
    seed: u64,
) -> Result<(HierarchyTree, LeafSet)> {
    let x = pooled_frames(train, max_frames, seed)?;
    let tree = hierarchy::hcs_lrr(&x, scfg, hcfg, seed)?;
    let leaves = tree.leaf_set()?;
    Ok((tree, leaves))
}
