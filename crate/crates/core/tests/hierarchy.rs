use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uos_core::hierarchy::{self, Cluster, HierarchyConfig, HierarchyTree, SplitOutcome};
use uos_core::prox::DenseMatrix;
use uos_core::solver::{FeatureMatrix, SolverConfig};
use uos_core::spectral::AffinityMatrix;
use uos_core::synth::{self, Geometry, SynthConfig};

/// Points in two coordinate blocks (rows 0..3 and 3..6 of R^10), with
/// decreasing energy along the three axes of each block.
fn two_blocks(per: usize, seed: u64) -> (FeatureMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales = [1.0, 0.6, 0.3];
    let mut x = DenseMatrix::zeros(10, 2 * per);
    let mut truth = Vec::new();
    for j in 0..2 * per {
        let g = j / per;
        for (a, s) in scales.iter().enumerate() {
            x[(3 * g + a, j)] = s * rng.random_range(-1.0..1.0);
        }
        truth.push(g);
    }
    (FeatureMatrix::normalized(x).unwrap(), truth)
}

fn gram_affinity(x: &FeatureMatrix) -> AffinityMatrix {
    let mut w = (x.data().transpose() * x.data()).abs();
    w.fill_diagonal(0.0);
    AffinityMatrix::new(w).unwrap()
}

fn root(x: &FeatureMatrix, gamma: f64) -> Cluster {
    Cluster::estimate(x, (0..x.len()).collect(), gamma).unwrap()
}

#[test]
fn orthogonal_blocks_split_into_their_groups() {
    let (x, truth) = two_blocks(12, 1);
    let cfg = HierarchyConfig { rho_split: 0.01, d_min: 1, ..HierarchyConfig::default() };
    let decision = hierarchy::try_split(&x, &gram_affinity(&x), &root(&x, cfg.gamma), &cfg, 0).unwrap();
    let SplitOutcome::Split(children) = decision.outcome else { panic!("expected a split") };
    for child in children.iter() {
        let g = truth[child.indices[0]];
        assert!(child.indices.iter().all(|&i| truth[i] == g));
        assert_eq!(child.indices.len(), 12);
        assert!(child.dim() <= 3);
    }
    let [p0, p1] = decision.parent_errors.unwrap();
    let [c0, c1] = decision.child_errors.unwrap();
    assert!(c0 <= p0 + 1e-12 && c1 <= p1 + 1e-12);
    assert!([(p0, c0), (p1, c1)].iter().any(|&(p, c)| p > 1e-12 && (p - c) / p >= cfg.rho_split));
}

#[test]
fn unreachable_improvement_is_a_leaf() {
    let (x, _) = two_blocks(12, 2);
    let one_block = FeatureMatrix::new(x.select(&(0..12).collect::<Vec<_>>())).unwrap();
    let cfg = HierarchyConfig { rho_split: 1.0, ..HierarchyConfig::default() };
    let d =
        hierarchy::try_split(&one_block, &gram_affinity(&one_block), &root(&one_block, cfg.gamma), &cfg, 0).unwrap();
    assert!(matches!(d.outcome, SplitOutcome::Leaf));
}

#[test]
fn dimension_cap_above_ambient_is_a_leaf() {
    let (x, _) = two_blocks(12, 3);
    let cfg = HierarchyConfig { d_min: 11, ..HierarchyConfig::default() };
    let d = hierarchy::try_split(&x, &gram_affinity(&x), &root(&x, cfg.gamma), &cfg, 0).unwrap();
    assert!(matches!(d.outcome, SplitOutcome::Leaf));
}

fn small_uos(seed: u64) -> FeatureMatrix {
    let cfg = SynthConfig {
        m: 24,
        subspaces: 4,
        dim: 2,
        points_per_subspace: 10,
        noise: 0.0,
        geometry: Geometry::Independent,
        seed,
    };
    synth::generate_synthetic_uos(&cfg).unwrap().x
}

fn check_partitions(tree: &HierarchyTree) {
    for level in &tree.levels {
        let mut all: Vec<usize> = level.iter().flat_map(|&id| tree.nodes[id].indices.clone()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..tree.n_samples).collect::<Vec<_>>());
    }
    for node in &tree.nodes {
        if let Some([a, b]) = node.children {
            let mut joined = [tree.nodes[a].indices.clone(), tree.nodes[b].indices.clone()].concat();
            joined.sort_unstable();
            assert_eq!(joined, node.indices);
        }
        let gram = node.basis.transpose() * &node.basis;
        assert!((gram - DMatrix::identity(node.dim(), node.dim())).abs().max() < 1e-10);
    }
}

#[test]
fn tree_invariants_and_determinism() {
    let x = small_uos(4);
    let hcfg = HierarchyConfig { levels: 3, ..HierarchyConfig::default() };
    let tree = hierarchy::hcs_lrr(&x, &SolverConfig::default(), &hcfg, 9).unwrap();
    check_partitions(&tree);
    assert!(tree.leaves().len() <= 8);
    assert!(tree.depth() <= 3);
    let again = hierarchy::hcs_lrr(&x, &SolverConfig::default(), &hcfg, 9).unwrap();
    assert_eq!(tree, again);
    assert_eq!(HierarchyTree::from_bytes(&tree.to_bytes().unwrap()).unwrap(), tree);
}

#[test]
fn undivisible_nodes_are_carried_unchanged() {
    let x = small_uos(5);
    let hcfg = HierarchyConfig { levels: 4, ..HierarchyConfig::default() };
    let tree = hierarchy::hcs_lrr(&x, &SolverConfig::default(), &hcfg, 1).unwrap();
    for node in tree.nodes.iter().filter(|n| !n.divisible) {
        assert!(node.children.is_none());
        let first = tree.levels.iter().position(|l| l.contains(&node.id)).unwrap();
        assert!(tree.levels[first..].iter().all(|l| l.contains(&node.id)));
    }
}
