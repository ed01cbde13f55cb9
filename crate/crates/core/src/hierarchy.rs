//! Hierarchical subspace clustering: repeated two-way spectral splits of a
//! fixed affinity, with each split kept only when the child subspaces model
//! their samples markedly better than the parent subspace does.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVectorView;

use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::prox::{self, DenseMatrix, RANK_TOL};
use crate::sequence::LeafSet;
use crate::solver::{self, FeatureMatrix, SolverConfig};
use crate::spectral::{self, AffinityMatrix};

/// Mean parent errors at or below this are treated as exact fits, for which
/// no split can improve anything.
pub const EXACT_FIT_TOL: f64 = 1e-12;

const TREE_MAGIC: &[u8; 4] = b"UOST";
const TREE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyConfig {
    /// Deepest level `P`; the solver runs with `l_max = 2^P`.
    pub levels: usize,
    /// Energy fraction kept when estimating a subspace.
    pub gamma: f64,
    /// Minimum relative error improvement for a split.
    pub rho_split: f64,
    /// Minimum dimension of both child subspaces.
    pub d_min: usize,
    /// Relative cut applied to the coefficients before building the affinity.
    pub coef_threshold: f64,
    pub exec: Execution,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            levels: 3,
            gamma: 0.98,
            rho_split: 0.01,
            d_min: 1,
            coef_threshold: 0.05,
            exec: Execution::default(),
        }
    }
}

impl HierarchyConfig {
    pub fn l_max(&self) -> usize {
        1usize << self.levels
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels > 16 {
            return Err(Error::Config("levels must be between 1 and 16".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1]".into()));
        }
        if !(self.rho_split >= 0.0) {
            return Err(Error::Config("rho_split must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.coef_threshold) {
            return Err(Error::Config("coef_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Orthonormal basis of the dominant subspace of `xc` and its dimension.
///
/// The dimension is the smallest `d` whose leading `d` eigenvalues of
/// `xc * xc^T` hold at least `gamma` of the total energy. Eigenvalues come from
/// the thin SVD of `xc`, so only `min(m, n)` of them are ever formed.
pub fn estimate_subspace(xc: &DenseMatrix, gamma: f64) -> Result<(DenseMatrix, usize)> {
    if xc.ncols() == 0 || xc.nrows() == 0 {
        return Err(Error::Dimension("subspace of an empty cluster".into()));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config("gamma must lie in (0, 1]".into()));
    }
    let svd = prox::thin_svd(xc);
    let (u, sv) = (&svd.u, &svd.s);
    let order: Vec<usize> = (0..sv.len()).collect();
    let top = sv[0];
    if top == 0.0 {
        return Err(Error::DegenerateData("cluster is all zeros".into()));
    }
    let energy: Vec<f64> = order.iter().map(|&k| if sv[k] < RANK_TOL * top { 0.0 } else { sv[k] * sv[k] }).collect();
    let total: f64 = energy.iter().sum();
    let mut cum = 0.0;
    let mut d = energy.len();
    for (i, e) in energy.iter().enumerate() {
        cum += e;
        if cum >= gamma * total {
            d = i + 1;
            break;
        }
    }
    let mut basis = DenseMatrix::from_fn(xc.nrows(), d, |i, j| u[(i, order[j])]);
    prox::fix_column_signs(&mut basis);
    Ok((basis, d))
}

/// `||x - U U^T x||^2 / ||x||^2`, clamped into `[0, 1]`.
pub fn relative_error(x: DVectorView<'_, f64>, basis: &DenseMatrix) -> Result<f64> {
    let nx = x.norm_squared();
    if nx == 0.0 {
        return Err(Error::Domain("relative error of a zero vector".into()));
    }
    let coef = basis.tr_mul(&x);
    let resid = x - basis * coef;
    Ok((resid.norm_squared() / nx).clamp(0.0, 1.0))
}

fn mean_relative_error(x: &FeatureMatrix, indices: &[usize], basis: &DenseMatrix) -> Result<f64> {
    let mut total = 0.0;
    for &i in indices {
        total += relative_error(x.data().column(i), basis)?;
    }
    Ok(total / indices.len() as f64)
}

/// A cluster with its estimated subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Sorted sample indices.
    pub indices: Vec<usize>,
    pub basis: DenseMatrix,
}

impl Cluster {
    pub fn estimate(x: &FeatureMatrix, indices: Vec<usize>, gamma: f64) -> Result<Self> {
        let (basis, _) = estimate_subspace(&x.select(&indices), gamma)?;
        Ok(Cluster { indices, basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitOutcome {
    Split(Box<[Cluster; 2]>),
    Leaf,
}

/// Outcome of a split attempt plus the statistics behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDecision {
    pub outcome: SplitOutcome,
    /// Mean parent-basis errors per child, when the split produced two sides.
    pub parent_errors: Option<[f64; 2]>,
    /// Mean child-basis errors per child.
    pub child_errors: Option<[f64; 2]>,
}

impl SplitDecision {
    fn leaf() -> Self {
        SplitDecision { outcome: SplitOutcome::Leaf, parent_errors: None, child_errors: None }
    }
}

/// Two-way split of a cluster, without any acceptance test: whole connected
/// components when the restricted graph is disconnected, otherwise 2-way
/// spectral clustering. Returns `None` when a side is empty.
pub fn bisect(
    x: &FeatureMatrix,
    w: &AffinityMatrix,
    indices: &[usize],
    gamma: f64,
    seed: u64,
) -> Result<Option<[Cluster; 2]>> {
    if indices.len() < 2 {
        return Ok(None);
    }
    let sub = w.restrict(indices);
    let components = sub.connected_components();
    let local: [Vec<usize>; 2] = if components.len() >= 2 {
        group_components(components)
    } else {
        let labels = spectral::spectral_cluster(&sub, 2, seed)?;
        [labels.members(0), labels.members(1)]
    };
    let sides: Vec<Vec<usize>> = local.iter().map(|side| side.iter().map(|&i| indices[i]).collect()).collect();
    if sides.iter().any(|s| s.is_empty()) {
        return Ok(None);
    }
    let mut it = sides.into_iter();
    let a = Cluster::estimate(x, it.next().expect("two sides"), gamma)?;
    let b = Cluster::estimate(x, it.next().expect("two sides"), gamma)?;
    Ok(Some([a, b]))
}

/// Splits a disconnected graph along whole components, largest first onto
/// the currently smaller side. The 2-way spectral relaxation is degenerate
/// when there are more than two components, so any grouping of components
/// is an equally good cut; balancing sizes is the tie-break.
fn group_components(mut components: Vec<Vec<usize>>) -> [Vec<usize>; 2] {
    components.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    let mut sides: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for c in components {
        let target = usize::from(sides[1].len() < sides[0].len());
        sides[target].extend(c);
    }
    sides.iter_mut().for_each(|s| s.sort_unstable());
    sides
}

/// Attempts to split `node`; the split is kept when some child's mean error
/// improves on the parent basis by a relative margin of at least `rho_split`
/// and both children have dimension at least `d_min`.
pub fn try_split(
    x: &FeatureMatrix,
    w: &AffinityMatrix,
    node: &Cluster,
    cfg: &HierarchyConfig,
    seed: u64,
) -> Result<SplitDecision> {
    let Some(children) = bisect(x, w, &node.indices, cfg.gamma, seed)? else {
        return Ok(SplitDecision::leaf());
    };
    let mut parent_errors = [0.0; 2];
    let mut child_errors = [0.0; 2];
    let mut improved = false;
    for (c, child) in children.iter().enumerate() {
        let delta = mean_relative_error(x, &child.indices, &node.basis)?;
        let zeta = mean_relative_error(x, &child.indices, &child.basis)?;
        parent_errors[c] = delta;
        child_errors[c] = zeta;
        if delta > EXACT_FIT_TOL && (delta - zeta) / delta >= cfg.rho_split {
            improved = true;
        }
    }
    let dims_ok = children.iter().all(|c| c.dim() >= cfg.d_min);
    let outcome = if improved && dims_ok { SplitOutcome::Split(Box::new(children)) } else { SplitOutcome::Leaf };
    Ok(SplitDecision { outcome, parent_errors: Some(parent_errors), child_errors: Some(child_errors) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceNode {
    pub id: usize,
    /// Level at which the node was created (0 for the root).
    pub level: usize,
    pub parent: Option<usize>,
    pub indices: Vec<usize>,
    pub basis: DenseMatrix,
    /// May still be split at a later level.
    pub divisible: bool,
    pub children: Option<[usize; 2]>,
}

impl SubspaceNode {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Result of hierarchical clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyTree {
    pub nodes: Vec<SubspaceNode>,
    /// `levels[p]` lists the clusters at level `p`; unsplit clusters carry
    /// forward under the same node id.
    pub levels: Vec<Vec<usize>>,
    pub n_samples: usize,
    pub solver_converged: bool,
    pub solver_iterations: usize,
}

impl HierarchyTree {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn leaves(&self) -> Vec<&SubspaceNode> {
        self.levels.last().expect("root level").iter().map(|&id| &self.nodes[id]).collect()
    }

    /// Leaf position of every sample.
    pub fn leaf_labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.n_samples];
        for (l, leaf) in self.leaves().into_iter().enumerate() {
            for &i in &leaf.indices {
                labels[i] = l;
            }
        }
        labels
    }

    pub fn leaf_set(&self) -> Result<LeafSet> {
        LeafSet::new(self.leaves().into_iter().map(|n| n.basis.clone()).collect())
    }

    /// One line per node: id, level, size, dim, divisibility and children.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# tree samples={} depth={} leaves={} solver_converged={} solver_iterations={}",
            self.n_samples,
            self.depth(),
            self.leaves().len(),
            self.solver_converged,
            self.solver_iterations
        );
        for n in &self.nodes {
            let children = match n.children {
                Some([a, b]) => format!("{a},{b}"),
                None => "-".into(),
            };
            let _ = writeln!(
                s,
                "node {} level={} size={} dim={} divisible={} children={}",
                n.id,
                n.level,
                n.indices.len(),
                n.dim(),
                u8::from(n.divisible),
                children
            );
        }
        s
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut enc = Encoder::new();
        enc.bytes(TREE_MAGIC);
        enc.u32(TREE_VERSION);
        enc.usize(self.n_samples)?;
        enc.u8(u8::from(self.solver_converged));
        enc.usize(self.solver_iterations)?;
        enc.usize(self.nodes.len())?;
        for n in &self.nodes {
            enc.usize(n.id)?;
            enc.usize(n.level)?;
            enc.opt_usize(n.parent)?;
            enc.u8(u8::from(n.divisible));
            enc.opt_usize(n.children.map(|c| c[0]))?;
            enc.opt_usize(n.children.map(|c| c[1]))?;
            enc.usizes(&n.indices)?;
            enc.matrix(&n.basis)?;
        }
        enc.usize(self.levels.len())?;
        for level in &self.levels {
            enc.usizes(level)?;
        }
        Ok(enc.finish())
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(buf, "hierarchy tree");
        dec.expect_magic(TREE_MAGIC)?;
        let version = dec.u32()?;
        if version != TREE_VERSION {
            return dec.fail(format!("unsupported version {version}"));
        }
        let n_samples = dec.usize()?;
        let solver_converged = dec.u8()? != 0;
        let solver_iterations = dec.usize()?;
        let count = dec.usize()?;
        let mut nodes = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let id = dec.usize()?;
            let level = dec.usize()?;
            let parent = dec.opt_usize()?;
            let divisible = dec.u8()? != 0;
            let children = match (dec.opt_usize()?, dec.opt_usize()?) {
                (Some(a), Some(b)) => Some([a, b]),
                (None, None) => None,
                _ => return dec.fail("node with a single child"),
            };
            let indices = dec.usizes()?;
            let basis = dec.matrix()?;
            nodes.push(SubspaceNode { id, level, parent, indices, basis, divisible, children });
        }
        let n_levels = dec.usize()?;
        let mut levels = Vec::new();
        for _ in 0..n_levels {
            levels.push(dec.usizes()?);
        }
        dec.finish()?;
        let tree = HierarchyTree { nodes, levels, n_samples, solver_converged, solver_iterations };
        tree.check()?;
        Ok(tree)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Structural consistency: ids, references and per-level partitions.
    pub fn check(&self) -> Result<()> {
        let bad = |r: String| Err(Error::Format { what: "hierarchy tree", reason: r });
        if self.levels.is_empty() {
            return bad("no levels".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return bad(format!("node {i} carries id {}", n.id));
            }
            let refs = n.parent.into_iter().chain(n.children.into_iter().flatten());
            if refs.into_iter().any(|r| r >= self.nodes.len()) {
                return bad(format!("node {i} references a missing node"));
            }
        }
        for (p, level) in self.levels.iter().enumerate() {
            let mut seen = vec![false; self.n_samples];
            for &id in level {
                let Some(node) = self.nodes.get(id) else {
                    return bad(format!("level {p} references missing node {id}"));
                };
                for &i in &node.indices {
                    if i >= self.n_samples || std::mem::replace(&mut seen[i], true) {
                        return bad(format!("level {p} does not partition the samples"));
                    }
                }
            }
            if seen.iter().any(|s| !s) {
                return bad(format!("level {p} does not cover every sample"));
            }
        }
        Ok(())
    }
}

fn split_seed(seed: u64, node: usize) -> u64 {
    seed ^ (node as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Builds the hierarchy over a precomputed affinity.
pub fn build_hierarchy(
    x: &FeatureMatrix,
    w: &AffinityMatrix,
    cfg: &HierarchyConfig,
    seed: u64,
) -> Result<HierarchyTree> {
    cfg.validate()?;
    let n = x.len();
    if w.len() != n {
        return Err(Error::Dimension(format!("affinity is {}x{0}, data has {n} samples", w.len())));
    }
    if n < 4 {
        return Err(Error::Dimension("hierarchical clustering needs at least 4 samples".into()));
    }
    let root = Cluster::estimate(x, (0..n).collect(), cfg.gamma)?;
    let mut nodes = vec![SubspaceNode {
        id: 0,
        level: 0,
        parent: None,
        indices: root.indices,
        basis: root.basis,
        divisible: true,
        children: None,
    }];
    let mut levels = vec![vec![0usize]];

    for p in 0..cfg.levels {
        let current = levels[p].clone();
        // levels 0 -> 1 -> 2 split unconditionally
        let unconditional = p < 2;
        let decisions: Vec<Result<Option<[Cluster; 2]>>> = par::map_slice(cfg.exec, &current, |&id| {
            let node = &nodes[id];
            if !node.divisible {
                return Ok(None);
            }
            let seed = split_seed(seed, id);
            if unconditional {
                bisect(x, w, &node.indices, cfg.gamma, seed)
            } else {
                let parent = Cluster { indices: node.indices.clone(), basis: node.basis.clone() };
                Ok(match try_split(x, w, &parent, cfg, seed)?.outcome {
                    SplitOutcome::Split(children) => Some(*children),
                    SplitOutcome::Leaf => None,
                })
            }
        });
        let mut next = Vec::with_capacity(current.len() * 2);
        for (&id, decision) in current.iter().zip(decisions) {
            match decision? {
                Some(children) => {
                    let mut ids = [0; 2];
                    for (slot, child) in ids.iter_mut().zip(children) {
                        *slot = nodes.len();
                        nodes.push(SubspaceNode {
                            id: *slot,
                            level: p + 1,
                            parent: Some(id),
                            indices: child.indices,
                            basis: child.basis,
                            divisible: true,
                            children: None,
                        });
                    }
                    nodes[id].children = Some(ids);
                    next.extend(ids);
                }
                None => {
                    nodes[id].divisible = false;
                    next.push(id);
                }
            }
        }
        levels.push(next);
    }
    let tree = HierarchyTree { nodes, levels, n_samples: n, solver_converged: true, solver_iterations: 0 };
    debug_assert!(tree.check().is_ok());
    Ok(tree)
}

/// Solves for the representation, builds the affinity and grows the tree.
/// The solver runs with `l_max = 2^levels`, overriding `scfg.l_max`.
pub fn hcs_lrr(x: &FeatureMatrix, scfg: &SolverConfig, hcfg: &HierarchyConfig, seed: u64) -> Result<HierarchyTree> {
    hcfg.validate()?;
    if x.len() < 4 {
        return Err(Error::Dimension("hierarchical clustering needs at least 4 samples".into()));
    }
    let scfg = SolverConfig { l_max: hcfg.l_max().min(x.len()), ..scfg.clone() };
    let out = solver::cslrr_solve(x, &scfg)?;
    let w = solver::build_affinity(&solver::threshold_coefficients(&out.z, hcfg.coef_threshold))?;
    let mut tree = build_hierarchy(x, &w, hcfg, seed)?;
    tree.solver_converged = out.converged;
    tree.solver_iterations = out.iterations;
    Ok(tree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn subspace_single_direction() {
        let xc = DenseMatrix::from_fn(3, 4, |i, j| if i == 0 { (j + 1) as f64 } else { 0.0 });
        let (u, d) = estimate_subspace(&xc, 0.98).unwrap();
        assert_eq!(d, 1);
        assert!((u[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subspace_equal_energy_needs_both() {
        let xc = DenseMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let (u, d) = estimate_subspace(&xc, 0.98).unwrap();
        assert_eq!(d, 2);
        assert!(prox::orthonormality_defect(&u) < 1e-12);
    }

    #[test]
    fn subspace_gamma_one_gives_rank() {
        let a = DenseMatrix::from_fn(6, 2, |i, j| ((i + 1) * (j + 2)) as f64 + (i * j) as f64);
        let b = DenseMatrix::from_fn(2, 9, |i, j| (i as f64 - 0.5) * (j as f64 + 1.0) + 0.3 * j as f64);
        let (_, d) = estimate_subspace(&(a * b), 1.0).unwrap();
        assert_eq!(d, 2);
        assert!(matches!(estimate_subspace(&DenseMatrix::zeros(3, 2), 0.9), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn relative_error_cases() {
        let u = DenseMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let inside = DVector::from_vec(vec![2.0, 0.0]);
        let outside = DVector::from_vec(vec![0.0, 3.0]);
        let diag = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(relative_error(inside.column(0), &u).unwrap(), 0.0);
        assert_eq!(relative_error(outside.column(0), &u).unwrap(), 1.0);
        assert!((relative_error(diag.column(0), &u).unwrap() - 0.5).abs() < 1e-15);
        let zero = DVector::zeros(2);
        assert!(matches!(relative_error(zero.column(0), &u), Err(Error::Domain(_))));
    }

    #[test]
    fn config_defaults() {
        let cfg = HierarchyConfig::default();
        assert_eq!(cfg.gamma, 0.98);
        assert_eq!(HierarchyConfig { levels: 4, ..cfg }.l_max(), 16);
    }
}
