//! Sequence classification over learned leaf subspaces: frame-to-leaf
//! assignment, subspace distances, both DTW variants and the k-NN rules.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::hierarchy::relative_error;
use crate::par::{self, Execution};
use crate::prox::{self, DenseMatrix};

pub type ClassId = usize;

/// Tolerance on `U^T U = I` accepted for leaf bases.
pub const BASIS_TOL: f64 = 1e-8;

/// Leaf index of every frame of a sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AssignmentVector(pub Vec<usize>);

impl AssignmentVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// A sequence of unit-norm feature columns (`m x len`).
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub features: DenseMatrix,
    pub label: Option<ClassId>,
    pub assignment: Option<AssignmentVector>,
}

impl SequenceSample {
    /// Normalizes the columns of `features`; zero columns are rejected.
    pub fn new(mut features: DenseMatrix, label: Option<ClassId>) -> Result<Self> {
        if features.ncols() == 0 || features.nrows() == 0 {
            return Err(Error::Dimension("empty sequence".into()));
        }
        prox::ensure_finite(&features, "sequence")?;
        for (t, mut col) in features.column_iter_mut().enumerate() {
            let n = col.norm();
            if n == 0.0 {
                return Err(Error::Domain(format!("frame {t} is a zero vector")));
            }
            // already-unit columns are kept bit for bit
            if (n - 1.0).abs() > 1e-12 {
                col /= n;
            }
        }
        Ok(SequenceSample { features, label, assignment: None })
    }

    pub fn len(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.features.ncols() == 0
    }

    fn assignment_or_err(&self) -> Result<&AssignmentVector> {
        self.assignment.as_ref().ok_or_else(|| Error::Config("sequence has no leaf assignment".into()))
    }

    fn label_or_err(&self) -> Result<ClassId> {
        self.label.ok_or_else(|| Error::Config("training sequence has no label".into()))
    }
}

/// `sqrt(1 - ||U1^T U2||_F^2 / max(d1, d2))` for orthonormal bases.
pub fn subspace_distance(u1: &DenseMatrix, u2: &DenseMatrix) -> f64 {
    let overlap = u1.tr_mul(u2).norm_squared();
    let d = u1.ncols().max(u2.ncols()) as f64;
    (1.0 - overlap / d).clamp(0.0, 1.0).sqrt()
}

/// Orthonormal bases of the leaf subspaces with their pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafSet {
    bases: Vec<DenseMatrix>,
    dist: Vec<Vec<f64>>,
}

impl LeafSet {
    pub fn new(bases: Vec<DenseMatrix>) -> Result<Self> {
        if bases.is_empty() {
            return Err(Error::Config("leaf set is empty".into()));
        }
        let m = bases[0].nrows();
        for (l, b) in bases.iter().enumerate() {
            if b.nrows() != m || b.ncols() == 0 || b.ncols() > m {
                return Err(Error::Dimension(format!("leaf {l} basis is {:?}", b.shape())));
            }
            prox::ensure_finite(b, "leaf basis")?;
            let defect = prox::orthonormality_defect(b);
            if defect > BASIS_TOL {
                return Err(Error::Domain(format!("leaf {l} basis is not orthonormal ({defect:e})")));
            }
        }
        let dist = par::symmetric_table(Execution::default(), bases.len(), |i, j| {
            if i == j {
                0.0
            } else {
                subspace_distance(&bases[i], &bases[j])
            }
        });
        Ok(LeafSet { bases, dist })
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    /// Ambient dimension `m`.
    pub fn ambient_dim(&self) -> usize {
        self.bases[0].nrows()
    }

    pub fn bases(&self) -> &[DenseMatrix] {
        &self.bases
    }

    pub fn dims(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.ncols()).collect()
    }

    /// Precomputed `d_u` between leaves `a` and `b`.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.dist[a][b]
    }

    fn check_indices(&self, psi: &AssignmentVector) -> Result<()> {
        match psi.0.iter().find(|&&l| l >= self.len()) {
            Some(l) => Err(Error::Domain(format!("leaf index {l} out of range for {} leaves", self.len()))),
            None => Ok(()),
        }
    }
}

/// Assigns each column of `features` to the leaf with the smallest relative
/// reconstruction error; ties go to the lowest leaf index.
pub fn assign_frames(features: &DenseMatrix, leaves: &LeafSet) -> Result<AssignmentVector> {
    if features.nrows() != leaves.ambient_dim() {
        return Err(Error::Dimension(format!(
            "frames have dimension {}, leaves {}",
            features.nrows(),
            leaves.ambient_dim()
        )));
    }
    let mut psi = Vec::with_capacity(features.ncols());
    for col in features.column_iter() {
        let mut best = (0, f64::INFINITY);
        for (l, basis) in leaves.bases().iter().enumerate() {
            let e = relative_error(col, basis)?;
            if e < best.1 {
                best = (l, e);
            }
        }
        psi.push(best.0);
    }
    Ok(AssignmentVector(psi))
}

pub fn assign_to_leaves(sample: &SequenceSample, leaves: &LeafSet) -> Result<AssignmentVector> {
    assign_frames(&sample.features, leaves)
}

/// Fills in the leaf assignment of every sample.
pub fn assign_all(samples: &mut [SequenceSample], leaves: &LeafSet, exec: Execution) -> Result<()> {
    let psis = par::map_slice(exec, samples, |s| assign_to_leaves(s, leaves));
    for (s, psi) in samples.iter_mut().zip(psis) {
        s.assignment = Some(psi?);
    }
    Ok(())
}

/// Accumulated-cost table of classic DTW, `(n+1) x (m+1)`, row-major.
fn dtw_table(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let w = m + 1;
    let mut r = vec![f64::INFINITY; (n + 1) * w];
    r[0] = 0.0;
    for a in 1..=n {
        for b in 1..=m {
            let prev = r[(a - 1) * w + b].min(r[a * w + b - 1]).min(r[(a - 1) * w + b - 1]);
            r[a * w + b] = cost(a - 1, b - 1) + prev;
        }
    }
    r
}

/// DTW distance between two leaf-assignment sequences using `d_u` as the
/// frame cost.
pub fn dtw_grassmann(psi_i: &AssignmentVector, psi_j: &AssignmentVector, leaves: &LeafSet) -> Result<f64> {
    if psi_i.is_empty() || psi_j.is_empty() {
        return Err(Error::Dimension("DTW of an empty assignment vector".into()));
    }
    leaves.check_indices(psi_i)?;
    leaves.check_indices(psi_j)?;
    let (n, m) = (psi_i.len(), psi_j.len());
    let r = dtw_table(n, m, |a, b| leaves.distance(psi_i.0[a], psi_j.0[b]));
    Ok(r[n * (m + 1) + m])
}

/// Frame-index pairs of a warping path, first to last.
pub type AlignmentPath = Vec<(usize, usize)>;

/// Optimal warping path under `cost`. On ties the backtrack prefers the
/// diagonal step, then the step that advances only the first sequence.
pub fn dtw_path(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> AlignmentPath {
    let r = dtw_table(n, m, cost);
    let w = m + 1;
    let (mut a, mut b) = (n, m);
    let mut path = vec![(a - 1, b - 1)];
    while (a, b) != (1, 1) {
        let diag = r[(a - 1) * w + b - 1];
        let up = r[(a - 1) * w + b];
        let left = r[a * w + b - 1];
        if diag <= up && diag <= left {
            a -= 1;
            b -= 1;
        } else if up <= left {
            a -= 1;
        } else {
            b -= 1;
        }
        path.push((a - 1, b - 1));
    }
    path.reverse();
    path
}

/// Drops the redundant ends of a path: the leading pairs during which either
/// sequence is still pinned to its first frame are cut down to the last such
/// pair, and the trailing pairs pinned to a last frame to the first such pair.
pub fn trim_path(path: &[(usize, usize)]) -> AlignmentPath {
    if path.is_empty() {
        return Vec::new();
    }
    let (a0, b0) = path[0];
    let mut start = 0;
    while start + 1 < path.len() && (path[start + 1].0 == a0 || path[start + 1].1 == b0) {
        start += 1;
    }
    let rest = &path[start..];
    let (a1, b1) = *rest.last().expect("non-empty");
    let mut end = rest.len() - 1;
    while end > 0 && (rest[end - 1].0 == a1 || rest[end - 1].1 == b1) {
        end -= 1;
    }
    let trimmed = rest[..=end].to_vec();
    if trimmed.is_empty() {
        path.to_vec()
    } else {
        trimmed
    }
}

/// Aligns two feature sequences with Euclidean-cost DTW and trims the ends.
pub fn align_features_dtw(phi: &DenseMatrix, phi_hat: &DenseMatrix) -> Result<AlignmentPath> {
    if phi.ncols() == 0 || phi_hat.ncols() == 0 {
        return Err(Error::Dimension("alignment of an empty sequence".into()));
    }
    if phi.nrows() != phi_hat.nrows() {
        return Err(Error::Dimension("sequences have different feature dimensions".into()));
    }
    let path = dtw_path(phi.ncols(), phi_hat.ncols(), |a, b| (phi.column(a) - phi_hat.column(b)).norm());
    Ok(trim_path(&path))
}

/// Mean leaf distance along an alignment path.
pub fn path_distance(
    path: &[(usize, usize)],
    psi: &AssignmentVector,
    psi_hat: &AssignmentVector,
    leaves: &LeafSet,
) -> Result<f64> {
    if path.is_empty() {
        return Err(Error::Dimension("empty alignment path".into()));
    }
    let mut total = 0.0;
    for &(a, b) in path {
        let (Some(&la), Some(&lb)) = (psi.0.get(a), psi_hat.0.get(b)) else {
            return Err(Error::Dimension(format!("path pair ({a}, {b}) outside the assignments")));
        };
        if la >= leaves.len() || lb >= leaves.len() {
            return Err(Error::Domain("leaf index out of range".into()));
        }
        total += leaves.distance(la, lb);
    }
    Ok(total / path.len() as f64)
}

/// Feature-aligned sequence distance: the mean leaf distance along the
/// trimmed DTW path of the raw features.
pub fn sequence_distance(
    phi: &DenseMatrix,
    phi_hat: &DenseMatrix,
    psi: &AssignmentVector,
    psi_hat: &AssignmentVector,
    leaves: &LeafSet,
) -> Result<f64> {
    if psi.len() != phi.ncols() || psi_hat.len() != phi_hat.ncols() {
        return Err(Error::Dimension("assignment length differs from sequence length".into()));
    }
    let path = align_features_dtw(phi, phi_hat)?;
    path_distance(&path, psi, psi_hat, leaves)
}

fn sample_distance(a: &SequenceSample, b: &SequenceSample, leaves: &LeafSet) -> Result<f64> {
    sequence_distance(&a.features, &b.features, a.assignment_or_err()?, b.assignment_or_err()?, leaves)
}

/// Distances from `test` to every training sequence.
pub fn distances_to(
    test: &SequenceSample,
    train: &[SequenceSample],
    leaves: &LeafSet,
    exec: Execution,
) -> Result<Vec<f64>> {
    par::map_slice(exec, train, |t| sample_distance(test, t, leaves)).into_iter().collect()
}

/// Group distances by class and check every class has at least `min_size` members.
fn by_class(dists: &[f64], labels: &[ClassId], min_size: usize) -> Result<BTreeMap<ClassId, Vec<f64>>> {
    if dists.len() != labels.len() {
        return Err(Error::Dimension("distances and labels differ in length".into()));
    }
    let mut groups: BTreeMap<ClassId, Vec<f64>> = BTreeMap::new();
    for (&d, &l) in dists.iter().zip(labels) {
        groups.entry(l).or_default().push(d);
    }
    if groups.is_empty() {
        return Err(Error::Config("no training sequences".into()));
    }
    for (c, g) in &groups {
        if g.len() < min_size {
            return Err(Error::Config(format!(
                "class {c} has {} training sequences, need at least {min_size}",
                g.len()
            )));
        }
    }
    Ok(groups)
}

fn mean_of_smallest(mut v: Vec<f64>, k: usize) -> f64 {
    v.sort_by(f64::total_cmp);
    v[..k].iter().sum::<f64>() / k as f64
}

/// k-NN decision from precomputed distances: the class whose `k` nearest
/// members are closest on average (ties to the lowest class id). Returns the
/// class and that average.
pub fn knn_decide(dists: &[f64], labels: &[ClassId], k: usize) -> Result<(ClassId, f64)> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let groups = by_class(dists, labels, k)?;
    let mut best: Option<(ClassId, f64)> = None;
    for (c, g) in groups {
        let avg = mean_of_smallest(g, k);
        if best.is_none_or(|(_, b)| avg < b) {
            best = Some((c, avg));
        }
    }
    Ok(best.expect("at least one class"))
}

fn training_labels(train: &[SequenceSample]) -> Result<Vec<ClassId>> {
    train.iter().map(SequenceSample::label_or_err).collect()
}

/// Closed-set k-NN over feature-aligned sequence distances.
pub fn knn_classify(test: &SequenceSample, train: &[SequenceSample], leaves: &LeafSet, k: usize) -> Result<ClassId> {
    let labels = training_labels(train)?;
    let dists = distances_to(test, train, leaves, Execution::default())?;
    Ok(knn_decide(&dists, &labels, k)?.0)
}

/// Open-set decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenSetLabel {
    Known(ClassId),
    New,
}

/// Open-set k-NN: a tentative k-NN class is accepted only if the test's
/// average distance to its `k` nearest members stays within `varsigma` times
/// the largest such average seen inside that class during training.
#[derive(Debug, Clone, PartialEq)]
pub struct OpenSetKnn {
    pub k: usize,
    pub varsigma: f64,
    /// Per class, the largest in-class average k-NN distance.
    pub spread: BTreeMap<ClassId, f64>,
    labels: Vec<ClassId>,
}

impl OpenSetKnn {
    /// Fits from the square matrix of training distances.
    pub fn fit(train_dists: &DenseMatrix, labels: &[ClassId], k: usize, varsigma: f64) -> Result<Self> {
        if !(varsigma > 1.0) {
            return Err(Error::Config("varsigma must exceed 1".into()));
        }
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let n = labels.len();
        if train_dists.shape() != (n, n) {
            return Err(Error::Dimension("training distance matrix does not match the labels".into()));
        }
        by_class(&vec![0.0; n], labels, k + 1)?;
        let mut spread: BTreeMap<ClassId, f64> = BTreeMap::new();
        for i in 0..n {
            let same: Vec<f64> =
                (0..n).filter(|&j| j != i && labels[j] == labels[i]).map(|j| train_dists[(i, j)]).collect();
            let avg = mean_of_smallest(same, k);
            let e = spread.entry(labels[i]).or_insert(0.0);
            *e = e.max(avg);
        }
        Ok(OpenSetKnn { k, varsigma, spread, labels: labels.to_vec() })
    }

    pub fn fit_sequences(
        train: &[SequenceSample],
        leaves: &LeafSet,
        k: usize,
        varsigma: f64,
        exec: Execution,
    ) -> Result<Self> {
        let labels = training_labels(train)?;
        let d = training_distances(train, leaves, exec)?;
        Self::fit(&d, &labels, k, varsigma)
    }

    pub(crate) fn from_parts(k: usize, varsigma: f64, spread: BTreeMap<ClassId, f64>, labels: Vec<ClassId>) -> Self {
        OpenSetKnn { k, varsigma, spread, labels }
    }

    pub fn with_varsigma(&self, varsigma: f64) -> Result<Self> {
        if !(varsigma > 1.0) {
            return Err(Error::Config("varsigma must exceed 1".into()));
        }
        Ok(OpenSetKnn { varsigma, ..self.clone() })
    }

    pub fn predict(&self, dists: &[f64]) -> Result<OpenSetLabel> {
        let (class, avg) = knn_decide(dists, &self.labels, self.k)?;
        if avg <= self.spread[&class] * self.varsigma {
            Ok(OpenSetLabel::Known(class))
        } else {
            Ok(OpenSetLabel::New)
        }
    }
}

pub fn open_set_knn(
    test: &SequenceSample,
    train: &[SequenceSample],
    leaves: &LeafSet,
    k: usize,
    varsigma: f64,
) -> Result<OpenSetLabel> {
    let model = OpenSetKnn::fit_sequences(train, leaves, k, varsigma, Execution::default())?;
    model.predict(&distances_to(test, train, leaves, Execution::default())?)
}

/// Square matrix of feature-aligned distances between training sequences.
/// Entry `(i, j)` aligns `i` against `j`.
pub fn training_distances(train: &[SequenceSample], leaves: &LeafSet, exec: Execution) -> Result<DenseMatrix> {
    let n = train.len();
    let rows = par::map_range(exec, n, |i| {
        (0..n)
            .map(|j| if i == j { Ok(0.0) } else { sample_distance(&train[i], &train[j], leaves) })
            .collect::<Result<Vec<f64>>>()
    });
    let mut d = DenseMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row?.into_iter().enumerate() {
            d[(i, j)] = v;
        }
    }
    Ok(d)
}

/// Pairwise Grassmann-DTW distances between assignment vectors.
pub fn dtw_distance_matrix(assignments: &[AssignmentVector], leaves: &LeafSet, exec: Execution) -> Result<DenseMatrix> {
    for psi in assignments {
        if psi.is_empty() {
            return Err(Error::Dimension("DTW of an empty assignment vector".into()));
        }
        leaves.check_indices(psi)?;
    }
    let n = assignments.len();
    let table = par::symmetric_table(exec, n, |i, j| {
        if i == j {
            0.0
        } else {
            dtw_grassmann(&assignments[i], &assignments[j], leaves).unwrap_or(f64::NAN)
        }
    });
    Ok(DenseMatrix::from_fn(n, n, |i, j| table[i][j]))
}

/// Grassmann-DTW distances from one sequence to each of `others`.
pub fn dtw_distances_to(
    psi: &AssignmentVector,
    others: &[AssignmentVector],
    leaves: &LeafSet,
    exec: Execution,
) -> Result<Vec<f64>> {
    par::map_slice(exec, others, |o| dtw_grassmann(psi, o, leaves)).into_iter().collect()
}

/// `exp(-d^2 / nu^2)`, entrywise.
pub fn kernel_from_distances(d: &DenseMatrix, nu: f64) -> DenseMatrix {
    d.map(|v| (-(v * v) / (nu * nu)).exp())
}

pub fn kernel_row(dists: &[f64], nu: f64) -> Vec<f64> {
    dists.iter().map(|v| (-(v * v) / (nu * nu)).exp()).collect()
}

/// Gaussian DTW kernel over assignment vectors.
pub fn gaussian_dtw_kernel(assignments: &[AssignmentVector], leaves: &LeafSet, nu: f64) -> Result<DenseMatrix> {
    if !(nu > 0.0) {
        return Err(Error::Config("kernel bandwidth must be positive".into()));
    }
    let d = dtw_distance_matrix(assignments, leaves, Execution::default())?;
    Ok(kernel_from_distances(&d, nu))
}

/// Median of the off-diagonal entries, or 1 when that median is zero.
pub fn median_bandwidth(d: &DenseMatrix) -> f64 {
    let n = d.nrows();
    let mut vals: Vec<f64> =
        (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| d[(i, j)]).collect();
    if vals.is_empty() {
        return 1.0;
    }
    vals.sort_by(f64::total_cmp);
    let mid = vals.len() / 2;
    let med = if vals.len().is_multiple_of(2) { 0.5 * (vals[mid - 1] + vals[mid]) } else { vals[mid] };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}
