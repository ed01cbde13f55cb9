//! Normalized spectral clustering (Ng–Jordan–Weiss) and the seeded k-means
//! engine behind it.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::prox::{self, DenseMatrix};

/// Diagonal regularization applied before degree normalization.
pub const DEGREE_REGULARIZATION: f64 = 1e-12;

/// Symmetric, non-negative similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix(DenseMatrix);

impl AffinityMatrix {
    pub fn new(w: DenseMatrix) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::Dimension(format!("affinity must be square, got {:?}", w.shape())));
        }
        prox::ensure_finite(&w, "affinity")?;
        let n = w.nrows();
        for j in 0..n {
            for i in 0..n {
                if w[(i, j)] < 0.0 {
                    return Err(Error::Domain(format!("negative affinity at ({i}, {j})")));
                }
                if w[(i, j)] != w[(j, i)] {
                    return Err(Error::NotSymmetric((w[(i, j)] - w[(j, i)]).abs()));
                }
            }
        }
        Ok(AffinityMatrix(w))
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    /// Principal submatrix on `indices`.
    pub fn restrict(&self, indices: &[usize]) -> AffinityMatrix {
        let k = indices.len();
        AffinityMatrix(DenseMatrix::from_fn(k, k, |i, j| self.0[(indices[i], indices[j])]))
    }
}

impl AffinityMatrix {
    /// Connected components of the graph with an edge wherever `w_ij > 0`
    /// (`i != j`), each sorted, ordered by their smallest member.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut comp = vec![usize::MAX; n];
        let mut out: Vec<Vec<usize>> = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            comp[start] = id;
            let mut members = vec![start];
            let mut stack = vec![start];
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    if j != i && comp[j] == usize::MAX && self.0[(i, j)] > 0.0 {
                        comp[j] = id;
                        members.push(j);
                        stack.push(j);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }
}

/// Cluster assignment for `N` points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabels {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl ClusterLabels {
    /// Renumbers labels in order of first appearance.
    pub fn canonical(labels: Vec<usize>, k: usize) -> Self {
        let mut map = vec![usize::MAX; k.max(labels.iter().map(|&l| l + 1).max().unwrap_or(0))];
        let mut next = 0;
        let labels = labels
            .into_iter()
            .map(|l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        ClusterLabels { labels, k }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Sorted member indices of cluster `c`.
    pub fn members(&self, c: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == c).map(|(i, _)| i).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub exec: Execution,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions { restarts: 10, max_iters: 300, exec: Execution::default() }
    }
}

/// Normalized spectral clustering into `k` groups.
pub fn spectral_cluster(w: &AffinityMatrix, k: usize, seed: u64) -> Result<ClusterLabels> {
    spectral_cluster_with(w, k, seed, KMeansOptions::default())
}

pub fn spectral_cluster_with(w: &AffinityMatrix, k: usize, seed: u64, opts: KMeansOptions) -> Result<ClusterLabels> {
    let n = w.len();
    if k == 0 || k > n {
        return Err(Error::Dimension(format!("cannot form {k} clusters from {n} points")));
    }
    if k == 1 {
        return Ok(ClusterLabels { labels: vec![0; n], k });
    }
    let a = w.matrix();
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / (a.row(i).sum() + DEGREE_REGULARIZATION).sqrt()).collect();
    let norm = DenseMatrix::from_fn(n, n, |i, j| {
        let v = if i == j { a[(i, j)] + DEGREE_REGULARIZATION } else { a[(i, j)] };
        inv_sqrt[i] * v * inv_sqrt[j]
    });
    let mut emb = prox::sym_eig_largest(&norm, k)?;
    for mut row in emb.row_iter_mut() {
        let r = row.norm();
        if r > 0.0 {
            row /= r;
        }
    }
    kmeans_with(&emb, k, seed, opts)
}

/// Seeded k-means over the rows of `points`.
pub fn kmeans(points: &DenseMatrix, k: usize, seed: u64) -> Result<ClusterLabels> {
    kmeans_with(points, k, seed, KMeansOptions::default())
}

pub fn kmeans_with(points: &DenseMatrix, k: usize, seed: u64, opts: KMeansOptions) -> Result<ClusterLabels> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::Dimension(format!("cannot form {k} clusters from {n} points")));
    }
    prox::ensure_finite(points, "k-means input")?;
    let rows: Vec<DVector<f64>> = points.row_iter().map(|r| r.transpose()).collect();
    let runs = par::map_range(opts.exec, opts.restarts.max(1), |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        lloyd(&rows, k, opts.max_iters, &mut rng)
    });
    // lowest restart index wins ties
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.1 < runs[best].1 {
            best = i;
        }
    }
    let (labels, _) = runs.into_iter().nth(best).expect("at least one restart");
    Ok(ClusterLabels::canonical(labels, k))
}

/// Within-cluster sum of squares of a labeling.
pub fn wcss(points: &DenseMatrix, labels: &[usize], k: usize) -> f64 {
    let rows: Vec<DVector<f64>> = points.row_iter().map(|r| r.transpose()).collect();
    let centers = centroids(&rows, labels, k, None);
    rows.iter().zip(labels).map(|(p, &l)| (p - &centers[l]).norm_squared()).sum()
}

fn centroids(
    rows: &[DVector<f64>],
    labels: &[usize],
    k: usize,
    previous: Option<&[DVector<f64>]>,
) -> Vec<DVector<f64>> {
    let dim = rows[0].len();
    let mut sums = vec![DVector::zeros(dim); k];
    let mut counts = vec![0usize; k];
    for (p, &l) in rows.iter().zip(labels) {
        sums[l] += p;
        counts[l] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(c, (s, cnt))| match (cnt, previous) {
            (0, Some(prev)) => prev[c].clone(),
            (0, None) => s,
            _ => s / cnt as f64,
        })
        .collect()
}

fn nearest(p: &DVector<f64>, centers: &[DVector<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, ctr) in centers.iter().enumerate() {
        let d = (p - ctr).norm_squared();
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(rows: &[DVector<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let n = rows.len();
    let mut centers = vec![rows[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|p| (p - &centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = rows[pick].clone();
        for (i, p) in rows.iter().enumerate() {
            d2[i] = d2[i].min((p - &c).norm_squared());
        }
        centers.push(c);
    }
    centers
}

fn lloyd(rows: &[DVector<f64>], k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let mut centers = plus_plus_init(rows, k, rng);
    let mut labels: Vec<usize> = rows.iter().map(|p| nearest(p, &centers).0).collect();
    for _ in 0..max_iters {
        centers = centroids(rows, &labels, k, Some(&centers));
        let next: Vec<usize> = rows.iter().map(|p| nearest(p, &centers).0).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    let centers = centroids(rows, &labels, k, Some(&centers));
    let cost = rows.iter().zip(&labels).map(|(p, &l)| (p - &centers[l]).norm_squared()).sum();
    (labels, cost)
}
