//! Linearized ADMM for clustering-aware structure-constrained low-rank
//! representation.
//!
//! The solver minimizes
//!
//! ```text
//! ||Z||_* + alpha*||B (.) Q||_1 + beta*tr(F^T (V - (|Q|+|Q^T|)/2) F) + lambda*||E||
//!     s.t. X = XZ + E,  Z = Q,  F^T F = I
//! ```
//!
//! With `beta = 0` the segmentation term drops out (structure-constrained LRR)
//! and with `alpha = beta = 0` the Q-step is a plain shift, which is ordinary
//! LRR with an l2,1 error term.

use std::fmt;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::prox::{self, DenseMatrix};
use crate::spectral::AffinityMatrix;

/// Column norms must be within this of 1 for a [`FeatureMatrix`].
pub const UNIT_NORM_TOL: f64 = 1e-8;

/// Reshape of each feature column into `blocks x bins` for the blockwise
/// error term. Column entries are laid out block-major: entry
/// `block * bins + bin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockShape {
    pub blocks: usize,
    pub bins: usize,
}

/// Data matrix `X` (`m x N`) with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DenseMatrix,
    block_shape: Option<BlockShape>,
}

impl FeatureMatrix {
    /// Wraps a matrix whose columns are already unit-norm.
    pub fn new(data: DenseMatrix) -> Result<Self> {
        check_nonempty(&data)?;
        prox::ensure_finite(&data, "feature matrix")?;
        for (j, col) in data.column_iter().enumerate() {
            let n = col.norm();
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Domain(format!("column {j} has norm {n}, expected 1")));
            }
        }
        Ok(FeatureMatrix { data, block_shape: None })
    }

    /// Scales every column to unit norm. Zero columns are rejected.
    pub fn normalized(mut data: DenseMatrix) -> Result<Self> {
        check_nonempty(&data)?;
        prox::ensure_finite(&data, "feature matrix")?;
        for (j, mut col) in data.column_iter_mut().enumerate() {
            let n = col.norm();
            if n == 0.0 {
                return Err(Error::Domain(format!("column {j} is zero")));
            }
            col /= n;
        }
        Ok(FeatureMatrix { data, block_shape: None })
    }

    pub fn with_block_shape(mut self, shape: BlockShape) -> Result<Self> {
        if shape.blocks * shape.bins != self.dim() || shape.blocks == 0 {
            return Err(Error::Config(format!(
                "block shape {}x{} does not cover feature dimension {}",
                shape.blocks,
                shape.bins,
                self.dim()
            )));
        }
        self.block_shape = Some(shape);
        Ok(self)
    }

    pub fn data(&self) -> &DenseMatrix {
        &self.data
    }

    pub fn into_inner(self) -> DenseMatrix {
        self.data
    }

    /// Feature dimension `m`.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Number of samples `N`.
    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn block_shape(&self) -> Option<BlockShape> {
        self.block_shape
    }

    /// Columns at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> DenseMatrix {
        self.data.select_columns(indices)
    }
}

fn check_nonempty(data: &DenseMatrix) -> Result<()> {
    if data.is_empty() {
        Err(Error::Dimension("feature matrix is empty".into()))
    } else {
        Ok(())
    }
}

/// How the representation error `E` is regularized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorMode {
    /// `||E||_{2,1}` over the columns of `E` (motion-boundary features).
    #[default]
    Columnwise,
    /// Per sample, the reshaped `blocks x bins` error gets an l2,1 penalty
    /// over its columns, i.e. one group per bin (gradient-histogram features).
    Blockwise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    /// Number of segmentation eigenvectors (upper bound on the cluster count).
    pub l_max: usize,
    pub rho: f64,
    pub mu0: f64,
    pub mu_max: f64,
    pub epsilon: f64,
    /// `eta = eta_factor * ||X||^2`.
    pub eta_factor: f64,
    pub max_iters: usize,
    pub error_mode: ErrorMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            alpha: 1.0,
            beta: 0.5,
            lambda: 0.5,
            l_max: 4,
            rho: 1.1,
            mu0: 0.1,
            mu_max: 1e30,
            epsilon: 1e-7,
            eta_factor: 1.02,
            max_iters: 500,
            error_mode: ErrorMode::Columnwise,
        }
    }
}

impl SolverConfig {
    /// Plain LRR: no structure weight, no segmentation coupling.
    pub fn lrr(lambda: f64, l_max: usize) -> Self {
        SolverConfig { alpha: 0.0, beta: 0.0, lambda, l_max, ..Default::default() }
    }

    /// Structure-constrained LRR (no segmentation coupling).
    pub fn sc_lrr(alpha: f64, lambda: f64, l_max: usize) -> Self {
        SolverConfig { alpha, beta: 0.0, lambda, l_max, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be a finite non-negative number");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be a finite non-negative number");
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be positive");
        }
        if self.l_max == 0 {
            return bad("l_max must be at least 1");
        }
        if !(self.rho > 1.0) {
            return bad("rho must exceed 1");
        }
        if !(self.mu0 > 0.0) || !(self.mu_max >= self.mu0) {
            return bad("need 0 < mu0 <= mu_max");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.eta_factor > 1.0) {
            return bad("eta_factor must exceed 1");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        Ok(())
    }
}

/// Structure weights `b_ij = 1 - exp(-(1 - |x_i^T x_j|) / sigma)`, with
/// `sigma` the mean of `1 - |x_i^T x_j|` over off-diagonal pairs.
pub fn build_weight_matrix(x: &FeatureMatrix) -> Result<DenseMatrix> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Dimension("weight matrix needs at least two samples".into()));
    }
    let gram = x.data().transpose() * x.data();
    let mut dis = DenseMatrix::zeros(n, n);
    let mut total = 0.0;
    for j in 0..n {
        for i in 0..j {
            let s = (1.0 - gram[(i, j)].abs()).max(0.0);
            dis[(i, j)] = s;
            dis[(j, i)] = s;
            total += 2.0 * s;
        }
    }
    let sigma = total / (n * (n - 1)) as f64;
    if sigma <= 0.0 {
        return Err(Error::DegenerateData("all samples are pairwise parallel".into()));
    }
    let mut b = dis.map(|s| 1.0 - (-s / sigma).exp());
    b.fill_diagonal(0.0);
    Ok(b)
}

/// `theta_ij = 0.5 * ||f^i - f^j||^2` over the rows of `F`.
pub fn theta_from_segmentation(f: &DenseMatrix) -> DenseMatrix {
    let n = f.nrows();
    let sq: Vec<f64> = f.row_iter().map(|r| r.norm_squared()).collect();
    let g = f * f.transpose();
    let mut theta = DenseMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let v = (0.5 * (sq[i] + sq[j]) - g[(i, j)]).max(0.0);
            theta[(i, j)] = v;
            theta[(j, i)] = v;
        }
    }
    theta
}

/// `v_ii = sum_j (|q_ij| + |q_ji|) / 2`.
pub fn degree_vector(q: &DenseMatrix) -> DVector<f64> {
    let n = q.nrows();
    DVector::from_fn(n, |i, _| (0..n).map(|j| 0.5 * (q[(i, j)].abs() + q[(j, i)].abs())).sum())
}

/// Laplacian `M = V - (|Q| + |Q^T|)/2` of the symmetrized coefficient graph.
pub fn laplacian(q: &DenseMatrix, v: &DVector<f64>) -> DenseMatrix {
    let n = q.nrows();
    DenseMatrix::from_fn(n, n, |i, j| {
        let w = 0.5 * (q[(i, j)].abs() + q[(j, i)].abs());
        if i == j {
            v[i] - w
        } else {
            -w
        }
    })
}

/// One LADM iterate.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub z: DenseMatrix,
    pub q: DenseMatrix,
    pub e: DenseMatrix,
    pub gamma1: DenseMatrix,
    pub gamma2: DenseMatrix,
    /// Segmentation matrix; `None` until the first F-step.
    pub f: Option<DenseMatrix>,
    pub theta: DenseMatrix,
    pub v: DVector<f64>,
    pub mu: f64,
    pub t: usize,
    pub history: Vec<IterRecord>,
}

impl SolverState {
    pub fn zeros(m: usize, n: usize, mu0: f64) -> Self {
        SolverState {
            z: DenseMatrix::zeros(n, n),
            q: DenseMatrix::zeros(n, n),
            e: DenseMatrix::zeros(m, n),
            gamma1: DenseMatrix::zeros(m, n),
            gamma2: DenseMatrix::zeros(n, n),
            f: None,
            theta: DenseMatrix::zeros(n, n),
            v: DVector::zeros(n),
            mu: mu0,
            t: 0,
            history: Vec::new(),
        }
    }
}

/// Residuals after one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub t: usize,
    /// `||X - XZ - E||_inf`
    pub r1: f64,
    /// `||Z - Q||_inf`
    pub r2: f64,
    /// Penalty used during the iteration.
    pub mu: f64,
}

impl fmt::Display for IterRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "iter={} r1={:e} r2={:e} mu={:e}", self.t, self.r1, self.r2, self.mu)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub z: DenseMatrix,
    pub q: DenseMatrix,
    pub e: DenseMatrix,
    pub f: Option<DenseMatrix>,
    pub history: Vec<IterRecord>,
    pub converged: bool,
    pub iterations: usize,
}

/// A configured solver bound to one data matrix.
#[derive(Debug, Clone)]
pub struct CsLrr<'a> {
    x: &'a FeatureMatrix,
    cfg: SolverConfig,
    b: DenseMatrix,
    eta: f64,
}

impl<'a> CsLrr<'a> {
    pub fn new(x: &'a FeatureMatrix, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if x.len() < cfg.l_max {
            return Err(Error::Config(format!("l_max = {} exceeds the sample count {}", cfg.l_max, x.len())));
        }
        if cfg.error_mode == ErrorMode::Blockwise && x.block_shape().is_none() {
            return Err(Error::Config("blockwise error mode requires a block shape".into()));
        }
        let b = if cfg.alpha > 0.0 { build_weight_matrix(x)? } else { DenseMatrix::zeros(x.len(), x.len()) };
        let eta = cfg.eta_factor * prox::spectral_norm(x.data()).powi(2);
        Ok(CsLrr { x, cfg, b, eta })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.b
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Overrides the linearization constant (it must stay above `||X||^2`).
    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn initial_state(&self) -> SolverState {
        SolverState::zeros(self.x.dim(), self.x.len(), self.cfg.mu0)
    }

    /// Gradient of the smooth coupling at `st.z`.
    pub fn coupling_gradient(&self, st: &SolverState) -> DenseMatrix {
        let x = self.x.data();
        let mu = st.mu;
        let fit = x * &st.z - x + &st.e - &st.gamma1 / mu;
        (x.transpose() * fit) * mu + (&st.z - &st.q + &st.gamma2 / mu) * mu
    }

    /// Linearized proximal Z-step.
    pub fn update_z(&self, st: &SolverState) -> DenseMatrix {
        let step = self.eta * st.mu;
        let target = &st.z - self.coupling_gradient(st) / step;
        prox::svt(&target, 1.0 / step)
    }

    /// Q-step: entrywise shrink of `Z + G2/mu` with threshold
    /// `(alpha*b_ij + beta*theta_ij)/mu`. Uses `st.theta` from the previous F.
    pub fn update_q(&self, st: &SolverState, z_next: &DenseMatrix) -> DenseMatrix {
        let target = z_next + &st.gamma2 / st.mu;
        let (alpha, beta, mu) = (self.cfg.alpha, self.cfg.beta, st.mu);
        DenseMatrix::from_fn(target.nrows(), target.ncols(), |i, j| {
            let h = alpha * self.b[(i, j)] + beta * st.theta[(i, j)];
            prox::soft_threshold(target[(i, j)], h / mu)
        })
    }

    /// F-step: eigenvectors of the `l_max` smallest eigenvalues of `V - (|Q|+|Q^T|)/2`.
    pub fn update_f(&self, q: &DenseMatrix, v: &DVector<f64>) -> Result<DenseMatrix> {
        prox::sym_eig_smallest(&laplacian(q, v), self.cfg.l_max)
    }

    /// E-step on `C = X - XZ + G1/mu`.
    pub fn update_e(&self, st: &SolverState, z_next: &DenseMatrix) -> Result<DenseMatrix> {
        let x = self.x.data();
        let c = x - x * z_next + &st.gamma1 / st.mu;
        let tau = self.cfg.lambda / st.mu;
        match self.cfg.error_mode {
            ErrorMode::Columnwise => Ok(prox::col_l21_prox(&c, tau)),
            ErrorMode::Blockwise => {
                let shape = self
                    .x
                    .block_shape()
                    .ok_or_else(|| Error::Config("blockwise error mode requires a block shape".into()))?;
                Ok(blockwise_l21_prox(&c, shape, tau))
            }
        }
    }

    /// Runs one full iteration in place and returns its residuals.
    pub fn step(&self, st: &mut SolverState) -> Result<IterRecord> {
        let z = self.update_z(st);
        let q = self.update_q(st, &z);
        let v = degree_vector(&q);
        let f = self.update_f(&q, &v)?;
        let e = self.update_e(st, &z)?;

        let x = self.x.data();
        let primal1 = x - x * &z - &e;
        let primal2 = &z - &q;
        let mu = st.mu;
        st.gamma1 += &primal1 * mu;
        st.gamma2 += &primal2 * mu;
        st.mu = (self.cfg.rho * mu).min(self.cfg.mu_max);

        st.theta = theta_from_segmentation(&f);
        st.z = z;
        st.q = q;
        st.v = v;
        st.e = e;
        st.f = Some(f);
        let rec = IterRecord { t: st.t, r1: prox::max_abs(&primal1), r2: prox::max_abs(&primal2), mu };
        st.t += 1;
        if !(rec.r1.is_finite() && rec.r2.is_finite()) {
            return Err(Error::Numerical(format!("non-finite residual at iteration {}", rec.t)));
        }
        st.history.push(rec);
        Ok(rec)
    }

    pub fn is_converged(&self, rec: &IterRecord) -> bool {
        rec.r1 <= self.cfg.epsilon && rec.r2 <= self.cfg.epsilon
    }

    pub fn solve(&self) -> Result<SolveOutput> {
        self.solve_with(|_| {})
    }

    /// Solves while passing every iteration's residuals to `observer`.
    pub fn solve_with<O: FnMut(&IterRecord)>(&self, mut observer: O) -> Result<SolveOutput> {
        let mut st = self.initial_state();
        let mut converged = false;
        while st.t < self.cfg.max_iters {
            let rec = self.step(&mut st)?;
            log::trace!("{rec}");
            observer(&rec);
            if self.is_converged(&rec) {
                converged = true;
                break;
            }
        }
        if !converged {
            log::warn!("solver stopped after {} iterations without converging", st.t);
        }
        Ok(SolveOutput { iterations: st.t, z: st.z, q: st.q, e: st.e, f: st.f, history: st.history, converged })
    }
}

/// Group shrink where each group is one bin across all blocks of a sample.
pub fn blockwise_l21_prox(c: &DenseMatrix, shape: BlockShape, tau: f64) -> DenseMatrix {
    let mut out = c.clone();
    for mut col in out.column_iter_mut() {
        for bin in 0..shape.bins {
            let norm = (0..shape.blocks).map(|b| col[b * shape.bins + bin].powi(2)).sum::<f64>().sqrt();
            let s = prox::group_shrink_factor(norm, tau);
            for b in 0..shape.blocks {
                col[b * shape.bins + bin] *= s;
            }
        }
    }
    out
}

/// Runs the solver with default observers.
pub fn cslrr_solve(x: &FeatureMatrix, cfg: &SolverConfig) -> Result<SolveOutput> {
    CsLrr::new(x, cfg.clone())?.solve()
}

/// Zeroes entries below `thresh` times the largest magnitude.
pub fn threshold_coefficients(z: &DenseMatrix, thresh: f64) -> DenseMatrix {
    let cut = thresh * prox::max_abs(z);
    z.map(|v| if v.abs() < cut { 0.0 } else { v })
}

/// `W = (|Z| + |Z^T|) / 2`.
pub fn build_affinity(z: &DenseMatrix) -> Result<AffinityMatrix> {
    if !z.is_square() {
        return Err(Error::Dimension(format!("affinity from a {:?} coefficient matrix", z.shape())));
    }
    let n = z.nrows();
    let w = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (z[(i, j)].abs() + z[(j, i)].abs()));
    AffinityMatrix::new(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthogonal_pair() -> FeatureMatrix {
        FeatureMatrix::new(DenseMatrix::identity(2, 2)).unwrap()
    }

    #[test]
    fn weight_matrix_closed_form() {
        let b = build_weight_matrix(&orthogonal_pair()).unwrap();
        let want = 1.0 - (-1.0f64).exp();
        assert!((b[(0, 1)] - want).abs() < 1e-12);
        assert!((b[(0, 1)] - 0.63212).abs() < 1e-5);
        assert_eq!(b[(0, 0)], 0.0);
        assert_eq!(b[(1, 0)], b[(0, 1)]);
    }

    #[test]
    fn weight_matrix_antiparallel_pair_is_zero() {
        let s = 0.5f64.sqrt();
        let x = DenseMatrix::from_column_slice(2, 3, &[1.0, 0.0, -1.0, 0.0, s, s]);
        let b = build_weight_matrix(&FeatureMatrix::new(x).unwrap()).unwrap();
        assert_eq!(b[(0, 1)], 0.0);
        assert!(b[(0, 2)] > 0.0);
    }

    #[test]
    fn weight_matrix_degenerate() {
        let x = DenseMatrix::from_column_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let err = build_weight_matrix(&FeatureMatrix::new(x).unwrap()).unwrap_err();
        assert!(matches!(err, Error::DegenerateData(_)));
    }

    #[test]
    fn feature_matrix_checks() {
        assert!(FeatureMatrix::new(DenseMatrix::from_element(2, 2, 1.0)).is_err());
        assert!(FeatureMatrix::normalized(DenseMatrix::zeros(2, 2)).is_err());
        let x = FeatureMatrix::normalized(DenseMatrix::from_element(4, 2, 3.0)).unwrap();
        assert!(x.clone().with_block_shape(BlockShape { blocks: 3, bins: 2 }).is_err());
        assert!(x.with_block_shape(BlockShape { blocks: 2, bins: 2 }).is_ok());
    }

    #[test]
    fn z_step_zero_gradient() {
        let x = orthogonal_pair();
        let solver = CsLrr::new(&x, SolverConfig::lrr(1.0, 1)).unwrap();
        let mut st = solver.initial_state();
        st.e = x.data().clone();
        assert_eq!(solver.update_z(&st), DenseMatrix::zeros(2, 2));
    }

    #[test]
    fn q_step_cases() {
        let x = FeatureMatrix::normalized(DenseMatrix::from_row_slice(2, 3, &[1.0, 0.2, 0.0, 0.0, 1.0, 1.0])).unwrap();
        let mut st = SolverState::zeros(2, 3, 0.5);
        st.gamma2 = DenseMatrix::from_element(3, 3, 0.05);
        let z = DenseMatrix::from_fn(3, 3, |i, j| 0.1 * (i as f64) - 0.07 * (j as f64));
        let shifted = &z + &st.gamma2 / st.mu;

        let plain = CsLrr::new(&x, SolverConfig::lrr(1.0, 1)).unwrap();
        assert_eq!(plain.update_q(&st, &z), shifted);

        let mut cfg = SolverConfig::sc_lrr(1.0, 1.0, 1);
        cfg.beta = 1.0;
        let weighted = CsLrr::new(&x, cfg).unwrap();
        st.theta = DenseMatrix::from_element(3, 3, 10.0);
        // every threshold (b + 10)/0.5 exceeds every entry of the shifted matrix
        assert_eq!(weighted.update_q(&st, &z), DenseMatrix::zeros(3, 3));
    }

    #[test]
    fn e_step_cases() {
        let x = orthogonal_pair();
        let mut cfg = SolverConfig::lrr(1.0, 1);
        let solver = CsLrr::new(&x, cfg.clone()).unwrap();
        let mut st = solver.initial_state();
        // Z = I, G1 = 0 gives C = 0
        assert_eq!(solver.update_e(&st, &DenseMatrix::identity(2, 2)).unwrap(), DenseMatrix::zeros(2, 2));
        // lambda/mu = 10 exceeds every column norm of C = X
        assert_eq!(solver.update_e(&st, &DenseMatrix::zeros(2, 2)).unwrap(), DenseMatrix::zeros(2, 2));
        cfg.lambda = 1e-300;
        let loose = CsLrr::new(&x, cfg).unwrap();
        st.gamma1 = DenseMatrix::from_element(2, 2, 0.3);
        let c = x.data() + &st.gamma1 / st.mu;
        assert_eq!(loose.update_e(&st, &DenseMatrix::zeros(2, 2)).unwrap(), c);
    }

    #[test]
    fn blockwise_needs_shape() {
        let x = orthogonal_pair();
        let cfg = SolverConfig { error_mode: ErrorMode::Blockwise, ..SolverConfig::lrr(1.0, 1) };
        assert!(matches!(CsLrr::new(&x, cfg), Err(Error::Config(_))));
    }

    #[test]
    fn blockwise_groups_are_bins() {
        // 2 blocks x 2 bins; bin 0 entries (0, 2), bin 1 entries (1, 3)
        let c = DenseMatrix::from_column_slice(4, 1, &[3.0, 0.1, 4.0, 0.1]);
        let out = blockwise_l21_prox(&c, BlockShape { blocks: 2, bins: 2 }, 2.5);
        assert!((out[(0, 0)] - 1.5).abs() < 1e-15);
        assert!((out[(2, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(out[(1, 0)], 0.0);
        assert_eq!(out[(3, 0)], 0.0);
    }

    #[test]
    fn identity_data_converges_to_identity() {
        let x = orthogonal_pair();
        let cfg = SolverConfig { lambda: 100.0, ..SolverConfig::lrr(100.0, 1) };
        let out = cslrr_solve(&x, &cfg).unwrap();
        assert!(out.converged, "stopped after {} iterations", out.iterations);
        assert!((out.z - DenseMatrix::identity(2, 2)).abs().max() < 1e-4);
    }

    #[test]
    fn thresholding() {
        let z = DenseMatrix::from_row_slice(2, 2, &[1.0, -0.3, 0.04, -1.0]);
        assert_eq!(threshold_coefficients(&z, 0.0), z);
        let top = threshold_coefficients(&z, 1.0);
        assert_eq!(top, DenseMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        let eye = DenseMatrix::identity(3, 3);
        assert_eq!(threshold_coefficients(&eye, 0.5), eye);
    }

    #[test]
    fn affinity() {
        assert_eq!(build_affinity(&DenseMatrix::zeros(3, 3)).unwrap().matrix(), &DenseMatrix::zeros(3, 3));
        let z = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let w = build_affinity(&z).unwrap();
        assert_eq!(w.matrix()[(0, 1)], 1.0);
        assert_eq!(w.matrix(), &w.matrix().transpose());
        assert!(build_affinity(&DenseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn theta_properties() {
        let f = prox::sym_eig_smallest(&DenseMatrix::from_fn(5, 5, |i, j| ((i * 7 + j * 7) % 5) as f64), 2).unwrap();
        let th = theta_from_segmentation(&f);
        for i in 0..5 {
            assert_eq!(th[(i, i)], 0.0);
            for j in 0..5 {
                assert_eq!(th[(i, j)], th[(j, i)]);
                assert!(th[(i, j)] >= 0.0);
            }
        }
    }
}
