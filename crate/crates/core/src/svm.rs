//! Kernel SVM trained by SMO on a precomputed kernel, with one-vs-one and
//! one-vs-all multiclass wrappers and an open-set rule.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::prox::DenseMatrix;
use crate::sequence::{ClassId, OpenSetLabel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoOptions {
    /// Box constraint.
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// The solver stops after `max_passes * n * n` pair updates.
    pub max_passes: usize,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions { c: 10.0, tol: 1e-3, max_passes: 10 }
    }
}

impl SmoOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config("SVM C must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("SVM tolerance must be positive".into()));
        }
        if self.max_passes == 0 {
            return Err(Error::Config("SVM max_passes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Decision function `f(x) = sum_i coef_i K(x_i, x) + bias` over a subset of
/// a training set.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    /// Indices into the full training set.
    pub indices: Vec<usize>,
    /// `alpha_i * y_i` per entry of `indices`.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BinarySvm {
    /// `k_row[i]` is the kernel between the query and training sequence `i`
    /// of the full training set.
    pub fn decision(&self, k_row: &[f64]) -> f64 {
        self.indices.iter().zip(&self.coef).map(|(&i, &c)| c * k_row[i]).sum::<f64>() + self.bias
    }

    pub fn support_count(&self) -> usize {
        self.coef.iter().filter(|&&c| c != 0.0).count()
    }
}

/// Trains on the full kernel matrix `k` with labels `y` in {-1, +1}.
pub fn svm_train_binary(k: &DenseMatrix, y: &[f64], opts: &SmoOptions) -> Result<BinarySvm> {
    let idx: Vec<usize> = (0..y.len()).collect();
    train_subset(k, &idx, y, opts)
}

fn train_subset(k: &DenseMatrix, idx: &[usize], y: &[f64], opts: &SmoOptions) -> Result<BinarySvm> {
    opts.validate()?;
    let n = idx.len();
    if n != y.len() {
        return Err(Error::Dimension("labels and indices differ in length".into()));
    }
    if k.nrows() != k.ncols() || idx.iter().any(|&i| i >= k.nrows()) {
        return Err(Error::Dimension("kernel matrix does not cover the training indices".into()));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::Training("labels must be +1 or -1".into()));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::Training("binary SVM needs both classes".into()));
    }
    let kk = |a: usize, b: usize| k[(idx[a], idx[b])];
    if (0..n).any(|a| (0..n).any(|b| !kk(a, b).is_finite())) {
        return Err(Error::Numerical("kernel has non-finite entries".into()));
    }

    let c = opts.c;
    let mut alpha = vec![0.0; n];
    // gradient of 1/2 a'Qa - e'a
    let mut g = vec![-1.0; n];
    let in_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64| (y < 0.0 && a < c) || (y > 0.0 && a > 0.0);

    let max_iter = opts.max_passes.saturating_mul(n).saturating_mul(n).max(1);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // i: maximal violator; j: largest second-order objective decrease
        let mut i = None;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..n {
            let v = -y[t] * g[t];
            if in_up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = Some(t);
            }
        }
        let Some(i) = i else {
            converged = true;
            break;
        };
        let mut j = None;
        let mut gmin = f64::INFINITY;
        let mut best_gain = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * g[t];
            gmin = gmin.min(v);
            let b = gmax - v;
            if b > 0.0 {
                let a = kk(i, i) + kk(t, t) - 2.0 * kk(i, t);
                let gain = -(b * b) / if a > 1e-12 { a } else { 1e-12 };
                if gain < best_gain {
                    best_gain = gain;
                    j = Some(t);
                }
            }
        }
        let Some(j) = j else {
            converged = true;
            break;
        };
        if gmax - gmin < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;

        // move alpha_i by +y_i t and alpha_j by -y_j t
        let slope = y[i] * g[i] - y[j] * g[j];
        let curv = kk(i, i) + kk(j, j) - 2.0 * kk(i, j);
        let cap_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let cap_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        let t_max = cap_i.min(cap_j);
        // curv <= 0 (indefinite kernel): the objective along the line is
        // concave or linear with negative slope, so the far endpoint wins.
        let t = if curv > 1e-12 { (-slope / curv).min(t_max) } else { t_max };
        if !(t > 0.0) {
            break;
        }
        alpha[i] = (alpha[i] + y[i] * t).clamp(0.0, c);
        alpha[j] = (alpha[j] - y[j] * t).clamp(0.0, c);
        for s in 0..n {
            g[s] += y[s] * t * (kk(s, i) - kk(s, j));
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} updates without reaching tolerance {}", opts.tol);
    }

    // bias from free vectors, else the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * g[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg)
            } else {
                lb = lb.max(yg)
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 { sum / free as f64 } else { 0.5 * (ub + lb) };
    Ok(BinarySvm {
        indices: idx.to_vec(),
        coef: alpha.iter().zip(y).map(|(a, y)| a * y).collect(),
        bias: -rho,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MulticlassMode {
    #[default]
    OneVsOne,
    OneVsAll,
}

/// One binary model: `positive` vs `negative`, or vs the rest when `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    pub positive: ClassId,
    pub negative: Option<ClassId>,
    pub svm: BinarySvm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassSvm {
    pub mode: MulticlassMode,
    pub classes: Vec<ClassId>,
    pub models: Vec<PairModel>,
    pub n_train: usize,
}

impl MulticlassSvm {
    pub fn train(
        k: &DenseMatrix,
        labels: &[ClassId],
        mode: MulticlassMode,
        opts: &SmoOptions,
        exec: Execution,
    ) -> Result<Self> {
        let n = labels.len();
        if k.shape() != (n, n) {
            return Err(Error::Dimension("kernel matrix does not match the labels".into()));
        }
        let classes: Vec<ClassId> = {
            let mut c: Vec<ClassId> = labels.to_vec();
            c.sort_unstable();
            c.dedup();
            c
        };
        if classes.len() < 2 {
            return Err(Error::Training("need at least two classes".into()));
        }
        let jobs: Vec<(ClassId, Option<ClassId>)> = match mode {
            MulticlassMode::OneVsOne => classes
                .iter()
                .enumerate()
                .flat_map(|(a, &p)| classes[a + 1..].iter().map(move |&q| (p, Some(q))))
                .collect(),
            MulticlassMode::OneVsAll => classes.iter().map(|&p| (p, None)).collect(),
        };
        let trained = par::map_slice(exec, &jobs, |&(p, q)| {
            let idx: Vec<usize> = (0..n).filter(|&i| q.is_none() || labels[i] == p || Some(labels[i]) == q).collect();
            let y: Vec<f64> = idx.iter().map(|&i| if labels[i] == p { 1.0 } else { -1.0 }).collect();
            train_subset(k, &idx, &y, opts).map(|svm| PairModel { positive: p, negative: q, svm })
        });
        let models = trained.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(MulticlassSvm { mode, classes, models, n_train: n })
    }

    fn check_row(&self, k_row: &[f64]) -> Result<()> {
        if k_row.len() != self.n_train {
            return Err(Error::Dimension(format!("kernel row has {} entries, expected {}", k_row.len(), self.n_train)));
        }
        Ok(())
    }

    /// Per-class scores: vote counts (one-vs-one) or decision values (one-vs-all).
    pub fn scores(&self, k_row: &[f64]) -> Result<BTreeMap<ClassId, f64>> {
        self.check_row(k_row)?;
        let mut s: BTreeMap<ClassId, f64> = self.classes.iter().map(|&c| (c, 0.0)).collect();
        for m in &self.models {
            let f = m.svm.decision(k_row);
            match (self.mode, m.negative) {
                (MulticlassMode::OneVsOne, Some(q)) => {
                    let winner = if f > 0.0 { m.positive } else { q };
                    *s.get_mut(&winner).expect("known class") += 1.0;
                }
                _ => *s.get_mut(&m.positive).expect("known class") = f,
            }
        }
        Ok(s)
    }

    /// Highest-scoring class; ties go to the lowest class id.
    pub fn predict(&self, k_row: &[f64]) -> Result<ClassId> {
        let s = self.scores(k_row)?;
        let mut best = (self.classes[0], f64::NEG_INFINITY);
        for (&c, &v) in &s {
            if v > best.1 {
                best = (c, v);
            }
        }
        Ok(best.0)
    }

    /// Open-set rule on a one-vs-all model: the best class is accepted only
    /// when its decision value is positive.
    pub fn predict_open_set(&self, k_row: &[f64]) -> Result<OpenSetLabel> {
        if self.mode != MulticlassMode::OneVsAll {
            return Err(Error::Config("open-set SVM requires a one-vs-all model".into()));
        }
        let s = self.scores(k_row)?;
        let (c, v) =
            s.iter().fold((self.classes[0], f64::NEG_INFINITY), |b, (&c, &v)| if v > b.1 { (c, v) } else { b });
        Ok(if v > 0.0 { OpenSetLabel::Known(c) } else { OpenSetLabel::New })
    }
}

pub fn open_set_svm(model: &MulticlassSvm, k_row: &[f64]) -> Result<OpenSetLabel> {
    model.predict_open_set(k_row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rbf(points: &[f64], gamma: f64) -> DenseMatrix {
        let n = points.len();
        DenseMatrix::from_fn(n, n, |i, j| (-(points[i] - points[j]).powi(2) * gamma).exp())
    }

    #[test]
    fn separates_1d_points() {
        let x = [-3.0, -2.0, -1.5, 1.5, 2.0, 3.0];
        let y = [-1.0, -1.0, -1.0, 1.0, 1.0, 1.0];
        let k = rbf(&x, 0.5);
        let svm = svm_train_binary(&k, &y, &SmoOptions::default()).unwrap();
        assert!(svm.converged);
        for i in 0..6 {
            let row: Vec<f64> = k.row(i).iter().cloned().collect();
            assert_eq!(svm.decision(&row).signum(), y[i]);
        }
        // box and equality constraints
        let total: f64 = svm.coef.iter().sum();
        assert!(total.abs() < 1e-9);
        assert!(svm.coef.iter().all(|c| c.abs() <= 10.0 + 1e-12));
    }

    #[test]
    fn two_points_identity_kernel() {
        let k = DenseMatrix::identity(2, 2);
        let svm = svm_train_binary(&k, &[1.0, -1.0], &SmoOptions { c: 1e6, ..Default::default() }).unwrap();
        assert!(svm.decision(&[1.0, 0.0]) > 0.0);
        assert!(svm.decision(&[0.0, 1.0]) < 0.0);
    }

    #[test]
    fn block_kernel_fits_training_set() {
        let labels = [1.0, 1.0, 1.0, -1.0, -1.0];
        let k =
            DenseMatrix::from_fn(
                5,
                5,
                |i, j| if labels[i] == labels[j] { 1.0 - 0.1 * (i != j) as u8 as f64 } else { 0.05 },
            );
        let svm = svm_train_binary(&k, &labels, &SmoOptions::default()).unwrap();
        for i in 0..5 {
            let row: Vec<f64> = k.row(i).iter().cloned().collect();
            assert_eq!(svm.decision(&row).signum(), labels[i]);
        }
    }

    #[test]
    fn kkt_within_tolerance() {
        let x = [-2.0, -0.3, 0.1, 0.4, -0.1, 2.0, 1.0, -1.0];
        let y = [-1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0, -1.0];
        let k = rbf(&x, 1.0);
        let opts = SmoOptions { c: 1.0, ..Default::default() };
        let svm = svm_train_binary(&k, &y, &opts).unwrap();
        assert!(svm.converged);
        for i in 0..8 {
            let row: Vec<f64> = k.row(i).iter().cloned().collect();
            let margin = y[i] * svm.decision(&row);
            let a = svm.coef[i] * y[i];
            if a < 1e-12 {
                assert!(margin >= 1.0 - 2e-3, "{i}: {margin}");
            } else if a > opts.c - 1e-12 {
                assert!(margin <= 1.0 + 2e-3, "{i}: {margin}");
            } else {
                assert!((margin - 1.0).abs() <= 2e-3, "{i}: {margin}");
            }
        }
    }

    #[test]
    fn indefinite_kernel_terminates() {
        let k = DenseMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 1.0, 0.5, 0.0, 0.5, 1.0]);
        let svm = svm_train_binary(&k, &[1.0, -1.0, 1.0], &SmoOptions::default()).unwrap();
        assert!(svm.coef.iter().all(|c| c.is_finite()) && svm.bias.is_finite());
    }

    #[test]
    fn rejects_bad_input() {
        let k = DenseMatrix::identity(2, 2);
        assert!(matches!(svm_train_binary(&k, &[1.0, 1.0], &SmoOptions::default()), Err(Error::Training(_))));
        assert!(svm_train_binary(&k, &[1.0, 0.0], &SmoOptions::default()).is_err());
        assert!(svm_train_binary(&k, &[1.0, -1.0], &SmoOptions { c: 0.0, ..Default::default() }).is_err());
    }

    fn three_class() -> (DenseMatrix, Vec<ClassId>) {
        let x = [0.0, 0.2, -0.2, 5.0, 5.2, 4.8, 10.0, 10.1, 9.9];
        (rbf(&x, 0.5), vec![4, 4, 4, 7, 7, 7, 9, 9, 9])
    }

    #[test]
    fn multiclass_modes_agree_on_clear_data() {
        let (k, labels) = three_class();
        for mode in [MulticlassMode::OneVsOne, MulticlassMode::OneVsAll] {
            let m = MulticlassSvm::train(&k, &labels, mode, &SmoOptions::default(), Execution::Sequential).unwrap();
            for i in 0..9 {
                let row: Vec<f64> = k.row(i).iter().cloned().collect();
                assert_eq!(m.predict(&row).unwrap(), labels[i]);
            }
        }
    }

    #[test]
    fn open_set_flags_far_queries() {
        let (k, labels) = three_class();
        let m =
            MulticlassSvm::train(&k, &labels, MulticlassMode::OneVsAll, &SmoOptions::default(), Execution::Sequential)
                .unwrap();
        let row: Vec<f64> = k.row(3).iter().cloned().collect();
        assert_eq!(m.predict_open_set(&row).unwrap(), OpenSetLabel::Known(7));
        assert_eq!(m.predict_open_set(&[0.0; 9]).unwrap(), OpenSetLabel::New);
        let ovo =
            MulticlassSvm::train(&k, &labels, MulticlassMode::OneVsOne, &SmoOptions::default(), Execution::Sequential)
                .unwrap();
        assert!(ovo.predict_open_set(&row).is_err());
    }

    #[test]
    fn parallel_matches_sequential() {
        let (k, labels) = three_class();
        let a =
            MulticlassSvm::train(&k, &labels, MulticlassMode::OneVsOne, &SmoOptions::default(), Execution::Sequential)
                .unwrap();
        let b =
            MulticlassSvm::train(&k, &labels, MulticlassMode::OneVsOne, &SmoOptions::default(), Execution::Parallel)
                .unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn duplicating_training_set_keeps_predictions(
            neg in prop::collection::vec(-4.0f64..-1.0, 2..5),
            pos in prop::collection::vec(1.0f64..4.0, 2..5),
            q in -5.0f64..5.0,
        ) {
            let x: Vec<f64> = neg.iter().chain(&pos).cloned().collect();
            let y: Vec<f64> = neg.iter().map(|_| -1.0).chain(pos.iter().map(|_| 1.0)).collect();
            let opts = SmoOptions { c: 1e6, tol: 1e-12, max_passes: 50 };
            let kern = |a: f64, b: f64| (-(a - b).powi(2) / 4.0).exp();
            let k = rbf(&x, 0.25);
            let svm = svm_train_binary(&k, &y, &opts).unwrap();
            let row: Vec<f64> = x.iter().map(|&p| kern(q, p)).collect();
            let xx: Vec<f64> = x.iter().chain(&x).cloned().collect();
            let yy: Vec<f64> = y.iter().chain(&y).cloned().collect();
            let k2 = rbf(&xx, 0.25);
            let svm2 = svm_train_binary(&k2, &yy, &opts).unwrap();
            let row2: Vec<f64> = xx.iter().map(|&p| kern(q, p)).collect();
            let (f1, f2) = (svm.decision(&row), svm2.decision(&row2));
            prop_assert!((f1 - f2).abs() <= 1e-6, "{} vs {}", f1, f2);
        }
    }
}
