//! Synthetic union-of-subspaces data and subspace-sequence datasets.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::prox::DenseMatrix;
use crate::sequence::{ClassId, SequenceSample};
use crate::solver::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Geometry {
    /// Mutually orthogonal coordinate blocks under one random rotation.
    #[default]
    Independent,
    /// Each subspace drawn independently at random.
    Disjoint,
}

impl std::str::FromStr for Geometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent" => Ok(Geometry::Independent),
            "disjoint" => Ok(Geometry::Disjoint),
            _ => Err(Error::Config(format!("unknown geometry '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub m: usize,
    pub subspaces: usize,
    pub dim: usize,
    pub points_per_subspace: usize,
    /// Ratio of the noise norm to the (unit) signal norm, in expectation.
    pub noise: f64,
    pub geometry: Geometry,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.subspaces == 0 || self.dim == 0 || self.points_per_subspace == 0 {
            return Err(Error::Config("synthetic sizes must be positive".into()));
        }
        if self.dim > self.m {
            return Err(Error::Config(format!("dim {} exceeds ambient dimension {}", self.dim, self.m)));
        }
        if self.geometry == Geometry::Independent && self.subspaces * self.dim > self.m {
            return Err(Error::Config(format!(
                "{} independent {}-dimensional subspaces do not fit in dimension {}",
                self.subspaces, self.dim, self.m
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Synthetic data with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUos {
    pub x: FeatureMatrix,
    pub labels: Vec<usize>,
    pub bases: Vec<DenseMatrix>,
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
    DenseMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// `r x c` matrix with orthonormal columns, Haar-distributed.
pub fn random_orthonormal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DenseMatrix {
    let qr = gaussian_matrix(rng, r, c).qr();
    let mut q = qr.q();
    let rd = qr.r();
    for j in 0..c {
        if rd[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn random_bases(rng: &mut ChaCha8Rng, m: usize, count: usize, dim: usize, geometry: Geometry) -> Vec<DenseMatrix> {
    match geometry {
        Geometry::Independent => {
            let q = random_orthonormal(rng, m, count * dim);
            (0..count).map(|l| q.columns(l * dim, dim).into_owned()).collect()
        }
        Geometry::Disjoint => (0..count).map(|_| random_orthonormal(rng, m, dim)).collect(),
    }
}

/// A unit vector of `span(basis)` perturbed by noise of relative size `noise`.
fn sample_point(rng: &mut ChaCha8Rng, basis: &DenseMatrix, noise: f64) -> DVector<f64> {
    let c = DVector::from_fn(basis.ncols(), |_, _| rng.sample(StandardNormal));
    let mut x = basis * c;
    x.normalize_mut();
    if noise > 0.0 {
        let m = x.len();
        let g = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        x += g * (noise / (m as f64).sqrt());
    }
    x.normalize_mut();
    x
}

/// Points grouped by subspace, in label order.
pub fn generate_synthetic_uos(cfg: &SynthConfig) -> Result<SyntheticUos> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bases = random_bases(&mut rng, cfg.m, cfg.subspaces, cfg.dim, cfg.geometry);
    let n = cfg.subspaces * cfg.points_per_subspace;
    let mut data = DenseMatrix::zeros(cfg.m, n);
    let mut labels = Vec::with_capacity(n);
    for (l, basis) in bases.iter().enumerate() {
        for p in 0..cfg.points_per_subspace {
            data.set_column(l * cfg.points_per_subspace + p, &sample_point(&mut rng, basis, cfg.noise));
            labels.push(l);
        }
    }
    Ok(SyntheticUos { x: FeatureMatrix::new(data)?, labels, bases })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSynthConfig {
    pub m: usize,
    /// Number of leaf subspaces frames are drawn from.
    pub leaves: usize,
    pub leaf_dim: usize,
    pub geometry: Geometry,
    pub classes: usize,
    /// Leaf visits per template cycle.
    pub template_len: usize,
    /// Give every class its own leaves.
    pub disjoint_templates: bool,
    /// Probability of staying in the current leaf at each frame.
    pub stay_prob: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Relative frame noise.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SequenceSynthConfig {
    fn default() -> Self {
        SequenceSynthConfig {
            m: 30,
            leaves: 8,
            leaf_dim: 3,
            geometry: Geometry::Independent,
            classes: 4,
            template_len: 4,
            disjoint_templates: false,
            stay_prob: 0.6,
            min_len: 16,
            max_len: 28,
            train_per_class: 20,
            test_per_class: 10,
            jitter: 0.1,
            seed: 0,
        }
    }
}

impl SequenceSynthConfig {
    pub fn validate(&self) -> Result<()> {
        SynthConfig {
            m: self.m,
            subspaces: self.leaves,
            dim: self.leaf_dim,
            points_per_subspace: 1,
            noise: self.jitter,
            geometry: self.geometry,
            seed: self.seed,
        }
        .validate()?;
        if self.classes == 0 || self.template_len == 0 {
            return Err(Error::Config("classes and template_len must be positive".into()));
        }
        if self.disjoint_templates && self.leaves < self.classes * self.template_len.min(2) {
            return Err(Error::Config("not enough leaves for disjoint templates".into()));
        }
        if self.leaves < 2 && self.template_len > 1 {
            return Err(Error::Config("templates longer than 1 need at least two leaves".into()));
        }
        if !(0.0..1.0).contains(&self.stay_prob) {
            return Err(Error::Config("stay_prob must lie in [0, 1)".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::Config("need 1 <= min_len <= max_len".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequences {
    pub leaf_bases: Vec<DenseMatrix>,
    /// Per class, the cyclic leaf template.
    pub templates: Vec<Vec<usize>>,
    pub train: Vec<SequenceSample>,
    pub test: Vec<SequenceSample>,
}

fn make_templates(rng: &mut ChaCha8Rng, cfg: &SequenceSynthConfig) -> Vec<Vec<usize>> {
    let mut templates: Vec<Vec<usize>> = Vec::with_capacity(cfg.classes);
    for c in 0..cfg.classes {
        let pool: Vec<usize> = if cfg.disjoint_templates {
            let per = cfg.leaves / cfg.classes;
            (c * per..(c + 1) * per).collect()
        } else {
            (0..cfg.leaves).collect()
        };
        // redraw until distinct from earlier templates, within reason
        let mut t = Vec::new();
        for _ in 0..100 {
            t.clear();
            for _ in 0..cfg.template_len {
                let mut l = pool[rng.random_range(0..pool.len())];
                while pool.len() > 1 && t.last() == Some(&l) {
                    l = pool[rng.random_range(0..pool.len())];
                }
                t.push(l);
            }
            if !templates.contains(&t) {
                break;
            }
        }
        templates.push(t.clone());
    }
    templates
}

fn make_sequence(
    rng: &mut ChaCha8Rng,
    cfg: &SequenceSynthConfig,
    template: &[usize],
    bases: &[DenseMatrix],
    label: ClassId,
) -> Result<SequenceSample> {
    let len = rng.random_range(cfg.min_len..=cfg.max_len);
    let mut frames = DenseMatrix::zeros(cfg.m, len);
    let mut state = 0;
    for t in 0..len {
        if t > 0 && rng.random::<f64>() >= cfg.stay_prob {
            state = (state + 1) % template.len();
        }
        frames.set_column(t, &sample_point(rng, &bases[template[state]], cfg.jitter));
    }
    SequenceSample::new(frames, Some(label))
}

/// Training and test sequences, grouped by class.
pub fn generate_synthetic_sequences(cfg: &SequenceSynthConfig) -> Result<SyntheticSequences> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let leaf_bases = random_bases(&mut rng, cfg.m, cfg.leaves, cfg.leaf_dim, cfg.geometry);
    let templates = make_templates(&mut rng, cfg);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, tpl) in templates.iter().enumerate() {
        for _ in 0..cfg.train_per_class {
            train.push(make_sequence(&mut rng, cfg, tpl, &leaf_bases, c)?);
        }
        for _ in 0..cfg.test_per_class {
            test.push(make_sequence(&mut rng, cfg, tpl, &leaf_bases, c)?);
        }
    }
    Ok(SyntheticSequences { leaf_bases, templates, train, test })
}
