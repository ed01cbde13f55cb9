//! Typed views of the flat configuration.

use uos_core::config::KeyValues;
use uos_core::hierarchy::HierarchyConfig;
use uos_core::par::Execution;
use uos_core::solver::{ErrorMode, SolverConfig};
use uos_core::svm::{MulticlassMode, SmoOptions};
use uos_core::synth::{Geometry, SequenceSynthConfig, SynthConfig};
use uos_core::{Error, Result};

use crate::Common;

pub const SOLVER_KEYS: &[&str] = &[
    "alpha",
    "beta",
    "lambda",
    "l_max",
    "rho",
    "mu0",
    "mu_max",
    "epsilon",
    "eta_factor",
    "max_iters",
    "error_mode",
    "coef_threshold",
];
pub const HIERARCHY_KEYS: &[&str] = &["levels", "gamma", "rho_split", "d_min"];
pub const SYNTH_KEYS: &[&str] = &[
    "kind",
    "format",
    "m",
    "subspaces",
    "dim",
    "points_per_subspace",
    "noise",
    "geometry",
    "leaves",
    "leaf_dim",
    "classes",
    "template_len",
    "disjoint_templates",
    "stay_prob",
    "min_len",
    "max_len",
    "train_per_class",
    "test_per_class",
    "jitter",
];
pub const CLASSIFY_KEYS: &[&str] = &[
    "classifier",
    "mode",
    "k",
    "open_set",
    "varsigma",
    "nu",
    "svm_c",
    "svm_tol",
    "svm_max_passes",
    "max_frames",
    "holdout",
];

/// Reads `--config`, applies `--set` and `--seed`, and rejects keys outside `allowed`.
pub fn load(common: &Common, allowed: &[&[&str]]) -> Result<KeyValues> {
    let mut kv = match &common.config {
        Some(p) => KeyValues::from_file(p)?,
        None => KeyValues::parse("", "command line")?,
    };
    for s in &common.set {
        let (k, v) = s.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{s}'")))?;
        kv.set(k.trim(), v.trim());
    }
    if let Some(seed) = common.seed {
        kv.set("seed", seed);
    }
    let mut keys: Vec<&str> = allowed.iter().flat_map(|a| a.iter().copied()).collect();
    keys.push("seed");
    kv.check_known(&keys)?;
    Ok(kv)
}

pub fn seed(kv: &KeyValues) -> Result<u64> {
    kv.get_or("seed", 0)
}

pub fn exec(common: &Common) -> Execution {
    if common.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

pub fn solver(kv: &KeyValues, default_l_max: usize) -> Result<SolverConfig> {
    let d = SolverConfig::default();
    let error_mode = match kv.raw("error_mode") {
        None | Some("columnwise") => ErrorMode::Columnwise,
        Some("blockwise") => ErrorMode::Blockwise,
        Some(other) => return Err(Error::Config(format!("unknown error_mode '{other}'"))),
    };
    let cfg = SolverConfig {
        alpha: kv.get_or("alpha", d.alpha)?,
        beta: kv.get_or("beta", d.beta)?,
        lambda: kv.get_or("lambda", d.lambda)?,
        l_max: kv.get_or("l_max", default_l_max)?,
        rho: kv.get_or("rho", d.rho)?,
        mu0: kv.get_or("mu0", d.mu0)?,
        mu_max: kv.get_or("mu_max", d.mu_max)?,
        epsilon: kv.get_or("epsilon", d.epsilon)?,
        eta_factor: kv.get_or("eta_factor", d.eta_factor)?,
        max_iters: kv.get_or("max_iters", d.max_iters)?,
        error_mode,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn coef_threshold(kv: &KeyValues) -> Result<f64> {
    kv.get_or("coef_threshold", HierarchyConfig::default().coef_threshold)
}

pub fn hierarchy(kv: &KeyValues, exec: Execution) -> Result<HierarchyConfig> {
    let d = HierarchyConfig::default();
    let cfg = HierarchyConfig {
        levels: kv.get_or("levels", d.levels)?,
        gamma: kv.get_or("gamma", d.gamma)?,
        rho_split: kv.get_or("rho_split", d.rho_split)?,
        d_min: kv.get_or("d_min", d.d_min)?,
        coef_threshold: coef_threshold(kv)?,
        exec,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn geometry(kv: &KeyValues) -> Result<Geometry> {
    kv.raw("geometry").map_or(Ok(Geometry::Independent), str::parse)
}

pub fn synth_uos(kv: &KeyValues) -> Result<SynthConfig> {
    let cfg = SynthConfig {
        m: kv.require("m")?,
        subspaces: kv.require("subspaces")?,
        dim: kv.require("dim")?,
        points_per_subspace: kv.require("points_per_subspace")?,
        noise: kv.get_or("noise", 0.0)?,
        geometry: geometry(kv)?,
        seed: seed(kv)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn synth_sequences(kv: &KeyValues) -> Result<SequenceSynthConfig> {
    let d = SequenceSynthConfig::default();
    let cfg = SequenceSynthConfig {
        m: kv.require("m")?,
        leaves: kv.get_or("leaves", d.leaves)?,
        leaf_dim: kv.get_or("leaf_dim", d.leaf_dim)?,
        geometry: geometry(kv)?,
        classes: kv.require("classes")?,
        template_len: kv.get_or("template_len", d.template_len)?,
        disjoint_templates: kv.get_or("disjoint_templates", d.disjoint_templates)?,
        stay_prob: kv.get_or("stay_prob", d.stay_prob)?,
        min_len: kv.get_or("min_len", d.min_len)?,
        max_len: kv.get_or("max_len", d.max_len)?,
        train_per_class: kv.get_or("train_per_class", d.train_per_class)?,
        test_per_class: kv.get_or("test_per_class", d.test_per_class)?,
        jitter: kv.get_or("jitter", d.jitter)?,
        seed: seed(kv)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Knn,
    Svm,
}

#[derive(Debug, Clone)]
pub struct ClassifyParams {
    pub kind: ClassifierKind,
    pub mode: MulticlassMode,
    pub k: usize,
    pub open_set: bool,
    pub varsigma: Option<f64>,
    pub nu: Option<f64>,
    pub smo: SmoOptions,
    pub max_frames: Option<usize>,
    pub holdout: Vec<usize>,
}

pub fn classify(kv: &KeyValues) -> Result<ClassifyParams> {
    let kind = match kv.raw("classifier").unwrap_or("knn") {
        "knn" => ClassifierKind::Knn,
        "svm" => ClassifierKind::Svm,
        other => return Err(Error::Config(format!("unknown classifier '{other}'"))),
    };
    let open_set: bool = kv.get_or("open_set", false)?;
    let mode = match kv.raw("mode") {
        None if open_set => MulticlassMode::OneVsAll,
        None | Some("ovo") => MulticlassMode::OneVsOne,
        Some("ova") => MulticlassMode::OneVsAll,
        Some(other) => return Err(Error::Config(format!("unknown mode '{other}' (use ovo or ova)"))),
    };
    if open_set && kind == ClassifierKind::Svm && mode != MulticlassMode::OneVsAll {
        return Err(Error::Config("open-set SVM needs mode = ova".into()));
    }
    let varsigma = kv.get::<f64>("varsigma")?;
    if open_set && kind == ClassifierKind::Knn && varsigma.is_none() {
        return Err(Error::Config("missing required key 'varsigma' for open-set k-NN".into()));
    }
    let d = SmoOptions::default();
    let smo = SmoOptions {
        c: kv.get_or("svm_c", d.c)?,
        tol: kv.get_or("svm_tol", d.tol)?,
        max_passes: kv.get_or("svm_max_passes", d.max_passes)?,
    };
    smo.validate()?;
    let holdout = match kv.raw("holdout") {
        None | Some("") => Vec::new(),
        Some(s) => s
            .split(',')
            .map(|t| t.trim().parse().map_err(|_| Error::Config(format!("bad holdout class '{t}'"))))
            .collect::<Result<_>>()?,
    };
    let max_frames = match kv.get::<usize>("max_frames")? {
        Some(0) => None,
        Some(n) => Some(n),
        None => Some(240),
    };
    Ok(ClassifyParams {
        kind,
        mode,
        k: kv.get_or("k", 3)?,
        open_set,
        varsigma,
        nu: kv.get("nu")?,
        smo,
        max_frames,
        holdout,
    })
}
