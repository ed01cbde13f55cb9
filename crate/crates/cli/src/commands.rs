//! Subcommand implementations. Each prints exactly one JSON object on stdout.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};
use uos_core::bundle::{Classifier, ModelBundle};
use uos_core::hierarchy::{self, HierarchyTree};
use uos_core::io::{self, DatasetManifest, FileFormat};
use uos_core::metrics;
use uos_core::pipeline;
use uos_core::sequence::{self, ClassId, OpenSetKnn, OpenSetLabel, SequenceSample};
use uos_core::solver::{self, CsLrr, IterRecord};
use uos_core::spectral;
use uos_core::svm::MulticlassSvm;
use uos_core::synth;
use uos_core::{Error, Result};

use crate::params::{self, ClassifierKind, CLASSIFY_KEYS, HIERARCHY_KEYS, SOLVER_KEYS, SYNTH_KEYS};
use crate::{Common, Method};

fn emit(v: &Value) {
    println!("{v}");
}

fn tracer(enabled: bool) -> impl FnMut(&IterRecord) {
    move |r: &IterRecord| {
        if enabled {
            eprintln!("iter={} r1={:e} r2={:e} mu={:e}", r.t, r.r1, r.r2, r.mu);
        }
    }
}

pub fn synth(common: &Common, out: &Path) -> Result<()> {
    let kv = params::load(common, &[SYNTH_KEYS])?;
    let format = kv.raw("format").map_or(Ok(FileFormat::Binary), FileFormat::parse)?;
    std::fs::create_dir_all(out)?;
    match kv.raw("kind").unwrap_or("uos") {
        "uos" => {
            let cfg = params::synth_uos(&kv)?;
            let data = synth::generate_synthetic_uos(&cfg)?;
            let features = out.join(match format {
                FileFormat::Csv => "features.csv",
                FileFormat::Binary => "features.bin",
            });
            io::write_matrix(&features, data.x.data(), format)?;
            let labels = out.join("labels.txt");
            io::write_labels(&labels, &data.labels)?;
            let mut manifest = DatasetManifest::new(features, format);
            manifest.labels = Some(labels);
            manifest.write(&out.join("manifest.txt"))?;
            emit(&json!({
                "command": "synth",
                "kind": "uos",
                "dim": cfg.m,
                "samples": data.x.len(),
                "subspaces": cfg.subspaces,
            }));
        }
        "sequences" => {
            let cfg = params::synth_sequences(&kv)?;
            let data = synth::generate_synthetic_sequences(&cfg)?;
            io::write_sequences(&out.join("train"), &data.train, format)?;
            io::write_sequences(&out.join("test"), &data.test, format)?;
            emit(&json!({
                "command": "synth",
                "kind": "sequences",
                "dim": cfg.m,
                "classes": cfg.classes,
                "train_sequences": data.train.len(),
                "test_sequences": data.test.len(),
            }));
        }
        other => return Err(Error::Config(format!("unknown kind '{other}' (use uos or sequences)"))),
    }
    Ok(())
}

pub struct ClusterOverrides {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub clusters: Option<usize>,
}

/// Fixes the regularizers a reduced method turns off; an explicit nonzero
/// value for one of them is a configuration error.
fn pin_zero(kv: &mut uos_core::config::KeyValues, key: &str, method: &str) -> Result<()> {
    if kv.get::<f64>(key)?.is_some_and(|v| v != 0.0) {
        return Err(Error::Config(format!("method {method} requires {key} = 0")));
    }
    kv.set(key, 0);
    Ok(())
}

pub fn cluster(
    common: &Common,
    data: &Path,
    method: Method,
    ov: ClusterOverrides,
    out: Option<&Path>,
    emit_csv: Option<&Path>,
) -> Result<()> {
    let mut kv = params::load(common, &[SOLVER_KEYS, &["clusters"]])?;
    for (key, v) in [("alpha", ov.alpha), ("beta", ov.beta), ("lambda", ov.lambda)] {
        if let Some(v) = v {
            kv.set(key, v);
        }
    }
    if let Some(k) = ov.clusters {
        kv.set("clusters", k);
    }
    let name = match method {
        Method::Lrr => {
            pin_zero(&mut kv, "alpha", "lrr")?;
            pin_zero(&mut kv, "beta", "lrr")?;
            "lrr"
        }
        Method::Sclrr => {
            pin_zero(&mut kv, "beta", "sclrr")?;
            "sclrr"
        }
        Method::Cslrr => "cslrr",
    };
    let clusters: usize = kv.require("clusters")?;
    let seed = params::seed(&kv)?;
    let manifest = DatasetManifest::from_file(data)?;
    let x = io::load_feature_matrix(&manifest)?;
    let truth = manifest.read_labels()?;
    if truth.as_ref().is_some_and(|t| t.len() != x.len()) {
        return Err(Error::Dimension(format!("{} labels for {} samples", truth.unwrap().len(), x.len())));
    }
    let scfg = params::solver(&kv, clusters)?;
    let thresh = params::coef_threshold(&kv)?;

    let out_solve = CsLrr::new(&x, scfg)?.solve_with(tracer(common.trace))?;
    let w = solver::build_affinity(&solver::threshold_coefficients(&out_solve.z, thresh))?;
    let labels = spectral::spectral_cluster(&w, clusters, seed)?.labels;

    if let Some(p) = out {
        io::write_labels(p, &labels)?;
    }
    if let Some(p) = emit_csv {
        let mut s = String::from("iteration,r1,r2,mu\n");
        for r in &out_solve.history {
            let _ = writeln!(s, "{},{:e},{:e},{:e}", r.t, r.r1, r.r2, r.mu);
        }
        std::fs::write(p, s)?;
    }
    let last = out_solve.history.last();
    let mut report = json!({
        "command": "cluster",
        "method": name,
        "samples": x.len(),
        "clusters": clusters,
        "converged": out_solve.converged,
        "iterations": out_solve.iterations,
        "r1": last.map(|r| r.r1),
        "r2": last.map(|r| r.r2),
        "labels": labels,
    });
    if let Some(t) = truth {
        report["accuracy"] = json!(metrics::clustering_accuracy(&labels, &t)?);
    }
    emit(&report);
    Ok(())
}

pub fn hierarchy(
    common: &Common,
    data: &Path,
    levels: Option<usize>,
    out: Option<&Path>,
    summary: Option<&Path>,
    labels_out: Option<&Path>,
) -> Result<()> {
    let mut kv = params::load(common, &[SOLVER_KEYS, HIERARCHY_KEYS])?;
    if let Some(p) = levels {
        kv.set("levels", p);
    }
    let seed = params::seed(&kv)?;
    let hcfg = params::hierarchy(&kv, params::exec(common))?;
    let scfg = params::solver(&kv, hcfg.l_max())?;
    let manifest = DatasetManifest::from_file(data)?;
    let x = io::load_feature_matrix(&manifest)?;
    let truth = manifest.read_labels()?;

    let tree = hierarchy::hcs_lrr(&x, &scfg, &hcfg, seed)?;
    if let Some(p) = out {
        tree.save(p)?;
    }
    if let Some(p) = summary {
        std::fs::write(p, tree.summary())?;
    }
    let labels = tree.leaf_labels();
    if let Some(p) = labels_out {
        io::write_labels(p, &labels)?;
    }
    let leaves = tree.leaves();
    let mut report = json!({
        "command": "hierarchy",
        "samples": tree.n_samples,
        "depth": tree.depth(),
        "nodes": tree.nodes.len(),
        "leaves": leaves.len(),
        "leaf_dims": leaves.iter().map(|n| n.dim()).collect::<Vec<_>>(),
        "leaf_sizes": leaves.iter().map(|n| n.indices.len()).collect::<Vec<_>>(),
        "solver_converged": tree.solver_converged,
        "solver_iterations": tree.solver_iterations,
    });
    if let Some(t) = truth {
        if t.len() != labels.len() {
            return Err(Error::Dimension(format!("{} labels for {} samples", t.len(), labels.len())));
        }
        report["accuracy"] = json!(metrics::clustering_accuracy(&labels, &t)?);
    }
    emit(&report);
    Ok(())
}

pub struct ClassifyPaths<'a> {
    pub train: Option<&'a Path>,
    pub test: &'a Path,
    pub tree: Option<&'a Path>,
    pub bundle: Option<&'a Path>,
    pub save_bundle: Option<&'a Path>,
    pub out: Option<&'a Path>,
}

fn load_seqs(path: &Path) -> Result<Vec<SequenceSample>> {
    io::load_sequences(&DatasetManifest::from_file(path)?)
}

fn train_bundle(common: &Common, kv: &uos_core::config::KeyValues, paths: &ClassifyPaths) -> Result<ModelBundle> {
    let p = params::classify(kv)?;
    let exec = params::exec(common);
    let seed = params::seed(kv)?;
    let train_path = paths.train.ok_or_else(|| Error::Config("--train is required unless --bundle is given".into()))?;
    let mut train = load_seqs(train_path)?;
    if train.iter().any(|s| s.label.is_none()) {
        return Err(Error::Config("training manifest has no sequence_labels".into()));
    }
    train.retain(|s| !s.label.is_some_and(|l| p.holdout.contains(&l)));
    if train.is_empty() {
        return Err(Error::Config("holdout removed every training sequence".into()));
    }

    let leaves = match paths.tree {
        Some(t) => HierarchyTree::load(t)?.leaf_set()?,
        None => {
            let hcfg = params::hierarchy(kv, exec)?;
            let scfg = params::solver(kv, hcfg.l_max())?;
            let (tree, leaves) = pipeline::learn_leaves(&train, &scfg, &hcfg, p.max_frames, seed)?;
            log::info!("learned {} leaves in {} solver iterations", leaves.len(), tree.solver_iterations);
            leaves
        }
    };
    sequence::assign_all(&mut train, &leaves, exec)?;
    let labels: Vec<ClassId> = train.iter().filter_map(|s| s.label).collect();

    let classifier = match p.kind {
        ClassifierKind::Knn => {
            let open_set = match (p.open_set, p.varsigma) {
                (true, Some(vs)) => {
                    let d = sequence::training_distances(&train, &leaves, exec)?;
                    Some(OpenSetKnn::fit(&d, &labels, p.k, vs)?)
                }
                _ => None,
            };
            Classifier::Knn { k: p.k, train, open_set }
        }
        ClassifierKind::Svm => {
            let assignments: Vec<_> = train.into_iter().map(|s| s.assignment.expect("assigned")).collect();
            let d = sequence::dtw_distance_matrix(&assignments, &leaves, exec)?;
            let nu = p.nu.unwrap_or_else(|| sequence::median_bandwidth(&d));
            let k = sequence::kernel_from_distances(&d, nu);
            let model = MulticlassSvm::train(&k, &labels, p.mode, &p.smo, exec)?;
            Classifier::Svm { nu, train: assignments, model, open_set: p.open_set }
        }
    };
    Ok(ModelBundle { leaves, classifier })
}

fn known_classes(bundle: &ModelBundle) -> BTreeSet<ClassId> {
    match &bundle.classifier {
        Classifier::Knn { train, .. } => train.iter().filter_map(|s| s.label).collect(),
        Classifier::Svm { model, .. } => model.classes.iter().copied().collect(),
    }
}

fn label_json(l: OpenSetLabel) -> Value {
    match l {
        OpenSetLabel::Known(c) => json!(c),
        OpenSetLabel::New => json!("new"),
    }
}

pub fn classify(common: &Common, paths: &ClassifyPaths) -> Result<()> {
    let kv = params::load(common, &[SOLVER_KEYS, HIERARCHY_KEYS, CLASSIFY_KEYS])?;
    let bundle = match paths.bundle {
        Some(b) => ModelBundle::load(b)?,
        None => train_bundle(common, &kv, paths)?,
    };
    if let Some(p) = paths.save_bundle {
        bundle.save(p)?;
    }
    let mut test = load_seqs(paths.test)?;
    sequence::assign_all(&mut test, &bundle.leaves, params::exec(common))?;
    let preds: Vec<OpenSetLabel> = test.iter().map(|s| bundle.predict(s)).collect::<Result<_>>()?;

    if let Some(p) = paths.out {
        let mut s = String::new();
        for l in &preds {
            match l {
                OpenSetLabel::Known(c) => writeln!(s, "{c}"),
                OpenSetLabel::New => writeln!(s, "new"),
            }
            .expect("write to string");
        }
        std::fs::write(p, s)?;
    }

    let (kind, open_set) = match &bundle.classifier {
        Classifier::Knn { open_set, .. } => ("knn", open_set.is_some()),
        Classifier::Svm { open_set, .. } => ("svm", *open_set),
    };
    let mut report = json!({
        "command": "classify",
        "classifier": kind,
        "open_set": open_set,
        "leaves": bundle.leaves.len(),
        "leaf_dims": bundle.leaves.dims(),
        "test_sequences": test.len(),
        "predictions": preds.iter().map(|&l| label_json(l)).collect::<Vec<_>>(),
    });
    if test.iter().all(|s| s.label.is_some()) {
        let truth: Vec<ClassId> = test.iter().filter_map(|s| s.label).collect();
        let known = known_classes(&bundle);
        let expected: Vec<OpenSetLabel> =
            truth.iter().map(|c| if known.contains(c) { OpenSetLabel::Known(*c) } else { OpenSetLabel::New }).collect();
        report["accuracy"] = json!(metrics::classification_accuracy(&preds, &expected)?);
        let split = |want_new: bool| {
            let pairs: Vec<_> =
                preds.iter().zip(&expected).filter(|(_, e)| (**e == OpenSetLabel::New) == want_new).collect();
            (!pairs.is_empty()).then(|| pairs.iter().filter(|(p, e)| p == e).count() as f64 / pairs.len() as f64)
        };
        if open_set {
            report["known_accuracy"] = json!(split(false));
            report["new_recall"] = json!(split(true));
        }
    }
    emit(&report);
    Ok(())
}

fn read_pred_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| match l {
            "new" => Ok(usize::MAX),
            _ => l.parse().map_err(|_| Error::Load {
                path: path.to_path_buf(),
                reason: format!("line {}: '{l}' is not a label", i + 1),
            }),
        })
        .collect()
}

/// Rejections (`new`) count as their own label.
pub fn eval(pred: &Path, truth: &Path) -> Result<()> {
    let p = read_pred_labels(pred)?;
    let t = read_pred_labels(truth)?;
    emit(&json!({
        "command": "eval",
        "samples": p.len(),
        "clustering_accuracy": metrics::clustering_accuracy(&p, &t)?,
        "classification_accuracy": metrics::classification_accuracy(&p, &t)?,
    }));
    Ok(())
}
