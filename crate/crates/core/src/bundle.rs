//! Trained classifier bundles: leaf bases plus the classifier parameters,
//! in a versioned little-endian binary format (magic `UOSM`).

use std::collections::BTreeMap;
use std::path::Path;

use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::sequence::{self, AssignmentVector, ClassId, LeafSet, OpenSetKnn, OpenSetLabel, SequenceSample};
use crate::svm::{BinarySvm, MulticlassMode, MulticlassSvm, PairModel};

const BUNDLE_MAGIC: &[u8; 4] = b"UOSM";
const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    /// k-NN over feature-aligned distances; keeps the training sequences.
    Knn { k: usize, train: Vec<SequenceSample>, open_set: Option<OpenSetKnn> },
    /// Kernel SVM over the Gaussian DTW kernel; keeps the training assignments.
    Svm { nu: f64, train: Vec<AssignmentVector>, model: MulticlassSvm, open_set: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub leaves: LeafSet,
    pub classifier: Classifier,
}

impl ModelBundle {
    /// Predicts one sequence. Closed-set classifiers always return `Known`.
    pub fn predict(&self, sample: &SequenceSample) -> Result<OpenSetLabel> {
        let psi = match &sample.assignment {
            Some(psi) => psi.clone(),
            None => sequence::assign_to_leaves(sample, &self.leaves)?,
        };
        match &self.classifier {
            Classifier::Knn { k, train, open_set } => {
                let mut s = sample.clone();
                s.assignment = Some(psi);
                let d = sequence::distances_to(&s, train, &self.leaves, Execution::default())?;
                match open_set {
                    Some(model) => model.predict(&d),
                    None => {
                        let labels: Vec<ClassId> = train.iter().filter_map(|t| t.label).collect();
                        Ok(OpenSetLabel::Known(sequence::knn_decide(&d, &labels, *k)?.0))
                    }
                }
            }
            Classifier::Svm { nu, train, model, open_set } => {
                let d = sequence::dtw_distances_to(&psi, train, &self.leaves, Execution::default())?;
                let row = sequence::kernel_row(&d, *nu);
                if *open_set {
                    model.predict_open_set(&row)
                } else {
                    model.predict(&row).map(OpenSetLabel::Known)
                }
            }
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut enc = Encoder::new();
        enc.bytes(BUNDLE_MAGIC);
        enc.u32(BUNDLE_VERSION);
        enc.usize(self.leaves.len())?;
        for b in self.leaves.bases() {
            enc.matrix(b)?;
        }
        match &self.classifier {
            Classifier::Knn { k, train, open_set } => {
                enc.u8(0);
                enc.usize(*k)?;
                enc.usize(train.len())?;
                for t in train {
                    let label = t.label.ok_or_else(|| Error::Config("training sequence has no label".into()))?;
                    enc.usize(label)?;
                    enc.matrix(&t.features)?;
                    let psi = t
                        .assignment
                        .as_ref()
                        .ok_or_else(|| Error::Config("training sequence has no assignment".into()))?;
                    enc.usizes(psi.as_slice())?;
                }
                enc.u8(u8::from(open_set.is_some()));
                if let Some(os) = open_set {
                    enc.f64(os.varsigma);
                    enc.usize(os.spread.len())?;
                    for (&c, &v) in &os.spread {
                        enc.usize(c)?;
                        enc.f64(v);
                    }
                }
            }
            Classifier::Svm { nu, train, model, open_set } => {
                enc.u8(1);
                enc.f64(*nu);
                enc.u8(u8::from(*open_set));
                enc.u8(match model.mode {
                    MulticlassMode::OneVsOne => 0,
                    MulticlassMode::OneVsAll => 1,
                });
                enc.usize(train.len())?;
                for psi in train {
                    enc.usizes(psi.as_slice())?;
                }
                enc.usizes(&model.classes)?;
                enc.usize(model.models.len())?;
                for m in &model.models {
                    enc.usize(m.positive)?;
                    enc.opt_usize(m.negative)?;
                    enc.usizes(&m.svm.indices)?;
                    m.svm.coef.iter().for_each(|&c| enc.f64(c));
                    enc.f64(m.svm.bias);
                    enc.usize(m.svm.iterations)?;
                    enc.u8(u8::from(m.svm.converged));
                }
            }
        }
        Ok(enc.finish())
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(buf, "model bundle");
        dec.expect_magic(BUNDLE_MAGIC)?;
        let version = dec.u32()?;
        if version != BUNDLE_VERSION {
            return dec.fail(format!("unsupported version {version}"));
        }
        let n_leaves = dec.usize()?;
        let mut bases = Vec::new();
        for _ in 0..n_leaves {
            bases.push(dec.matrix()?);
        }
        let leaves = LeafSet::new(bases)?;
        let classifier = match dec.u8()? {
            0 => {
                let k = dec.usize()?;
                let n = dec.usize()?;
                let mut train = Vec::new();
                for _ in 0..n {
                    let label = dec.usize()?;
                    let features = dec.matrix()?;
                    let psi = AssignmentVector(dec.usizes()?);
                    if psi.len() != features.ncols() {
                        return dec.fail("assignment length differs from sequence length");
                    }
                    train.push(SequenceSample { features, label: Some(label), assignment: Some(psi) });
                }
                let open_set = if dec.u8()? != 0 {
                    let varsigma = dec.f64()?;
                    let count = dec.usize()?;
                    let mut spread = BTreeMap::new();
                    for _ in 0..count {
                        let c = dec.usize()?;
                        spread.insert(c, dec.f64()?);
                    }
                    let labels = train.iter().filter_map(|t| t.label).collect();
                    Some(OpenSetKnn::from_parts(k, varsigma, spread, labels))
                } else {
                    None
                };
                Classifier::Knn { k, train, open_set }
            }
            1 => {
                let nu = dec.f64()?;
                let open_set = dec.u8()? != 0;
                let mode = match dec.u8()? {
                    0 => MulticlassMode::OneVsOne,
                    1 => MulticlassMode::OneVsAll,
                    m => return dec.fail(format!("unknown multiclass mode {m}")),
                };
                let n = dec.usize()?;
                let mut train = Vec::new();
                for _ in 0..n {
                    train.push(AssignmentVector(dec.usizes()?));
                }
                let classes = dec.usizes()?;
                let count = dec.usize()?;
                let mut models = Vec::new();
                for _ in 0..count {
                    let positive = dec.usize()?;
                    let negative = dec.opt_usize()?;
                    let indices = dec.usizes()?;
                    if indices.iter().any(|&i| i >= n) {
                        return dec.fail("support index out of range");
                    }
                    let coef = (0..indices.len()).map(|_| dec.f64()).collect::<Result<Vec<_>>>()?;
                    let bias = dec.f64()?;
                    let iterations = dec.usize()?;
                    let converged = dec.u8()? != 0;
                    models.push(PairModel {
                        positive,
                        negative,
                        svm: BinarySvm { indices, coef, bias, iterations, converged },
                    });
                }
                Classifier::Svm { nu, train, model: MulticlassSvm { mode, classes, models, n_train: n }, open_set }
            }
            kind => return dec.fail(format!("unknown classifier kind {kind}")),
        };
        dec.finish()?;
        Ok(ModelBundle { leaves, classifier })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = std::fs::read(path).map_err(|e| Error::Load { path: path.to_path_buf(), reason: e.to_string() })?;
        Self::from_bytes(&buf)
    }
}
