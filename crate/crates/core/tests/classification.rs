use uos_core::bundle::{Classifier, ModelBundle};
use uos_core::metrics::classification_accuracy;
use uos_core::par::Execution;
use uos_core::sequence::{self, AssignmentVector, LeafSet, OpenSetLabel, SequenceSample};
use uos_core::svm::{MulticlassMode, MulticlassSvm, SmoOptions};
use uos_core::synth::{self, SequenceSynthConfig, SyntheticSequences};

fn dataset(classes: usize, jitter: f64, seed: u64) -> (SyntheticSequences, LeafSet) {
    let cfg = SequenceSynthConfig {
        classes,
        leaves: 2 * classes.max(2),
        disjoint_templates: true,
        jitter,
        train_per_class: 6,
        test_per_class: 4,
        min_len: 8,
        max_len: 14,
        seed,
        ..SequenceSynthConfig::default()
    };
    let mut d = synth::generate_synthetic_sequences(&cfg).unwrap();
    let leaves = LeafSet::new(d.leaf_bases.clone()).unwrap();
    sequence::assign_all(&mut d.train, &leaves, Execution::Parallel).unwrap();
    sequence::assign_all(&mut d.test, &leaves, Execution::Parallel).unwrap();
    (d, leaves)
}

fn labels(s: &[SequenceSample]) -> Vec<usize> {
    s.iter().map(|s| s.label.unwrap()).collect()
}

#[test]
fn noiseless_disjoint_templates_are_separable_by_knn() {
    let (d, leaves) = dataset(2, 0.0, 3);
    let pred: Vec<usize> = d.test.iter().map(|s| sequence::knn_classify(s, &d.train, &leaves, 3).unwrap()).collect();
    assert_eq!(classification_accuracy(&pred, &labels(&d.test)).unwrap(), 1.0);
}

#[test]
fn single_class_is_always_returned() {
    let (d, leaves) = dataset(1, 0.2, 4);
    for s in &d.test {
        assert_eq!(sequence::knn_classify(s, &d.train, &leaves, 1).unwrap(), 0);
    }
}

#[test]
fn execution_mode_does_not_change_results() {
    let (d, leaves) = dataset(3, 0.1, 5);
    let psis: Vec<AssignmentVector> = d.train.iter().map(|s| s.assignment.clone().unwrap()).collect();
    let seq = sequence::training_distances(&d.train, &leaves, Execution::Sequential).unwrap();
    assert_eq!(seq, sequence::training_distances(&d.train, &leaves, Execution::Parallel).unwrap());
    let dm = sequence::dtw_distance_matrix(&psis, &leaves, Execution::Sequential).unwrap();
    assert_eq!(dm, sequence::dtw_distance_matrix(&psis, &leaves, Execution::Parallel).unwrap());
    let k = sequence::kernel_from_distances(&dm, sequence::median_bandwidth(&dm));
    let y = labels(&d.train);
    for mode in [MulticlassMode::OneVsOne, MulticlassMode::OneVsAll] {
        let a = MulticlassSvm::train(&k, &y, mode, &SmoOptions::default(), Execution::Sequential).unwrap();
        let b = MulticlassSvm::train(&k, &y, mode, &SmoOptions::default(), Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn saved_bundle_predicts_like_the_original() {
    let (d, leaves) = dataset(3, 0.1, 6);
    let psis: Vec<AssignmentVector> = d.train.iter().map(|s| s.assignment.clone().unwrap()).collect();
    let dm = sequence::dtw_distance_matrix(&psis, &leaves, Execution::Parallel).unwrap();
    let nu = sequence::median_bandwidth(&dm);
    let k = sequence::kernel_from_distances(&dm, nu);
    let model = MulticlassSvm::train(
        &k,
        &labels(&d.train),
        MulticlassMode::OneVsAll,
        &SmoOptions::default(),
        Execution::Parallel,
    )
    .unwrap();
    let bundle = ModelBundle { leaves, classifier: Classifier::Svm { nu, train: psis, model, open_set: true } };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    bundle.save(&path).unwrap();
    let loaded = ModelBundle::load(&path).unwrap();
    assert_eq!(loaded, bundle);
    let mut fresh: Vec<SequenceSample> = d.test.clone();
    fresh.iter_mut().for_each(|s| s.assignment = None);
    for (s, f) in d.test.iter().zip(&fresh) {
        let want = bundle.predict(s).unwrap();
        assert_eq!(loaded.predict(f).unwrap(), want);
        assert!(matches!(want, OpenSetLabel::Known(_) | OpenSetLabel::New));
    }
}
