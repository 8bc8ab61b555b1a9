mod common;

use std::path::PathBuf;
use std::sync::OnceLock;

use common::brute_auc;
use ingiface::config::{FusionPath, RunConfig};
use ingiface::datasets::{load_manifest, Record, SynthSpec};
use ingiface::evalproto::{emit_report, roc};
use ingiface::imgcore::FaceModelConfig;
use ingiface::matching::Decision;
use ingiface::pipeline::{run_experiment, Models};
use ingiface::{workflow, Error};
use rand::seq::SliceRandom;

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    cfg: RunConfig,
    models: Models,
}

fn protocol(seed: u64, spec: SynthSpec) -> (tempfile::TempDir, PathBuf, RunConfig) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    let path = workflow::synth(&SynthSpec { seed, ..spec }, &root).unwrap();
    let mut cfg = RunConfig::load(path).unwrap();
    cfg.face_models = vec![FaceModelConfig::new(24.0, 64, 80), FaceModelConfig::new(36.0, 64, 80)];
    (dir, root, cfg)
}

/// One trained noiseless protocol shared by every test in this binary.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let spec = SynthSpec {
            n_subjects: 6,
            images_per_subject: 4,
            noise_sigma: 0.0,
            ..SynthSpec::default()
        };
        let (dir, root, cfg) = protocol(5, spec);
        let models = workflow::train_in_memory(&cfg).unwrap();
        Fixture {
            _dir: dir,
            root,
            cfg,
            models,
        }
    })
}

fn manifest(name: &str) -> Vec<Record> {
    load_manifest(fixture().root.join(name)).unwrap()
}

#[test]
fn three_singletons_score_three_genuine_and_six_impostor_pairs() {
    let f = fixture();
    let gallery: Vec<Record> = manifest("gallery.csv").into_iter().take(3).collect();
    let e = run_experiment(&f.models, &f.cfg, &gallery, &gallery).unwrap();
    let s = e.score_set();
    assert_eq!((s.genuine.len(), s.impostor.len()), (3, 6));
}

#[test]
fn every_probe_meets_every_gallery_entry() {
    let f = fixture();
    let (gallery, probes) = (manifest("gallery.csv"), manifest("probe.csv"));
    let e = run_experiment(&f.models, &f.cfg, &gallery, &probes).unwrap();
    let s = e.score_set();
    assert_eq!(s.genuine.len() + s.impostor.len(), gallery.len() * probes.len());
    assert_eq!(s.genuine.len(), probes.len());
    let keys: Vec<_> = e.pairs.iter().map(|p| (&p.probe_id, &p.gallery_id)).collect();
    assert!(keys.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn empty_probe_or_gallery_is_an_error() {
    let f = fixture();
    let gallery = manifest("gallery.csv");
    assert!(matches!(
        run_experiment(&f.models, &f.cfg, &gallery, &[]),
        Err(Error::InvalidInput(_))
    ));
    assert!(run_experiment(&f.models, &f.cfg, &[], &gallery).is_err());
}

#[test]
fn same_image_pairs_beat_every_impostor() {
    let f = fixture();
    let all = manifest("all.csv");
    let e = run_experiment(&f.models, &f.cfg, &all, &all).unwrap();
    let identical: Vec<f64> = e
        .pairs
        .iter()
        .filter(|p| p.probe_index == p.gallery_index)
        .map(|p| p.fused)
        .collect();
    let impostor = e.score_set().impostor_scores();
    assert_eq!(brute_auc(&identical, &impostor), 1.0);
}

#[test]
fn shuffled_labels_give_chance_auc() {
    let f = fixture();
    let gallery = manifest("all.csv");
    let mut probes = manifest("all.csv");
    let mut labels: Vec<String> = probes.iter().map(|r| r.subject_id.clone()).collect();
    let mut aucs = Vec::new();
    let mut rng = common::rng(9);
    for _ in 0..5 {
        labels.shuffle(&mut rng);
        for (r, l) in probes.iter_mut().zip(&labels) {
            r.subject_id = l.clone();
        }
        let s = run_experiment(&f.models, &f.cfg, &gallery, &probes).unwrap().score_set();
        aucs.push(brute_auc(&s.genuine_scores(), &s.impostor_scores()));
    }
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    assert!((mean - 0.5).abs() <= 0.1, "mean shuffled AUC {mean}, runs {aucs:?}");
}

#[test]
fn identical_probe_is_accepted_and_unenrolled_subject_rejected() {
    let f = fixture();
    let gallery = manifest("gallery.csv");
    let e = run_experiment(&f.models, &f.cfg, &gallery, &gallery).unwrap();
    for (i, m) in e.best_matches().iter().enumerate() {
        assert_eq!(m.gallery_position, i + 1);
        assert!(m.distance < 1e-9);
        assert_eq!(m.decision, Decision::Accept);
    }

    // drop subject 0 from the gallery; its probes must not be accepted
    let enrolled: Vec<Record> = gallery[1..].to_vec();
    let outsiders: Vec<Record> = manifest("probe.csv")
        .into_iter()
        .filter(|r| r.subject_id == gallery[0].subject_id)
        .collect();
    let e = run_experiment(&f.models, &f.cfg, &enrolled, &outsiders).unwrap();
    assert!(e.pairs.iter().all(|p| p.decision == Decision::Reject));
}

#[test]
fn simple_path_applies_the_similarity_threshold() {
    let f = fixture();
    let mut cfg = f.cfg.clone();
    cfg.fusion.path = FusionPath::Simple;
    let gallery = manifest("gallery.csv");
    let e = run_experiment(&f.models, &cfg, &gallery, &gallery).unwrap();
    for p in &e.pairs {
        let mean = p.raw.iter().sum::<f64>() / p.raw.len() as f64;
        assert_eq!(p.fused, mean);
        assert_eq!(p.decision == Decision::Accept, mean >= 0.85);
    }
}

#[test]
fn persisted_models_round_trip_and_check_the_hash() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    f.models.save(dir.path(), &f.cfg).unwrap();
    let files = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(files, 2 * 3 + 2);
    let back = Models::load(dir.path(), &f.cfg).unwrap();
    assert_eq!(back, f.models);

    let mut other = f.cfg.clone();
    other.ingi.iterations = 10;
    match Models::load(dir.path(), &other) {
        Err(Error::Model { msg, .. }) => assert!(msg.contains("retrain")),
        r => panic!("expected hash mismatch, got {r:?}"),
    }
    let missing = dir.path().join("absent");
    match Models::load(&missing, &f.cfg) {
        Err(e) => assert!(e.to_string().contains("absent")),
        Ok(_) => panic!("loaded from a missing directory"),
    }
}

#[test]
fn training_and_reports_are_reproducible() {
    let f = fixture();
    let again = workflow::train_in_memory(&f.cfg).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    f.models.save(a.path(), &f.cfg).unwrap();
    again.save(b.path(), &f.cfg).unwrap();
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap(),
            "{name:?} differs"
        );
    }

    let (gallery, probes) = (manifest("gallery.csv"), manifest("probe.csv"));
    let reports: Vec<_> = [&f.models, &again]
        .iter()
        .map(|m| {
            let e = run_experiment(m, &f.cfg, &gallery, &probes).unwrap();
            let c = roc(&e.score_set()).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = emit_report(&e, &c, dir.path()).unwrap();
            let bytes = [&p.scores, &p.roc, &p.summary].map(|p| std::fs::read(p).unwrap());
            (dir, bytes)
        })
        .collect();
    assert_eq!(reports[0].1, reports[1].1);
}

#[test]
fn single_subject_dev_set_cannot_fit_fusion() {
    let f = fixture();
    let train = manifest("train.csv");
    let dev: Vec<Record> = manifest("dev.csv").into_iter().take(4).collect();
    assert!(dev.iter().all(|r| r.subject_id == dev[0].subject_id));
    let err = Models::train(&f.cfg, &train, &dev).unwrap_err();
    assert!(err.to_string().contains("impostor"), "{err}");
}
