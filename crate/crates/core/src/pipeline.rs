//! End-to-end verification pipeline: alignment per face model, INGI (or
//! histogram equalization), hybrid Fourier features, one subspace classifier
//! per (face model, domain), and score fusion.

use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{FusionPath, KernelKind, RunConfig};
use crate::datasets::Record;
use crate::error::{Error, Result};
use crate::evalproto::{Experiment, PairScore};
use crate::fourier::{extract_features, Domain, FeatureVector};
use crate::imgcore::{align, histogram_equalize, Image};
use crate::ingi::ingi;
use crate::matching::{decide, Decision, euclidean_distance, to_similarity, FusionModel, LabeledScores};
use crate::subspace::{
    kpca_train, median_heuristic_gamma, pca_train, project, KernelSpec, SubspaceKind,
    SubspaceModel, TrainingSet,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const FUSION_FILE: &str = "fusion.json";

/// Aligned and photometrically normalized crop for one face model.
pub fn preprocess(record: &Record, face_model: usize, cfg: &RunConfig) -> Result<Image> {
    let fm = cfg
        .face_models
        .get(face_model)
        .ok_or_else(|| Error::input(format!("no face model {face_model}")))?;
    let aligned = align(&record.image, &record.eyes, fm)?;
    if cfg.ingi.enabled {
        ingi(&aligned, &cfg.ingi.params())
    } else {
        Ok(histogram_equalize(&aligned))
    }
}

/// Full hybrid Fourier vector per face model, in face-model order.
pub fn record_features(record: &Record, cfg: &RunConfig) -> Result<Vec<FeatureVector>> {
    let bands = cfg.features.band_set()?;
    (0..cfg.face_models.len())
        .map(|m| extract_features(&preprocess(record, m, cfg)?, &bands, cfg.features.phase_eps))
        .collect()
}

fn features_of(records: &[Record], cfg: &RunConfig) -> Result<Vec<Vec<FeatureVector>>> {
    records
        .par_iter()
        .map(|r| {
            record_features(r, cfg).map_err(|e| match e {
                Error::InvalidInput(msg) => Error::input(format!("{}: {msg}", r.id)),
                other => other,
            })
        })
        .collect()
}

pub fn classifier_id(face_model: usize, domain: Domain) -> String {
    format!("fm{face_model}_{domain}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub id: String,
    pub face_model: usize,
    pub domain: Domain,
    pub model: SubspaceModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassifierFile {
    config_hash: String,
    classifier: Classifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FusionFile {
    config_hash: String,
    classifier_ids: Vec<String>,
    fusion: FusionModel,
}

/// Outcome of comparing two templates.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub distances: Vec<f64>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub fused: f64,
    pub decision: Decision,
}

/// Trained classifiers plus the fusion model, tied to one config hash.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub config_hash: String,
    pub classifiers: Vec<Classifier>,
    pub fusion: FusionModel,
}

/// Projected coordinates of one image under every classifier.
pub type Template = Vec<Vec<f64>>;

fn train_classifier(
    cfg: &RunConfig,
    face_model: usize,
    domain: Domain,
    feats: &[Vec<FeatureVector>],
    labels: &[String],
) -> Result<Classifier> {
    let rows = feats.iter().map(|f| f[face_model].domain(domain)).collect();
    let ts = TrainingSet::new(rows, labels.to_vec())?;
    let id = classifier_id(face_model, domain);
    let model = match (cfg.subspace.kind, cfg.subspace.kernel) {
        (SubspaceKind::Pca, _) => pca_train(&ts, cfg.subspace.components)?,
        (SubspaceKind::Kpca, KernelKind::Linear) => {
            kpca_train(&ts, KernelSpec::Linear, cfg.subspace.components)?
        }
        (SubspaceKind::Kpca, KernelKind::Rbf) => {
            let gamma = cfg.subspace.gamma.unwrap_or_else(|| median_heuristic_gamma(&ts));
            kpca_train(&ts, KernelSpec::Rbf { gamma }, cfg.subspace.components)?
        }
    };
    if model.shrunk() {
        warn!(
            "{id}: kept {} of {} requested components",
            model.k(),
            model.requested_components
        );
    }
    if model.k() == 0 {
        return Err(Error::input(format!("{id}: training set has no variance")));
    }
    Ok(Classifier {
        id,
        face_model,
        domain,
        model,
    })
}

impl Models {
    /// Trains every classifier on `train` and fits fusion on all pairs of `dev`.
    pub fn train(cfg: &RunConfig, train: &[Record], dev: &[Record]) -> Result<Models> {
        cfg.validate()?;
        if train.len() < 2 {
            return Err(Error::config(format!(
                "training needs at least 2 images, got {}",
                train.len()
            )));
        }
        let feats = features_of(train, cfg)?;
        let labels: Vec<String> = train.iter().map(|r| r.subject_id.clone()).collect();
        let jobs: Vec<(usize, Domain)> = (0..cfg.face_models.len())
            .flat_map(|m| Domain::ALL.into_iter().map(move |d| (m, d)))
            .collect();
        let classifiers = jobs
            .par_iter()
            .map(|&(m, d)| train_classifier(cfg, m, d, &feats, &labels))
            .collect::<Result<Vec<_>>>()?;
        info!("trained {} classifiers on {} images", classifiers.len(), train.len());

        let feats = features_of(dev, cfg)?;
        let templates = feats
            .iter()
            .map(|f| project_all(&classifiers, f))
            .collect::<Result<Vec<_>>>()?;
        let mut scores = Vec::new();
        for i in 0..dev.len() {
            for j in i + 1..dev.len() {
                let (_, raw) = raw_scores(&templates[i], &templates[j])?;
                scores.push(LabeledScores {
                    raw,
                    genuine: dev[i].subject_id == dev[j].subject_id,
                });
            }
        }
        let fusion = FusionModel::fit(&scores, cfg.fusion.target_far)?;
        Ok(Models {
            config_hash: cfg.hash(),
            classifiers,
            fusion,
        })
    }

    pub fn classifier_ids(&self) -> Vec<String> {
        self.classifiers.iter().map(|c| c.id.clone()).collect()
    }

    pub fn template(&self, record: &Record, cfg: &RunConfig) -> Result<Template> {
        let feats = record_features(record, cfg)?;
        self.project_features(&feats)
    }

    fn project_features(&self, feats: &[FeatureVector]) -> Result<Template> {
        project_all(&self.classifiers, feats)
    }

    pub fn templates(&self, records: &[Record], cfg: &RunConfig) -> Result<Vec<Template>> {
        features_of(records, cfg)?
            .iter()
            .map(|f| self.project_features(f))
            .collect()
    }

    /// Fused score and the threshold it is compared against.
    pub fn fuse(&self, path: FusionPath, raw: &[f64], normalized: &[f64], cfg: &RunConfig) -> (f64, f64) {
        match path {
            FusionPath::Simple => (
                raw.iter().sum::<f64>() / raw.len() as f64,
                cfg.fusion.threshold,
            ),
            FusionPath::Llr => (self.fusion.llr(normalized), self.fusion.threshold),
        }
    }

    pub fn compare(
        &self,
        a: &Template,
        b: &Template,
        cfg: &RunConfig,
    ) -> Result<Comparison> {
        let (distances, raw) = raw_scores(a, b)?;
        let normalized = self.fusion.znorm.apply(&raw);
        let (fused, tau) = self.fuse(cfg.fusion.path, &raw, &normalized, cfg);
        Ok(Comparison {
            distances,
            raw,
            normalized,
            fused,
            decision: decide(fused, tau),
        })
    }

    fn classifier_path(dir: &Path, id: &str) -> std::path::PathBuf {
        dir.join(format!("classifier_{id}.json"))
    }

    /// Writes one JSON file per classifier, the fusion model and a copy of
    /// the config, all stamped with the config hash.
    pub fn save(&self, dir: &Path, cfg: &RunConfig) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for c in &self.classifiers {
            let file = ClassifierFile {
                config_hash: self.config_hash.clone(),
                classifier: c.clone(),
            };
            write_json(&Self::classifier_path(dir, &c.id), &file)?;
        }
        write_json(
            &dir.join(FUSION_FILE),
            &FusionFile {
                config_hash: self.config_hash.clone(),
                classifier_ids: self.classifier_ids(),
                fusion: self.fusion.clone(),
            },
        )?;
        let mut stored = cfg.clone();
        stored.paths = Default::default();
        let text = format!("# config_hash = {}\n{}", self.config_hash, stored.to_toml());
        let path = dir.join(CONFIG_FILE);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Loads models trained under `cfg`; any hash mismatch is an error.
    pub fn load(dir: &Path, cfg: &RunConfig) -> Result<Models> {
        if !dir.is_dir() {
            return Err(Error::Model {
                path: dir.to_path_buf(),
                msg: "model directory does not exist".into(),
            });
        }
        let expected = cfg.hash();
        let fusion_path = dir.join(FUSION_FILE);
        let fusion: FusionFile = read_json(&fusion_path)?;
        check_hash(&fusion_path, &fusion.config_hash, &expected)?;
        let mut classifiers = Vec::with_capacity(fusion.classifier_ids.len());
        for id in &fusion.classifier_ids {
            let path = Self::classifier_path(dir, id);
            let file: ClassifierFile = read_json(&path)?;
            check_hash(&path, &file.config_hash, &expected)?;
            if &file.classifier.id != id {
                return Err(Error::Model {
                    path,
                    msg: format!("holds classifier {}, expected {id}", file.classifier.id),
                });
            }
            classifiers.push(file.classifier);
        }
        if fusion.fusion.classifiers() != classifiers.len() {
            return Err(Error::Model {
                path: fusion_path,
                msg: "fusion model and classifier count disagree".into(),
            });
        }
        Ok(Models {
            config_hash: expected,
            classifiers,
            fusion: fusion.fusion,
        })
    }
}

fn project_all(classifiers: &[Classifier], feats: &[FeatureVector]) -> Result<Template> {
    classifiers
        .iter()
        .map(|c| project(&c.model, &feats[c.face_model].domain(c.domain)))
        .collect()
}

/// Per-classifier distances and similarities.
pub fn raw_scores(a: &Template, b: &Template) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = a
        .iter()
        .zip(b)
        .map(|(x, y)| euclidean_distance(x, y))
        .collect::<Result<Vec<_>>>()?;
    let s = d.iter().map(|&d| to_similarity(d)).collect();
    Ok((d, s))
}

fn check_hash(path: &Path, found: &str, expected: &str) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(Error::Model {
            path: path.to_path_buf(),
            msg: format!("trained under config {found}, active config is {expected}; retrain"),
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value).expect("model serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Model {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Scores every probe against every gallery entry.
pub fn run_experiment(
    models: &Models,
    cfg: &RunConfig,
    gallery: &[Record],
    probes: &[Record],
) -> Result<Experiment> {
    if gallery.is_empty() {
        return Err(Error::input("gallery manifest has no images"));
    }
    if probes.is_empty() {
        return Err(Error::input("probe manifest has no images"));
    }
    let g = models.templates(gallery, cfg)?;
    let p = models.templates(probes, cfg)?;
    let pairs = (0..probes.len())
        .into_par_iter()
        .flat_map_iter(|pi| (0..gallery.len()).map(move |gi| (pi, gi)))
        .map(|(pi, gi)| {
            let c = models.compare(&p[pi], &g[gi], cfg)?;
            Ok(PairScore {
                probe_index: pi,
                gallery_index: gi,
                probe_id: probes[pi].id.clone(),
                gallery_id: gallery[gi].id.clone(),
                genuine: probes[pi].subject_id == gallery[gi].subject_id,
                distances: c.distances,
                raw: c.raw,
                normalized: c.normalized,
                fused: c.fused,
                decision: c.decision,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Experiment::new(
        models.classifier_ids(),
        pairs,
        probes.len(),
        gallery.len(),
        models.config_hash.clone(),
    ))
}
