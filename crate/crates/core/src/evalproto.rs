//! Gallery/probe verification experiments, empirical ROC curves and report
//! files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::Decision;

/// One labeled comparison in a [`ScoreSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub probe_id: String,
    pub gallery_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<LabeledScore>,
    pub impostor: Vec<LabeledScore>,
    pub config_hash: String,
}

impl ScoreSet {
    pub fn from_scores(genuine: &[f64], impostor: &[f64]) -> ScoreSet {
        let wrap = |xs: &[f64], tag: &str| {
            xs.iter()
                .enumerate()
                .map(|(i, &score)| LabeledScore {
                    probe_id: format!("{tag}{i}"),
                    gallery_id: String::new(),
                    score,
                })
                .collect()
        };
        ScoreSet {
            genuine: wrap(genuine, "g"),
            impostor: wrap(impostor, "i"),
            config_hash: String::new(),
        }
    }

    pub fn genuine_scores(&self) -> Vec<f64> {
        self.genuine.iter().map(|s| s.score).collect()
    }

    pub fn impostor_scores(&self) -> Vec<f64> {
        self.impostor.iter().map(|s| s.score).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub vr: f64,
}

/// Empirical ROC: one point per distinct score used as threshold
/// (`accept iff score >= threshold`), preceded by the `(0, 0)` point of an
/// infinite threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

pub fn roc(s: &ScoreSet) -> Result<RocCurve> {
    if s.genuine.is_empty() || s.impostor.is_empty() {
        return Err(Error::input(format!(
            "ROC needs both classes: {} genuine, {} impostor scores",
            s.genuine.len(),
            s.impostor.len()
        )));
    }
    let mut all: Vec<(f64, bool)> = s
        .genuine
        .iter()
        .map(|g| (g.score, true))
        .chain(s.impostor.iter().map(|i| (i.score, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (n_gen, n_imp) = (s.genuine.len() as f64, s.impostor.len() as f64);

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        vr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let theta = all[i].0;
        while i < all.len() && all[i].0 == theta {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: theta,
            far: fp as f64 / n_imp,
            vr: tp as f64 / n_gen,
        });
    }
    Ok(RocCurve { points })
}

/// Verification rate at the largest achieved FAR not exceeding `far`.
pub fn vr_at_far(c: &RocCurve, far: f64) -> f64 {
    c.points
        .iter()
        .filter(|p| p.far <= far)
        .map(|p| p.vr)
        .fold(0.0, f64::max)
}

/// Area under the ROC curve as the probability that a genuine score beats
/// an impostor score, ties counting one half.
pub fn auc(s: &ScoreSet) -> Result<f64> {
    let c = roc(s)?;
    let mut area = 0.0;
    for w in c.points.windows(2) {
        area += (w[1].far - w[0].far) * 0.5 * (w[1].vr + w[0].vr);
    }
    Ok(area)
}

/// Per-pair outcome of a gallery/probe comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub probe_index: usize,
    pub gallery_index: usize,
    pub probe_id: String,
    pub gallery_id: String,
    pub genuine: bool,
    /// Per-classifier Euclidean distance in subspace coordinates.
    pub distances: Vec<f64>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub fused: f64,
    pub decision: Decision,
}

impl PairScore {
    /// Mean of the per-classifier distances.
    pub fn distance(&self) -> f64 {
        self.distances.iter().sum::<f64>() / self.distances.len().max(1) as f64
    }
}

/// Everything produced by one all-pairs run.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub classifier_ids: Vec<String>,
    pub pairs: Vec<PairScore>,
    pub n_probes: usize,
    pub n_gallery: usize,
    pub config_hash: String,
}

impl Experiment {
    /// Sorts pairs by `(probe_id, gallery_id)` with manifest positions as
    /// tie-breakers, so output order never depends on scheduling.
    pub fn new(
        classifier_ids: Vec<String>,
        mut pairs: Vec<PairScore>,
        n_probes: usize,
        n_gallery: usize,
        config_hash: String,
    ) -> Experiment {
        pairs.sort_by(|a, b| {
            (&a.probe_id, &a.gallery_id, a.probe_index, a.gallery_index).cmp(&(
                &b.probe_id,
                &b.gallery_id,
                b.probe_index,
                b.gallery_index,
            ))
        });
        Experiment {
            classifier_ids,
            pairs,
            n_probes,
            n_gallery,
            config_hash,
        }
    }

    pub fn score_set(&self) -> ScoreSet {
        let mut s = ScoreSet {
            config_hash: self.config_hash.clone(),
            ..ScoreSet::default()
        };
        for p in &self.pairs {
            let ls = LabeledScore {
                probe_id: p.probe_id.clone(),
                gallery_id: p.gallery_id.clone(),
                score: p.fused,
            };
            if p.genuine {
                s.genuine.push(ls);
            } else {
                s.impostor.push(ls);
            }
        }
        s
    }

    /// Score set of a single classifier's raw similarity.
    pub fn classifier_score_set(&self, classifier: usize) -> ScoreSet {
        let mut s = ScoreSet::default();
        for p in &self.pairs {
            let ls = LabeledScore {
                probe_id: p.probe_id.clone(),
                gallery_id: p.gallery_id.clone(),
                score: p.raw[classifier],
            };
            if p.genuine {
                s.genuine.push(ls);
            } else {
                s.impostor.push(ls);
            }
        }
        s
    }

    /// Best gallery match per probe (highest fused score, lowest gallery
    /// position on ties), indexed by probe position.
    pub fn best_matches(&self) -> Vec<BestMatch> {
        let mut best: Vec<Option<&PairScore>> = vec![None; self.n_probes];
        for p in &self.pairs {
            let slot = &mut best[p.probe_index];
            let better = match slot {
                None => true,
                Some(cur) => {
                    p.fused > cur.fused
                        || (p.fused == cur.fused && p.gallery_index < cur.gallery_index)
                }
            };
            if better {
                *slot = Some(p);
            }
        }
        best.into_iter()
            .flatten()
            .map(|p| BestMatch {
                probe_id: p.probe_id.clone(),
                gallery_id: p.gallery_id.clone(),
                gallery_position: p.gallery_index + 1,
                distance: p.distance(),
                fused: p.fused,
                decision: p.decision,
                genuine: p.genuine,
            })
            .collect()
    }

    pub fn min_genuine_distance(&self) -> Option<f64> {
        self.pairs
            .iter()
            .filter(|p| p.genuine)
            .map(PairScore::distance)
            .reduce(f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestMatch {
    pub probe_id: String,
    pub gallery_id: String,
    /// 1-based position in the gallery manifest.
    pub gallery_position: usize,
    pub distance: f64,
    pub fused: f64,
    pub decision: Decision,
    pub genuine: bool,
}

/// FAR levels reported in the summary.
pub const REPORT_FARS: [f64; 3] = [0.001, 0.01, 0.1];

#[derive(Debug, Clone)]
pub struct ReportPaths {
    pub scores: PathBuf,
    pub roc: PathBuf,
    pub summary: PathBuf,
}

impl ReportPaths {
    pub fn in_dir(dir: &Path) -> ReportPaths {
        ReportPaths {
            scores: dir.join("scores.csv"),
            roc: dir.join("roc.csv"),
            summary: dir.join("summary.txt"),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn scores_csv(e: &Experiment) -> String {
    let mut out = String::from("probe_id,gallery_id,classifier_id,raw,normalized,fused,decision\n");
    for p in &e.pairs {
        for (c, id) in e.classifier_ids.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.probe_id, p.gallery_id, id, p.raw[c], p.normalized[c], p.fused, p.decision
            );
        }
    }
    out
}

pub fn roc_csv(c: &RocCurve) -> String {
    let mut out = String::from("threshold,far,vr\n");
    for p in &c.points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.far, p.vr);
    }
    out
}

pub fn summary_text(e: &Experiment, c: &RocCurve) -> Result<String> {
    let s = e.score_set();
    let mut out = String::new();
    let _ = writeln!(out, "config_hash = {}", e.config_hash);
    let _ = writeln!(out, "probes = {}", e.n_probes);
    let _ = writeln!(out, "gallery = {}", e.n_gallery);
    let _ = writeln!(out, "genuine_pairs = {}", s.genuine.len());
    let _ = writeln!(out, "impostor_pairs = {}", s.impostor.len());
    match e.min_genuine_distance() {
        Some(d) => {
            let _ = writeln!(out, "euc_dist_min = {d:e}");
        }
        None => {
            let _ = writeln!(out, "euc_dist_min = none");
        }
    }
    let _ = writeln!(out, "auc = {}", auc(&s)?);
    for far in REPORT_FARS {
        let _ = writeln!(out, "vr_at_far_{far} = {}", vr_at_far(c, far));
    }
    let _ = writeln!(out, "genuine_mean_score = {}", mean(&s.genuine_scores()));
    let _ = writeln!(out, "impostor_mean_score = {}", mean(&s.impostor_scores()));
    let _ = writeln!(out);
    let _ = writeln!(out, "probe_id,recognized_id,recognized_index,distance,fused,decision");
    for m in e.best_matches() {
        let _ = writeln!(
            out,
            "{},{},{},{:e},{},{}",
            m.probe_id, m.gallery_id, m.gallery_position, m.distance, m.fused, m.decision
        );
    }
    Ok(out)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Writes `scores.csv`, `roc.csv` and `summary.txt` into `dir`. Nothing is
/// written when either score class is empty.
pub fn emit_report(e: &Experiment, c: &RocCurve, dir: &Path) -> Result<ReportPaths> {
    let s = e.score_set();
    if s.genuine.is_empty() || s.impostor.is_empty() {
        return Err(Error::input(format!(
            "refusing to write a report with {} genuine and {} impostor pairs",
            s.genuine.len(),
            s.impostor.len()
        )));
    }
    let summary = summary_text(e, c)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = ReportPaths::in_dir(dir);
    write_file(&paths.scores, &scores_csv(e))?;
    write_file(&paths.roc, &roc_csv(c))?;
    write_file(&paths.summary, &summary)?;
    Ok(paths)
}
