//! Pairwise scoring, z-normalization, Gaussian log-likelihood-ratio fusion
//! and the accept/reject rule.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-6;

/// Default similarity threshold of the simple decision path.
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.85;

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::input(format!(
            "vector lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Maps a distance to `1 / (1 + d)`.
pub fn to_similarity(d: f64) -> f64 {
    1.0 / (1.0 + d)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-classifier impostor statistics for z-normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ZNorm {
    /// `impostor[c]` holds the development impostor scores of classifier `c`.
    pub fn fit(impostor: &[Vec<f64>]) -> Result<ZNorm> {
        if impostor.is_empty() {
            return Err(Error::config("z-norm needs at least one classifier"));
        }
        let mut mean = Vec::with_capacity(impostor.len());
        let mut std = Vec::with_capacity(impostor.len());
        for (c, scores) in impostor.iter().enumerate() {
            if scores.len() < 2 {
                return Err(Error::config(format!(
                    "classifier {c} has {} development impostor scores, need at least 2",
                    scores.len()
                )));
            }
            let (m, s) = mean_std(scores);
            mean.push(m);
            std.push(s.max(STD_FLOOR));
        }
        Ok(ZNorm { mean, std })
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(s, (m, sd))| (s - m) / sd)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

impl Gaussian {
    pub fn fit(xs: &[f64]) -> Gaussian {
        let (mean, std) = mean_std(xs);
        Gaussian {
            mean,
            std: std.max(STD_FLOOR),
        }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        -0.5 * z * z - self.std.ln() - 0.5 * (2.0 * PI).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassConditional {
    pub genuine: Gaussian,
    pub impostor: Gaussian,
}

/// Gaussian class-conditional densities of z-normalized scores, one entry
/// per classifier, plus the fused-score threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub znorm: ZNorm,
    pub classes: Vec<ClassConditional>,
    pub threshold: f64,
}

/// Labeled development scores: `raw[c]` is classifier `c`'s raw score.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    pub raw: Vec<f64>,
    pub genuine: bool,
}

impl FusionModel {
    /// Fits z-norm on impostor scores, the class densities on the normalized
    /// scores, and calibrates the threshold at `target_far`.
    pub fn fit(dev: &[LabeledScores], target_far: f64) -> Result<FusionModel> {
        let classifiers = dev.first().map(|s| s.raw.len()).unwrap_or(0);
        if classifiers == 0 {
            return Err(Error::config("fusion needs development scores"));
        }
        if dev.iter().any(|s| s.raw.len() != classifiers) {
            return Err(Error::input("development score vectors differ in length"));
        }
        let n_gen = dev.iter().filter(|s| s.genuine).count();
        let n_imp = dev.len() - n_gen;
        if n_gen < 2 || n_imp < 2 {
            return Err(Error::config(format!(
                "fusion needs at least 2 genuine and 2 impostor development pairs, got {n_gen} genuine and {n_imp} impostor"
            )));
        }
        let impostor_raw: Vec<Vec<f64>> = (0..classifiers)
            .map(|c| dev.iter().filter(|s| !s.genuine).map(|s| s.raw[c]).collect())
            .collect();
        let znorm = ZNorm::fit(&impostor_raw)?;
        let normalized: Vec<(Vec<f64>, bool)> =
            dev.iter().map(|s| (znorm.apply(&s.raw), s.genuine)).collect();
        let classes = (0..classifiers)
            .map(|c| {
                let pick = |g: bool| -> Vec<f64> {
                    normalized.iter().filter(|(_, gen)| *gen == g).map(|(t, _)| t[c]).collect()
                };
                ClassConditional {
                    genuine: Gaussian::fit(&pick(true)),
                    impostor: Gaussian::fit(&pick(false)),
                }
            })
            .collect();
        let mut model = FusionModel {
            znorm,
            classes,
            threshold: 0.0,
        };
        let impostor_fused: Vec<f64> = normalized
            .iter()
            .filter(|(_, g)| !g)
            .map(|(t, _)| model.llr(t))
            .collect();
        model.threshold = calibrate_threshold(&impostor_fused, target_far)?;
        Ok(model)
    }

    pub fn classifiers(&self) -> usize {
        self.classes.len()
    }

    /// Sum over classifiers of `log N(t; genuine) - log N(t; impostor)`.
    pub fn llr(&self, normalized: &[f64]) -> f64 {
        llr_fuse(&self.classes, normalized)
    }
}

pub fn llr_fuse(classes: &[ClassConditional], normalized: &[f64]) -> f64 {
    classes
        .iter()
        .zip(normalized)
        .map(|(cc, &t)| cc.genuine.log_pdf(t) - cc.impostor.log_pdf(t))
        .sum()
}

/// Lowest threshold whose impostor acceptance rate (`score >= threshold`)
/// does not exceed `target_far`. When even the top impostor score would
/// exceed the budget, the threshold sits just above it.
pub fn calibrate_threshold(impostor: &[f64], target_far: f64) -> Result<f64> {
    if impostor.is_empty() {
        return Err(Error::config("threshold calibration needs impostor scores"));
    }
    if !(0.0..=1.0).contains(&target_far) {
        return Err(Error::config(format!("target FAR {target_far} must lie in [0, 1]")));
    }
    let mut sorted = impostor.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let budget = (target_far * sorted.len() as f64 + 1e-9).floor() as usize;
    let mut best = None;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        // j impostors score >= v
        if j <= budget {
            best = Some(v);
        } else {
            break;
        }
        i = j;
    }
    Ok(best.unwrap_or_else(|| sorted[0].next_up()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::Accept => "accept",
            Decision::Reject => "reject",
        })
    }
}

/// Accept iff `score >= threshold`.
pub fn decide(score: f64, threshold: f64) -> Decision {
    if score >= threshold {
        Decision::Accept
    } else {
        Decision::Reject
    }
}
