//! File-level commands shared by the CLI and the end-to-end tests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use crate::config::{require, PathConfig, RunConfig};
use crate::datasets::{
    generate_synthetic, load_manifest, write_manifest, ManifestRow, SynthDataset, SynthSpec,
};
use crate::error::{Error, Result};
use crate::evalproto::{emit_report, roc, vr_at_far, BestMatch, Experiment, ReportPaths};
use crate::pipeline::{run_experiment, Models};

pub const IMAGE_DIR: &str = "images";
pub const TIMING_FILE: &str = "timing.txt";
pub const ABLATION_DIR: &str = "no-ingi";

/// Subject-id prefixes of the training and development populations.
pub const TRAIN_PREFIX: &str = "t";
pub const DEV_PREFIX: &str = "d";
/// Training and development populations have at least this many images per
/// subject, so both contain genuine pairs.
pub const MIN_PER_SUBJECT: usize = 2;

/// Seed of an auxiliary population, derived from the evaluation seed so
/// populations never share reflectances.
pub fn derived_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_add(stream)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .rotate_left(29)
        ^ 0xD1B5_4A32_D192_ED03
}

/// Writes a complete synthetic protocol under `out`. Three disjoint
/// subject populations share one spec:
///
/// * `gallery.csv`: image 0 (controlled) of every evaluation subject
/// * `probe.csv`: the remaining evaluation images
/// * `all.csv`: every evaluation image
/// * `train.csv`: the subspace training population
/// * `dev.csv`: the fusion development population
/// * `config.toml`: default run config pointing at the files above
pub fn synth(spec: &SynthSpec, out: &Path) -> Result<PathBuf> {
    spec.validate()?;
    let eval = generate_synthetic(spec)?;
    let aux = |stream: u64, prefix: &str| {
        generate_synthetic(&SynthSpec {
            seed: derived_seed(spec.seed, stream),
            images_per_subject: spec.images_per_subject.max(MIN_PER_SUBJECT),
            subject_prefix: format!("{prefix}{}", spec.subject_prefix),
            ..spec.clone()
        })
    };
    let train = aux(1, TRAIN_PREFIX)?;
    let dev = aux(2, DEV_PREFIX)?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    eval.write_images(out, IMAGE_DIR)?;
    train.write_images(out, IMAGE_DIR)?;
    dev.write_images(out, IMAGE_DIR)?;

    let select = |ds: &SynthDataset, pick: fn(usize) -> bool| -> Vec<ManifestRow> {
        ds.manifest_rows(IMAGE_DIR)
            .into_iter()
            .zip(&ds.images)
            .filter(|(_, im)| pick(im.capture_index))
            .map(|(r, _)| r)
            .collect()
    };
    write_manifest(out.join("all.csv"), &eval.manifest_rows(IMAGE_DIR))?;
    write_manifest(out.join("gallery.csv"), &select(&eval, |k| k == 0))?;
    write_manifest(out.join("probe.csv"), &select(&eval, |k| k > 0))?;
    write_manifest(out.join("train.csv"), &train.manifest_rows(IMAGE_DIR))?;
    write_manifest(out.join("dev.csv"), &dev.manifest_rows(IMAGE_DIR))?;

    let cfg = RunConfig {
        seed: spec.seed,
        paths: PathConfig {
            train: Some("train.csv".into()),
            dev: Some("dev.csv".into()),
            gallery: Some("gallery.csv".into()),
            probe: Some("probe.csv".into()),
            model_dir: Some("models".into()),
            report_dir: Some("report".into()),
        },
        ..RunConfig::default()
    };
    let path = out.join("config.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Trains from the configured train/dev manifests and persists the models.
pub fn train(cfg: &RunConfig) -> Result<Models> {
    let model_dir = require(&cfg.paths.model_dir, "model_dir")?;
    let models = train_in_memory(cfg)?;
    models.save(model_dir, cfg)?;
    info!("models written to {}", model_dir.display());
    Ok(models)
}

pub fn train_in_memory(cfg: &RunConfig) -> Result<Models> {
    cfg.validate()?;
    let train = load_manifest(require(&cfg.paths.train, "train")?)?;
    let dev = load_manifest(require(&cfg.paths.dev, "dev")?)?;
    Models::train(cfg, &train, &dev)
}

/// Scores the configured probes against the configured gallery.
pub fn experiment(cfg: &RunConfig, models: &Models) -> Result<Experiment> {
    let gallery = load_manifest(require(&cfg.paths.gallery, "gallery")?)?;
    let probes = load_manifest(require(&cfg.paths.probe, "probe")?)?;
    run_experiment(models, cfg, &gallery, &probes)
}

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub matches: Vec<BestMatch>,
    pub min_distance: Option<f64>,
    pub seconds: f64,
}

pub fn verify(cfg: &RunConfig) -> Result<VerifyOutcome> {
    let start = Instant::now();
    let models = Models::load(require(&cfg.paths.model_dir, "model_dir")?, cfg)?;
    let e = experiment(cfg, &models)?;
    let min_distance = e
        .pairs
        .iter()
        .map(|p| p.distance())
        .reduce(f64::min);
    Ok(VerifyOutcome {
        matches: e.best_matches(),
        min_distance,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub paths: ReportPaths,
    pub vr_at_1pct: f64,
    pub genuine_mean: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct EvaluateResult {
    pub main: EvalOutcome,
    pub ablation: Option<EvalOutcome>,
}

fn report(cfg: &RunConfig, models: &Models, dir: &Path) -> Result<EvalOutcome> {
    let start = Instant::now();
    let e = experiment(cfg, models)?;
    let s = e.score_set();
    let c = roc(&s)?;
    let paths = emit_report(&e, &c, dir)?;
    let seconds = start.elapsed().as_secs_f64();
    let timing = dir.join(TIMING_FILE);
    std::fs::write(&timing, format!("elapsed_seconds = {seconds:.3}\n"))
        .map_err(|e| Error::io(&timing, e))?;
    let g = s.genuine_scores();
    Ok(EvalOutcome {
        paths,
        vr_at_1pct: vr_at_far(&c, 0.01),
        genuine_mean: g.iter().sum::<f64>() / g.len() as f64,
        seconds,
    })
}

/// Evaluates the persisted models. With `ablation`, also trains a second
/// model set in memory with INGI replaced by histogram equalization and
/// reports it under `report_dir/no-ingi`.
pub fn evaluate(cfg: &RunConfig, ablation: bool) -> Result<EvaluateResult> {
    let report_dir = require(&cfg.paths.report_dir, "report_dir")?;
    let models = Models::load(require(&cfg.paths.model_dir, "model_dir")?, cfg)?;
    let main = report(cfg, &models, report_dir)?;
    let ablation = if ablation {
        let mut plain = cfg.clone();
        plain.ingi.enabled = false;
        let models = train_in_memory(&plain)?;
        Some(report(&plain, &models, &report_dir.join(ABLATION_DIR))?)
    } else {
        None
    };
    Ok(EvaluateResult { main, ablation })
}
