use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ingiface::config::{FusionPath, KernelKind, RunConfig};
use ingiface::datasets::SynthSpec;
use ingiface::subspace::{ComponentCount, SubspaceKind};
use ingiface::{workflow, Error};

/// Illumination-insensitive face verification with INGI preprocessing,
/// hybrid Fourier features, PCA/KPCA classifiers and score fusion.
///
/// Exit status: 0 on success, 1 on runtime errors, 2 on usage or
/// validation errors.
#[derive(Parser)]
#[command(name = "ingiface", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with train/dev/gallery/probe manifests
    /// and a ready-to-use config.toml.
    Synth(SynthArgs),
    /// Train one subspace classifier per (face model, domain) and the
    /// fusion model; writes them to the model directory.
    Train(RunArgs),
    /// Match every probe against the gallery and print the best match.
    Verify(VerifyArgs),
    /// Score all probe/gallery pairs and write scores, ROC and summary.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// RNG seed; identical seeds give identical datasets.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of evaluation subjects (same count for train and dev).
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    subjects: u32,
    /// Images per subject; image 0 is the controlled capture.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    per_subject: u32,
    /// Image width in pixels.
    #[arg(long, default_value_t = 64)]
    width: usize,
    /// Image height in pixels.
    #[arg(long, default_value_t = 80)]
    height: usize,
    /// Max/min ratio of the illumination field (>= 1).
    #[arg(long, default_value_t = 4.0)]
    illum_strength: f64,
    /// Standard deviation of additive Gaussian pixel noise.
    #[arg(long, default_value_t = 0.01)]
    noise_sigma: f64,
}

/// Overrides applied on top of the config file. Model-relevant overrides
/// change the config hash, so pass the same ones to train, verify and
/// evaluate.
#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Training manifest.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Development manifest used to fit score fusion.
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Directory holding trained models.
    #[arg(long)]
    model_dir: Option<PathBuf>,
    /// Subspace method.
    #[arg(long, value_parser = ["pca", "kpca"])]
    subspace: Option<String>,
    /// KPCA kernel.
    #[arg(long, value_parser = ["linear", "rbf"])]
    kernel: Option<String>,
    /// RBF gamma (default: median heuristic).
    #[arg(long)]
    gamma: Option<f64>,
    /// Fixed number of components per classifier.
    #[arg(long, conflicts_with = "energy")]
    components: Option<usize>,
    /// Keep the fewest components carrying this eigenvalue mass fraction.
    #[arg(long)]
    energy: Option<f64>,
    /// Score fusion path.
    #[arg(long, value_parser = ["simple", "llr"])]
    fusion: Option<String>,
    /// Similarity threshold of the simple fusion path.
    #[arg(long)]
    threshold: Option<f64>,
    /// Development FAR used to calibrate the LLR threshold.
    #[arg(long)]
    target_far: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Gallery (enrollment) manifest.
    #[arg(long)]
    gallery: Option<PathBuf>,
    /// Probe manifest.
    #[arg(long)]
    probe: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    verify: VerifyArgs,
    /// Report output directory.
    #[arg(long)]
    report_dir: Option<PathBuf>,
    /// Also train a histogram-equalization-only pipeline (no INGI) from the
    /// same manifests and report it under <report_dir>/no-ingi.
    #[arg(long)]
    no_ingi: bool,
}

impl RunArgs {
    fn load(&self) -> ingiface::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        let p = &mut cfg.paths;
        for (slot, v) in [
            (&mut p.train, &self.train),
            (&mut p.dev, &self.dev),
            (&mut p.model_dir, &self.model_dir),
        ] {
            if v.is_some() {
                slot.clone_from(v);
            }
        }
        match self.subspace.as_deref() {
            Some("pca") => cfg.subspace.kind = SubspaceKind::Pca,
            Some("kpca") => cfg.subspace.kind = SubspaceKind::Kpca,
            _ => {}
        }
        match self.kernel.as_deref() {
            Some("linear") => cfg.subspace.kernel = KernelKind::Linear,
            Some("rbf") => cfg.subspace.kernel = KernelKind::Rbf,
            _ => {}
        }
        if self.gamma.is_some() {
            cfg.subspace.gamma = self.gamma;
        }
        if let Some(k) = self.components {
            cfg.subspace.components = ComponentCount::Fixed(k);
        }
        if let Some(f) = self.energy {
            cfg.subspace.components = ComponentCount::Energy(f);
        }
        if let Some(f) = &self.fusion {
            cfg.fusion.path = f.parse::<FusionPath>()?;
        }
        if let Some(t) = self.threshold {
            cfg.fusion.threshold = t;
        }
        if let Some(t) = self.target_far {
            cfg.fusion.target_far = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl VerifyArgs {
    fn load(&self) -> ingiface::Result<RunConfig> {
        let mut cfg = self.run.load()?;
        if self.gallery.is_some() {
            cfg.paths.gallery.clone_from(&self.gallery);
        }
        if self.probe.is_some() {
            cfg.paths.probe.clone_from(&self.probe);
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> ingiface::Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let spec = SynthSpec {
                seed: a.seed,
                n_subjects: a.subjects as usize,
                images_per_subject: a.per_subject as usize,
                width: a.width,
                height: a.height,
                illum_strength: a.illum_strength,
                noise_sigma: a.noise_sigma,
                ..SynthSpec::default()
            };
            let cfg = workflow::synth(&spec, &a.out)?;
            println!("wrote {}", cfg.display());
        }
        Command::Train(a) => {
            let cfg = a.load()?;
            let models = workflow::train(&cfg)?;
            println!("config_hash = {}", models.config_hash);
            for c in &models.classifiers {
                println!("{} k = {}", c.id, c.model.k());
            }
            println!("fusion_threshold = {}", models.fusion.threshold);
        }
        Command::Verify(a) => {
            let cfg = a.load()?;
            let out = workflow::verify(&cfg)?;
            println!("probe_id,recognized_id,recognized_index,distance,fused,decision");
            for m in &out.matches {
                println!(
                    "{},{},{},{:e},{},{}",
                    m.probe_id, m.gallery_id, m.gallery_position, m.distance, m.fused, m.decision
                );
            }
            if let Some(d) = out.min_distance {
                println!("euc_dist_min = {d:e}");
            }
            println!("elapsed_seconds = {:.3}", out.seconds);
        }
        Command::Evaluate(a) => {
            let mut cfg = a.verify.load()?;
            if a.report_dir.is_some() {
                cfg.paths.report_dir.clone_from(&a.report_dir);
            }
            let r = workflow::evaluate(&cfg, a.no_ingi)?;
            println!("report = {}", r.main.paths.summary.display());
            println!("vr_at_far_0.01 = {}", r.main.vr_at_1pct);
            if let Some(ab) = &r.ablation {
                println!("no_ingi_report = {}", ab.paths.summary.display());
                println!("no_ingi_vr_at_far_0.01 = {}", ab.vr_at_1pct);
            }
            println!("elapsed_seconds = {:.3}", r.main.seconds);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_validation() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}
