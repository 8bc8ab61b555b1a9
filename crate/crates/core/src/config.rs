//! Declarative run configuration (TOML) and its content hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fourier::BandSet;
use crate::imgcore::FaceModelConfig;
use crate::ingi::{Diffusion, IngiParams};
use crate::matching::DEFAULT_SIMILARITY_THRESHOLD;
use crate::subspace::{ComponentCount, KernelSpec, SubspaceKind};

/// Magnitudes below this get a zero cosine-phase.
pub const DEFAULT_PHASE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngiConfig {
    /// When false, aligned crops are histogram-equalized instead.
    pub enabled: bool,
    pub sigma: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub diffusion: Diffusion,
    pub kappa: f64,
}

impl Default for IngiConfig {
    fn default() -> Self {
        let p = IngiParams::default();
        IngiConfig {
            enabled: true,
            sigma: p.sigma,
            epsilon: p.epsilon,
            iterations: p.iterations,
            diffusion: p.diffusion,
            kappa: p.kappa,
        }
    }
}

impl IngiConfig {
    pub fn params(&self) -> IngiParams {
        IngiParams {
            sigma: self.sigma,
            epsilon: self.epsilon,
            iterations: self.iterations,
            diffusion: self.diffusion,
            kappa: self.kappa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub bands: [f64; 3],
    pub phase_eps: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            bands: [0.25, 0.5, 0.75],
            phase_eps: DEFAULT_PHASE_EPS,
        }
    }
}

impl FeatureConfig {
    pub fn band_set(&self) -> Result<BandSet> {
        BandSet::from_fractions(self.bands)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubspaceConfig {
    pub kind: SubspaceKind,
    pub kernel: KernelKind,
    /// RBF width; when absent the median heuristic picks one per classifier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub components: ComponentCount,
}

impl Default for SubspaceConfig {
    fn default() -> Self {
        SubspaceConfig {
            kind: SubspaceKind::Kpca,
            kernel: KernelKind::Rbf,
            gamma: None,
            components: ComponentCount::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionPath {
    /// Mean per-classifier similarity against `threshold`.
    Simple,
    /// Gaussian log-likelihood ratio against the calibrated threshold.
    Llr,
}

impl std::str::FromStr for FusionPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(FusionPath::Simple),
            "llr" => Ok(FusionPath::Llr),
            other => Err(Error::config(format!("fusion path must be simple or llr, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub path: FusionPath,
    /// Similarity threshold of the simple path.
    pub threshold: f64,
    /// Development FAR used to calibrate the LLR threshold.
    pub target_far: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            path: FusionPath::Llr,
            threshold: DEFAULT_SIMILARITY_THRESHOLD,
            target_far: 0.01,
        }
    }
}

/// File locations, relative to the config file unless absolute.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub gallery: Option<PathBuf>,
    pub probe: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ingi: IngiConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default = "FaceModelConfig::default_set")]
    pub face_models: Vec<FaceModelConfig>,
    #[serde(default)]
    pub subspace: SubspaceConfig,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub paths: PathConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            ingi: IngiConfig::default(),
            features: FeatureConfig::default(),
            face_models: FaceModelConfig::default_set(),
            subspace: SubspaceConfig::default(),
            fusion: FusionConfig::default(),
            paths: PathConfig::default(),
        }
    }
}

/// Everything that influences trained models and scores; paths excluded.
#[derive(Serialize)]
struct HashedPart<'a> {
    seed: u64,
    ingi: &'a IngiConfig,
    features: &'a FeatureConfig,
    face_models: &'a [FaceModelConfig],
    subspace: &'a SubspaceConfig,
    fusion: &'a FusionConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ingi.enabled {
            self.ingi.params().validate()?;
        }
        self.features.band_set()?;
        if !(self.features.phase_eps > 0.0 && self.features.phase_eps.is_finite()) {
            return Err(Error::config(format!(
                "features.phase_eps must be > 0, got {}",
                self.features.phase_eps
            )));
        }
        if self.face_models.is_empty() {
            return Err(Error::config("at least one face model is required"));
        }
        for (i, fm) in self.face_models.iter().enumerate() {
            fm.validate()
                .map_err(|e| Error::config(format!("face_models[{i}]: {e}")))?;
        }
        if let Some(g) = self.subspace.gamma {
            KernelSpec::Rbf { gamma: g }.validate()?;
        }
        match self.subspace.components {
            ComponentCount::Fixed(0) => {
                return Err(Error::config("subspace.components must be >= 1"));
            }
            ComponentCount::Energy(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(Error::config(format!(
                    "subspace energy fraction must lie in (0, 1], got {f}"
                )));
            }
            _ => {}
        }
        if !self.fusion.threshold.is_finite() {
            return Err(Error::config("fusion.threshold must be finite"));
        }
        if !(self.fusion.target_far >= 0.0 && self.fusion.target_far <= 1.0) {
            return Err(Error::config(format!(
                "fusion.target_far must lie in [0, 1], got {}",
                self.fusion.target_far
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Loads and validates `path`; relative paths inside resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.paths.resolve_against(base);
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON encoding of every model-relevant
    /// field.
    pub fn hash(&self) -> String {
        let part = HashedPart {
            seed: self.seed,
            ingi: &self.ingi,
            features: &self.features,
            face_models: &self.face_models,
            subspace: &self.subspace,
            fusion: &self.fusion,
        };
        let json = serde_json::to_string(&part).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

impl PathConfig {
    pub fn resolve_against(&mut self, base: &Path) {
        for p in [
            &mut self.train,
            &mut self.dev,
            &mut self.gallery,
            &mut self.probe,
            &mut self.model_dir,
            &mut self.report_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Returns the configured path or a validation error naming the key.
pub fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::config(format!("paths.{key} is not set")))
}
