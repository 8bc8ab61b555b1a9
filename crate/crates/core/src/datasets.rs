//! Manifest ingestion and the synthetic reflectance x illumination face
//! generator.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{smooth, EyePair, Image};

pub const MANIFEST_HEADER: [&str; 7] = [
    "path",
    "subject_id",
    "session_tag",
    "left_eye_row",
    "left_eye_col",
    "right_eye_row",
    "right_eye_col",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Session {
    Controlled,
    Uncontrolled,
}

impl fmt::Display for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Session::Controlled => "controlled",
            Session::Uncontrolled => "uncontrolled",
        })
    }
}

impl FromStr for Session {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "controlled" => Ok(Session::Controlled),
            "uncontrolled" => Ok(Session::Uncontrolled),
            other => Err(format!("unknown session tag {other:?}")),
        }
    }
}

/// One manifest line, before the image is loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub path: String,
    pub subject_id: String,
    pub session: Session,
    pub eyes: EyePair,
}

/// A manifest row with its image.
#[derive(Debug, Clone)]
pub struct Record {
    /// Path exactly as written in the manifest; used as the record id.
    pub id: String,
    pub subject_id: String,
    pub session: Session,
    pub eyes: EyePair,
    pub image: Image,
}

fn manifest_err(path: &Path, row: usize, msg: impl Into<String>) -> Error {
    Error::Manifest {
        path: path.to_path_buf(),
        row,
        msg: msg.into(),
    }
}

/// Parses the manifest rows without touching the images. Row numbers in
/// errors are file line numbers (the header is line 1).
pub fn read_manifest_rows(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| manifest_err(path, line, e.to_string()))?;
        if i == 0 {
            let header: Vec<&str> = rec.iter().map(str::trim).collect();
            if header != MANIFEST_HEADER {
                return Err(manifest_err(
                    path,
                    line,
                    format!("expected header {}", MANIFEST_HEADER.join(",")),
                ));
            }
            continue;
        }
        if rec.len() != MANIFEST_HEADER.len() {
            return Err(manifest_err(
                path,
                line,
                format!("expected {} columns, found {}", MANIFEST_HEADER.len(), rec.len()),
            ));
        }
        let field = |k: usize| rec[k].trim();
        let coord = |k: usize| -> Result<f64> {
            field(k)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    manifest_err(path, line, format!("{} is not a number: {:?}", MANIFEST_HEADER[k], field(k)))
                })
        };
        if field(0).is_empty() || field(1).is_empty() {
            return Err(manifest_err(path, line, "path and subject_id must be non-empty"));
        }
        let session = field(2)
            .parse::<Session>()
            .map_err(|e| manifest_err(path, line, e))?;
        rows.push(ManifestRow {
            path: field(0).to_string(),
            subject_id: field(1).to_string(),
            session,
            eyes: EyePair::new((coord(3)?, coord(4)?), (coord(5)?, coord(6)?)),
        });
    }
    if rows.is_empty() && reader.position().line() == 1 {
        // empty file: no header at all
        return Err(manifest_err(path, 1, "missing header"));
    }
    Ok(rows)
}

/// Loads a manifest and its images. Image paths resolve relative to the
/// manifest's directory; row order is preserved.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let rows = read_manifest_rows(path)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, row)| {
            let line = i + 2;
            let img_path = resolve(&base, &row.path);
            let image = Image::load(&img_path)
                .map_err(|e| manifest_err(path, line, format!("cannot load image: {e}")))?;
            row.eyes
                .validate(image.width(), image.height())
                .map_err(|e| manifest_err(path, line, e.to_string()))?;
            Ok(Record {
                id: row.path,
                subject_id: row.subject_id,
                session: row.session,
                eyes: row.eyes,
                image,
            })
        })
        .collect()
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str(&MANIFEST_HEADER.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.path, r.subject_id, r.session, r.eyes.left.0, r.eyes.left.1, r.eyes.right.0, r.eyes.right.1
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_subjects: usize,
    pub images_per_subject: usize,
    pub width: usize,
    pub height: usize,
    /// Max/min ratio of the illumination field.
    pub illum_strength: f64,
    pub noise_sigma: f64,
    /// Prefix for generated subject ids (`s000`, `s001`, ...).
    pub subject_prefix: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            n_subjects: 10,
            images_per_subject: 4,
            width: 64,
            height: 80,
            illum_strength: 4.0,
            noise_sigma: 0.01,
            subject_prefix: "s".into(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::config("subjects must be >= 1"));
        }
        if self.images_per_subject == 0 {
            return Err(Error::config("per-subject image count must be >= 1"));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::config(format!(
                "synthetic images must be at least 16x16, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.illum_strength >= 1.0 && self.illum_strength.is_finite()) {
            return Err(Error::config(format!(
                "illum_strength must be >= 1, got {}",
                self.illum_strength
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Illumination {
    Uniform,
    /// Smooth step across a random half-plane boundary.
    Ramp,
    /// Low-order 2-D polynomial.
    Quadratic,
}

#[derive(Debug, Clone)]
pub struct SynthImage {
    pub file_name: String,
    pub subject_index: usize,
    /// Position within the subject; 0 is the controlled capture.
    pub capture_index: usize,
    pub subject_id: String,
    pub session: Session,
    pub eyes: EyePair,
    pub illumination_kind: Illumination,
    pub illumination: Image,
    pub image: Image,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub spec: SynthSpec,
    /// Per-subject reflectance patterns.
    pub reflectances: Vec<Image>,
    pub images: Vec<SynthImage>,
}

/// Eye blob centers used by the generator for a `width x height` raster.
pub fn canonical_eyes(width: usize, height: usize) -> EyePair {
    let row = (0.375 * height as f64).round();
    let center = (width / 2) as f64;
    let half = (width as f64 * 3.0 / 16.0).round();
    EyePair::new((row, center - half), (row, center + half))
}

/// Band-limited noise around mid-gray with two dark eye blobs.
fn reflectance(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Image {
    let noise = Image::from_fn(width, height, |_, _| rng.sample::<f64, _>(StandardNormal));
    let smoothed = smooth(&noise, 1.5).expect("positive sigma");
    let mean = smoothed.mean();
    let sd = (smoothed.pixels().iter().map(|p| (p - mean).powi(2)).sum::<f64>()
        / smoothed.pixels().len() as f64)
        .sqrt()
        .max(1e-12);
    let eyes = canonical_eyes(width, height);
    let blob_sigma = (width as f64 / 32.0).max(1.5);
    Image::from_fn(width, height, |r, c| {
        let base = (0.55 + 0.3 * (smoothed.get(r, c) - mean) / sd).clamp(0.1, 1.0);
        let mut shade = 1.0;
        for (er, ec) in [eyes.left, eyes.right] {
            let d2 = (r as f64 - er).powi(2) + (c as f64 - ec).powi(2);
            shade *= 1.0 - 0.6 * (-d2 / (2.0 * blob_sigma * blob_sigma)).exp();
        }
        base * shade
    })
}

/// Multiplicative field in `[1 / strength, 1]`.
fn illumination_field(
    rng: &mut ChaCha8Rng,
    width: usize,
    height: usize,
    strength: f64,
) -> (Illumination, Image) {
    let lo = 1.0 / strength;
    let kind = if rng.random_bool(0.5) {
        Illumination::Ramp
    } else {
        Illumination::Quadratic
    };
    let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
    let unit = match kind {
        Illumination::Ramp => {
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let offset = rng.random_range(-0.15..0.15) * width as f64;
            let soft = width.max(height) as f64 / 6.0;
            let (s, c) = theta.sin_cos();
            Image::from_fn(width, height, |r, col| {
                let t = (col as f64 - cx) * c + (r as f64 - cy) * s - offset;
                1.0 / (1.0 + (-t / soft).exp())
            })
        }
        _ => {
            let coef: Vec<f64> = (0..5).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            Image::from_fn(width, height, |r, col| {
                let x = (col as f64 - cx) / cx.max(1.0);
                let y = (r as f64 - cy) / cy.max(1.0);
                coef[0] * x + coef[1] * y + coef[2] * x * x + coef[3] * y * y + coef[4] * x * y
            })
        }
    };
    let (qmin, qmax) = (unit.min(), unit.max());
    let range = qmax - qmin;
    let field = if range > 0.0 {
        unit.map(|q| lo + (1.0 - lo) * (q - qmin) / range)
    } else {
        Image::filled(width, height, 1.0)
    };
    (kind, field)
}

/// Deterministic synthetic dataset. Image 0 of every subject is the
/// controlled capture (uniform lighting); the rest carry a random smooth
/// illumination field with max/min ratio `illum_strength`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::config(e.to_string()))?;
    let eyes = canonical_eyes(w, h);
    let mut reflectances = Vec::with_capacity(spec.n_subjects);
    let mut images = Vec::with_capacity(spec.n_subjects * spec.images_per_subject);
    for s in 0..spec.n_subjects {
        let subject_id = format!("{}{:03}", spec.subject_prefix, s);
        let rho = reflectance(&mut rng, w, h);
        for k in 0..spec.images_per_subject {
            let (kind, field, session) = if k == 0 || spec.illum_strength == 1.0 {
                (Illumination::Uniform, Image::filled(w, h, 1.0), Session::Controlled)
            } else {
                let (kind, field) = illumination_field(&mut rng, w, h, spec.illum_strength);
                (kind, field, Session::Uncontrolled)
            };
            let pixels = rho
                .pixels()
                .iter()
                .zip(field.pixels())
                .map(|(r, l)| {
                    let n = if spec.noise_sigma > 0.0 {
                        noise.sample(&mut rng)
                    } else {
                        0.0
                    };
                    (r * l + n).clamp(0.0, 1.0)
                })
                .collect();
            images.push(SynthImage {
                file_name: format!("{subject_id}_{k:02}.pgm"),
                subject_index: s,
                capture_index: k,
                subject_id: subject_id.clone(),
                session,
                eyes,
                illumination_kind: kind,
                illumination: field,
                image: Image::new(w, h, pixels)?,
            });
        }
        reflectances.push(rho);
    }
    Ok(SynthDataset {
        spec: spec.clone(),
        reflectances,
        images,
    })
}

impl SynthDataset {
    pub fn manifest_rows(&self, image_dir: &str) -> Vec<ManifestRow> {
        self.images
            .iter()
            .map(|im| ManifestRow {
                path: format!("{image_dir}/{}", im.file_name),
                subject_id: im.subject_id.clone(),
                session: im.session,
                eyes: im.eyes,
            })
            .collect()
    }

    /// Writes every image as PGM under `dir/image_dir/`.
    pub fn write_images(&self, dir: &Path, image_dir: &str) -> Result<()> {
        let target = dir.join(image_dir);
        std::fs::create_dir_all(&target).map_err(|e| Error::io(&target, e))?;
        for im in &self.images {
            im.image.save(target.join(&im.file_name))?;
        }
        Ok(())
    }
}
