//! Grayscale rasters, eye-based geometric normalization, histogram
//! equalization and Gaussian smoothing.

use std::io::Write;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder, ImageFormat, Luma};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major grayscale raster with real-valued pixels.
///
/// Loaded images live in `[0, 1]`; processed images (gradients, spectra,
/// reconstructions) are unbounded but always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::input(format!(
                "pixel buffer has {} values, expected {}x{} = {}",
                pixels.len(),
                width,
                height,
                width * height
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !p.is_finite()) {
            return Err(Error::input(format!("non-finite pixel at index {i}")));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Image {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Image {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.pixels[row * self.width + col] = value;
    }

    /// Pixel lookup with coordinates clamped to the border (replicate padding).
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> f64 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.get(r, c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.check_same_size(other)?;
        Ok(Image {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .zip(&other.pixels)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn check_same_size(&self, other: &Image) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::input(format!(
                "dimension mismatch: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Bilinear sample at subpixel `(row, col)`. Neighbours outside the raster
    /// contribute zero.
    pub fn sample_bilinear(&self, row: f64, col: f64) -> f64 {
        let r0 = row.floor();
        let c0 = col.floor();
        let fr = row - r0;
        let fc = col - c0;
        let (r0, c0) = (r0 as isize, c0 as isize);
        let at = |r: isize, c: isize| -> f64 {
            if r < 0 || c < 0 || r >= self.height as isize || c >= self.width as isize {
                0.0
            } else {
                self.get(r as usize, c as usize)
            }
        };
        let mut v = 0.0;
        for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
            for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                let w = wr * wc;
                if w != 0.0 {
                    v += w * at(r0 + dr, c0 + dc);
                }
            }
        }
        v
    }

    /// Reads an 8-bit grayscale PGM (P5) or PNG; pixel `p` becomes `p / 255`.
    pub fn load(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let format = image_format(path)?;
        let decoded = image::load_from_memory_with_format(&bytes, format).map_err(|e| {
            Error::Image {
                path: path.to_path_buf(),
                msg: e.to_string(),
            }
        })?;
        let gray = decoded.to_luma8();
        let (w, h) = gray.dimensions();
        let pixels = gray.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
        Image::new(w as usize, h as usize, pixels)
    }

    /// Writes an 8-bit grayscale PGM (P5) or PNG, chosen by file extension.
    /// Values map to `round(clamp(v, 0, 1) * 255)`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let format = image_format(path)?;
        let buf = GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([to_u8(self.get(y as usize, x as usize))])
        });
        let to_err = |e: image::ImageError| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image {
                path: path.to_path_buf(),
                msg: other.to_string(),
            },
        };
        if format == ImageFormat::Pnm {
            let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut out = std::io::BufWriter::new(file);
            PnmEncoder::new(&mut out)
                .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
                .write_image(buf.as_raw(), buf.width(), buf.height(), ExtendedColorType::L8)
                .map_err(to_err)?;
            out.flush().map_err(|e| Error::io(path, e))
        } else {
            buf.save_with_format(path, format).map_err(to_err)
        }
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn image_format(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("pgm") => Ok(ImageFormat::Pnm),
        Some("png") => Ok(ImageFormat::Png),
        _ => Err(Error::Image {
            path: path.to_path_buf(),
            msg: "unsupported image extension (expected .pgm or .png)".into(),
        }),
    }
}

/// Subpixel `(row, col)` position.
pub type Point = (f64, f64);

/// Eye centers in image coordinates. `left` is the eye that appears on the
/// left side of the image (smaller column).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyePair {
    pub left: Point,
    pub right: Point,
}

impl EyePair {
    pub fn new(left: Point, right: Point) -> Self {
        EyePair { left, right }
    }

    pub fn distance(&self) -> f64 {
        let dr = self.right.0 - self.left.0;
        let dc = self.right.1 - self.left.1;
        dr.hypot(dc)
    }

    pub fn midpoint(&self) -> Point {
        (
            0.5 * (self.left.0 + self.right.0),
            0.5 * (self.left.1 + self.right.1),
        )
    }

    /// Checks the pair against an image of the given size.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        for (name, (r, c)) in [("left", self.left), ("right", self.right)] {
            if !r.is_finite() || !c.is_finite() {
                return Err(Error::input(format!("{name} eye coordinate is not finite")));
            }
            if r < 0.0 || c < 0.0 || r > (height - 1) as f64 || c > (width - 1) as f64 {
                return Err(Error::input(format!(
                    "{name} eye ({r}, {c}) lies outside the {width}x{height} image"
                )));
            }
        }
        if self.distance() <= 0.0 {
            return Err(Error::input("eye positions coincide"));
        }
        Ok(())
    }
}

/// One geometric normalization ("face model"): target eye spacing and crop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceModelConfig {
    pub eye_distance: f64,
    pub out_width: usize,
    pub out_height: usize,
    pub eye_row: f64,
    pub eye_center_col: f64,
}

impl FaceModelConfig {
    pub fn new(eye_distance: f64, out_width: usize, out_height: usize) -> Self {
        FaceModelConfig {
            eye_distance,
            out_width,
            out_height,
            eye_row: out_height as f64 * 0.375,
            eye_center_col: (out_width as f64 - 1.0) / 2.0,
        }
    }

    /// Three models on a 64x80 crop with eye spacing 24, 32 and 40 px.
    pub fn default_set() -> Vec<FaceModelConfig> {
        [24.0, 32.0, 40.0]
            .into_iter()
            .map(|d| FaceModelConfig::new(d, 64, 80))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_width == 0 || self.out_height == 0 {
            return Err(Error::config("face model crop must be non-empty"));
        }
        if !(self.eye_distance > 0.0 && self.eye_distance < self.out_width as f64) {
            return Err(Error::config(format!(
                "eye_distance {} must lie in (0, {})",
                self.eye_distance, self.out_width
            )));
        }
        let (l, r) = self.target_eyes();
        let inside = |(row, col): Point| {
            row >= 0.0
                && col >= 0.0
                && row <= (self.out_height - 1) as f64
                && col <= (self.out_width - 1) as f64
        };
        if !inside(l) || !inside(r) {
            return Err(Error::config("eye placement falls outside the crop"));
        }
        Ok(())
    }

    /// Where the left and right eyes land in the normalized crop.
    pub fn target_eyes(&self) -> (Point, Point) {
        let half = self.eye_distance / 2.0;
        (
            (self.eye_row, self.eye_center_col - half),
            (self.eye_row, self.eye_center_col + half),
        )
    }
}

/// Similarity transform (rotation, uniform scale, translation) taking the
/// source eye pair onto the target eye pair. Points are encoded as
/// `col + i*row`.
#[derive(Debug, Clone, Copy)]
pub struct SimilarityTransform {
    scale_rot: Complex64,
    src_anchor: Complex64,
    dst_anchor: Complex64,
}

fn to_complex((row, col): Point) -> Complex64 {
    Complex64::new(col, row)
}

fn from_complex(z: Complex64) -> Point {
    (z.im, z.re)
}

impl SimilarityTransform {
    pub fn from_eyes(src: &EyePair, dst: (Point, Point)) -> Self {
        let s = to_complex(src.right) - to_complex(src.left);
        let t = to_complex(dst.1) - to_complex(dst.0);
        SimilarityTransform {
            scale_rot: t / s,
            src_anchor: to_complex(src.left),
            dst_anchor: to_complex(dst.0),
        }
    }

    pub fn forward(&self, p: Point) -> Point {
        from_complex(self.scale_rot * (to_complex(p) - self.src_anchor) + self.dst_anchor)
    }

    pub fn inverse(&self, p: Point) -> Point {
        from_complex((to_complex(p) - self.dst_anchor) / self.scale_rot + self.src_anchor)
    }
}

/// Warps `img` so the eyes land at the positions configured in `cfg`.
///
/// The right eye must have a larger column than the left one; a swapped pair
/// would produce an upside-down face and is rejected.
pub fn align(img: &Image, eyes: &EyePair, cfg: &FaceModelConfig) -> Result<Image> {
    eyes.validate(img.width(), img.height())?;
    cfg.validate()?;
    if eyes.right.1 <= eyes.left.1 {
        return Err(Error::input(format!(
            "right eye column {} is not to the right of left eye column {}",
            eyes.right.1, eyes.left.1
        )));
    }
    let xf = SimilarityTransform::from_eyes(eyes, cfg.target_eyes());
    Ok(Image::from_fn(cfg.out_width, cfg.out_height, |r, c| {
        let (sr, sc) = xf.inverse((r as f64, c as f64));
        img.sample_bilinear(sr, sc)
    }))
}

const HIST_BINS: usize = 256;

/// 256-bin histogram equalization: each gray level maps to its cumulative
/// frequency `cdf(bin) / N`.
pub fn histogram_equalize(img: &Image) -> Image {
    let bin_of = |v: f64| -> usize { (v.clamp(0.0, 1.0) * 255.0).round() as usize };
    let mut hist = [0usize; HIST_BINS];
    for &p in img.pixels() {
        hist[bin_of(p)] += 1;
    }
    let total = img.pixels().len() as f64;
    let mut lut = [0.0f64; HIST_BINS];
    let mut acc = 0usize;
    for (b, count) in hist.iter().enumerate() {
        acc += count;
        lut[b] = acc as f64 / total;
    }
    img.map(|p| lut[bin_of(p)])
}

/// Normalized Gaussian taps for radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / denom).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable Gaussian blur with replicate border. `sigma == 0` is the identity.
pub fn smooth(img: &Image, sigma: f64) -> Result<Image> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::config(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let taps = gaussian_kernel(sigma);
    let radius = (taps.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());

    let horizontal = Image::from_fn(w, h, |r, c| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| t * img.get_clamped(r as isize, c as isize + k as isize - radius))
            .sum()
    });
    Ok(Image::from_fn(w, h, |r, c| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| t * horizontal.get_clamped(r as isize + k as isize - radius, c as isize))
            .sum()
    }))
}
