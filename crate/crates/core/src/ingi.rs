//! Integral normalized gradient image (INGI) preprocessing.
//!
//! The image gradient is divided by a smoothed copy of the image, which
//! cancels a slowly varying multiplicative illumination field, and the
//! normalized gradient field is then re-integrated by Jacobi relaxation of
//! the Poisson equation `lap(X) = div(N)` starting from `X = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{smooth, Image};

/// Central-difference image gradient; `gx` is along columns, `gy` along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub gx: Image,
    pub gy: Image,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGradient {
    pub nx: Image,
    pub ny: Image,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Diffusion {
    #[default]
    Isotropic,
    /// Edge-stopping conductance `1 / (1 + (|N| / kappa)^2)` on each face.
    Anisotropic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngiParams {
    pub sigma: f64,
    pub epsilon: f64,
    pub iterations: usize,
    #[serde(default)]
    pub diffusion: Diffusion,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    0.1
}

impl Default for IngiParams {
    fn default() -> Self {
        IngiParams {
            sigma: 2.0,
            epsilon: 0.01,
            iterations: 500,
            diffusion: Diffusion::Isotropic,
            kappa: default_kappa(),
        }
    }
}

impl IngiParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(format!("ingi sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config(format!(
                "ingi epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.iterations == 0 {
            return Err(Error::config("ingi iterations must be >= 1"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::config(format!("ingi kappa must be > 0, got {}", self.kappa)));
        }
        Ok(())
    }
}

pub fn gradient(img: &Image) -> Result<GradientField> {
    let (w, h) = (img.width(), img.height());
    if w < 2 || h < 2 {
        return Err(Error::input(format!(
            "gradient needs at least a 2x2 image, got {w}x{h}"
        )));
    }
    let gx = Image::from_fn(w, h, |r, c| {
        let (r, c) = (r as isize, c as isize);
        (img.get_clamped(r, c + 1) - img.get_clamped(r, c - 1)) / 2.0
    });
    let gy = Image::from_fn(w, h, |r, c| {
        let (r, c) = (r as isize, c as isize);
        (img.get_clamped(r + 1, c) - img.get_clamped(r - 1, c)) / 2.0
    });
    Ok(GradientField { gx, gy })
}

/// Divides the gradient by `max(w, epsilon)` elementwise.
pub fn normalize_gradient(
    grad: &GradientField,
    w: &Image,
    epsilon: f64,
) -> Result<NormalizedGradient> {
    if !(epsilon > 0.0) {
        return Err(Error::config(format!("epsilon must be > 0, got {epsilon}")));
    }
    grad.gx.check_same_size(&grad.gy)?;
    grad.gx.check_same_size(w)?;
    let nx = grad.gx.zip_map(w, |g, s| g / s.max(epsilon))?;
    let ny = grad.gy.zip_map(w, |g, s| g / s.max(epsilon))?;
    Ok(NormalizedGradient { nx, ny, epsilon })
}

/// Per-pixel contributions from the four faces of a cell.
///
/// The flux through a face is the average of the normalized gradient on the
/// two cells it separates; faces on the image border carry no flux, which
/// matches the replicate boundary on `X`. Summed over the four faces this is
/// `-div(N)` with the same central stencil used by [`gradient`].
struct FaceFluxes {
    north: Vec<f64>,
    south: Vec<f64>,
    east: Vec<f64>,
    west: Vec<f64>,
}

fn face_fluxes(n: &NormalizedGradient) -> FaceFluxes {
    let (w, h) = (n.nx.width(), n.nx.height());
    let size = w * h;
    let mut f = FaceFluxes {
        north: vec![0.0; size],
        south: vec![0.0; size],
        east: vec![0.0; size],
        west: vec![0.0; size],
    };
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if r > 0 {
                f.north[i] = 0.5 * (n.ny.get(r - 1, c) + n.ny.get(r, c));
            }
            if r + 1 < h {
                f.south[i] = -0.5 * (n.ny.get(r, c) + n.ny.get(r + 1, c));
            }
            if c > 0 {
                f.west[i] = 0.5 * (n.nx.get(r, c - 1) + n.nx.get(r, c));
            }
            if c + 1 < w {
                f.east[i] = -0.5 * (n.nx.get(r, c) + n.nx.get(r, c + 1));
            }
        }
    }
    f
}

/// Face conductances for the anisotropic variant; all ones when isotropic.
fn face_conductance(n: &NormalizedGradient, diffusion: Diffusion, kappa: f64) -> Option<FaceFluxes> {
    if diffusion == Diffusion::Isotropic {
        return None;
    }
    let (w, h) = (n.nx.width(), n.nx.height());
    let mag: Vec<f64> = n
        .nx
        .pixels()
        .iter()
        .zip(n.ny.pixels())
        .map(|(x, y)| x.hypot(*y))
        .collect();
    let g = |a: f64, b: f64| {
        let m = 0.5 * (a + b) / kappa;
        1.0 / (1.0 + m * m)
    };
    let size = w * h;
    let mut k = FaceFluxes {
        north: vec![0.0; size],
        south: vec![0.0; size],
        east: vec![0.0; size],
        west: vec![0.0; size],
    };
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            k.north[i] = if r > 0 { g(mag[i - w], mag[i]) } else { 1.0 };
            k.south[i] = if r + 1 < h { g(mag[i], mag[i + w]) } else { 1.0 };
            k.west[i] = if c > 0 { g(mag[i - 1], mag[i]) } else { 1.0 };
            k.east[i] = if c + 1 < w { g(mag[i], mag[i + 1]) } else { 1.0 };
        }
    }
    Some(k)
}

/// Jacobi relaxation from `X = 0`:
/// `X_t(p) = 1/4 * sum_d (X_{t-1}(neighbour_d(p)) + N_d(p))`,
/// with replicate boundary neighbours. Returns `X` after `iterations` sweeps.
pub fn integrate(n: &NormalizedGradient, iterations: usize) -> Image {
    integrate_with(n, iterations, Diffusion::Isotropic, default_kappa())
}

pub fn integrate_with(
    n: &NormalizedGradient,
    iterations: usize,
    diffusion: Diffusion,
    kappa: f64,
) -> Image {
    let (w, h) = (n.nx.width(), n.nx.height());
    let flux = face_fluxes(n);
    let cond = face_conductance(n, diffusion, kappa);
    let mut prev = vec![0.0; w * h];
    let mut next = vec![0.0; w * h];
    for _ in 0..iterations {
        for r in 0..h {
            let up = r.saturating_sub(1);
            let down = (r + 1).min(h - 1);
            for c in 0..w {
                let left = c.saturating_sub(1);
                let right = (c + 1).min(w - 1);
                let i = r * w + c;
                let terms = [
                    (prev[up * w + c], flux.north[i]),
                    (prev[down * w + c], flux.south[i]),
                    (prev[r * w + right], flux.east[i]),
                    (prev[r * w + left], flux.west[i]),
                ];
                next[i] = match &cond {
                    None => 0.25 * terms.iter().map(|(x, f)| x + f).sum::<f64>(),
                    Some(k) => {
                        let weights = [k.north[i], k.south[i], k.east[i], k.west[i]];
                        let num: f64 = terms
                            .iter()
                            .zip(weights)
                            .map(|((x, f), wt)| wt * (x + f))
                            .sum();
                        num / weights.iter().sum::<f64>()
                    }
                };
            }
        }
        std::mem::swap(&mut prev, &mut next);
    }
    Image::new(w, h, prev).expect("relaxation output is finite")
}

/// Affine rescale to `[0, 1]`; a constant image maps to 0.5.
pub fn rescale_unit(img: &Image) -> Image {
    let (lo, hi) = (img.min(), img.max());
    let range = hi - lo;
    if range <= 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        return Image::filled(img.width(), img.height(), 0.5);
    }
    img.map(|p| (p - lo) / range)
}

/// Full INGI chain: smooth, gradient, normalize, integrate, rescale.
pub fn ingi(img: &Image, params: &IngiParams) -> Result<Image> {
    params.validate()?;
    let w = smooth(img, params.sigma)?;
    let grad = gradient(img)?;
    let n = normalize_gradient(&grad, &w, params.epsilon)?;
    let x = integrate_with(&n, params.iterations, params.diffusion, params.kappa);
    Ok(rescale_unit(&x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn texture(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |r, c| {
            let (y, x) = (r as f64, c as f64);
            0.5 + 0.2 * (0.9 * x).sin() * (0.7 * y).cos() + 0.1 * (0.35 * (x - y)).sin()
        })
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = gradient(&Image::filled(6, 5, 0.7)).unwrap();
        assert!(g.gx.pixels().iter().chain(g.gy.pixels()).all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_linear_fields() {
        let ramp = Image::from_fn(8, 6, |_, c| c as f64);
        let g = gradient(&ramp).unwrap();
        for r in 0..6 {
            for c in 1..7 {
                assert_eq!(g.gx.get(r, c), 1.0);
                assert_eq!(g.gy.get(r, c), 0.0);
            }
            // replicate border halves the one-sided difference
            assert_eq!(g.gx.get(r, 0), 0.5);
        }
        let plane = Image::from_fn(8, 6, |r, c| r as f64 + 2.0 * c as f64);
        let g = gradient(&plane).unwrap();
        assert_eq!((g.gx.get(3, 3), g.gy.get(3, 3)), (2.0, 1.0));
        assert!(gradient(&Image::filled(1, 5, 0.0)).is_err());
    }

    #[test]
    fn normalize_direct_division() {
        let mut gx = Image::filled(3, 3, 0.0);
        gx.set(1, 1, 0.4);
        let grad = GradientField {
            gx,
            gy: Image::filled(3, 3, 0.0),
        };
        let w = Image::filled(3, 3, 0.8);
        let n = normalize_gradient(&grad, &w, 1e-3).unwrap();
        assert_abs_diff_eq!(n.nx.get(1, 1), 0.5, epsilon = 1e-15);
        assert_eq!(n.ny.get(1, 1), 0.0);
        assert!(normalize_gradient(&grad, &Image::filled(2, 3, 1.0), 1e-3).is_err());
        assert!(normalize_gradient(&grad, &w, 0.0).is_err());
    }

    #[test]
    fn normalize_is_scale_invariant() {
        let img = texture(24, 20);
        let base = {
            let g = gradient(&img).unwrap();
            normalize_gradient(&g, &smooth(&img, 2.0).unwrap(), 0.01).unwrap()
        };
        for c in [0.5, 2.0, 3.7] {
            let scaled = img.map(|p| c * p);
            let g = gradient(&scaled).unwrap();
            let n = normalize_gradient(&g, &smooth(&scaled, 2.0).unwrap(), 0.01).unwrap();
            for (a, b) in base.nx.pixels().iter().zip(n.nx.pixels()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
            for (a, b) in base.ny.pixels().iter().zip(n.ny.pixels()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn integrate_zero_field_stays_zero() {
        let z = Image::filled(7, 5, 0.0);
        let n = NormalizedGradient {
            nx: z.clone(),
            ny: z,
            epsilon: 0.01,
        };
        for t in [1, 5, 50] {
            assert!(integrate(&n, t).pixels().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn integrate_first_step_closed_form() {
        let img = texture(9, 7);
        let g = gradient(&img).unwrap();
        let n = normalize_gradient(&g, &smooth(&img, 1.0).unwrap(), 0.01).unwrap();
        let x1 = integrate(&n, 1);
        let (r, c) = (3, 4);
        let nx = |r: usize, c: usize| n.nx.get(r, c);
        let ny = |r: usize, c: usize| n.ny.get(r, c);
        let north = 0.5 * (ny(r - 1, c) + ny(r, c));
        let south = -0.5 * (ny(r, c) + ny(r + 1, c));
        let east = -0.5 * (nx(r, c) + nx(r, c + 1));
        let west = 0.5 * (nx(r, c - 1) + nx(r, c));
        assert_abs_diff_eq!(x1.get(r, c), 0.25 * (north + south + east + west), epsilon = 1e-15);
    }

    #[test]
    fn integrate_residual_is_non_increasing() {
        let img = texture(20, 16);
        let g = gradient(&img).unwrap();
        let n = normalize_gradient(&g, &smooth(&img, 2.0).unwrap(), 0.01).unwrap();
        let mut prev = integrate(&n, 10);
        let mut last = f64::INFINITY;
        for t in 11..60 {
            let cur = integrate(&n, t);
            let res = cur
                .pixels()
                .iter()
                .zip(prev.pixels())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(res <= last + 1e-15, "residual grew at t={t}: {res} > {last}");
            last = res;
            prev = cur;
        }
    }

    #[test]
    fn ingi_constant_image_is_half() {
        let out = ingi(&Image::filled(10, 12, 0.3), &IngiParams::default()).unwrap();
        assert!(out.pixels().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn ingi_is_deterministic_and_unit_ranged() {
        let img = texture(32, 32);
        let p = IngiParams::default();
        let a = ingi(&img, &p).unwrap();
        let b = ingi(&img, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.min(), 0.0);
        assert_eq!(a.max(), 1.0);
    }

    #[test]
    fn anisotropic_variant_runs() {
        let img = texture(24, 24);
        let p = IngiParams {
            diffusion: Diffusion::Anisotropic,
            ..IngiParams::default()
        };
        let out = ingi(&img, &p).unwrap();
        assert!(out.pixels().iter().all(|v| v.is_finite()));
        assert_ne!(out, ingi(&img, &IngiParams::default()).unwrap());
    }

    #[test]
    fn params_validation() {
        let bad = [
            IngiParams { sigma: -1.0, ..Default::default() },
            IngiParams { epsilon: 0.0, ..Default::default() },
            IngiParams { iterations: 0, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err());
        }
    }
}
