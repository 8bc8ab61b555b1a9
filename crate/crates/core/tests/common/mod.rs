//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use ingiface::imgcore::Image;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(l: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..l)
        .map(|_| (0..n).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn random_image(w: usize, h: usize, seed: u64) -> Image {
    let mut r = rng(seed);
    Image::from_fn(w, h, |_, _| r.random_range(0.0..1.0))
}

/// Pearson correlation of two equally sized images.
pub fn ncc(a: &Image, b: &Image) -> f64 {
    let (ma, mb) = (a.mean(), b.mean());
    let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.pixels().iter().zip(b.pixels()) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    num / (va * vb).sqrt()
}

/// Direct double sum `F(u,v) = sum x(r,c) exp(-2 pi i (u r / H + v c / W))`,
/// unshifted, as `(re, im)` in row-major order.
pub fn naive_dft(img: &Image) -> Vec<(f64, f64)> {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(w * h);
    for u in 0..h {
        for v in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let phase = -2.0
                        * std::f64::consts::PI
                        * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                    re += img.get(r, c) * phase.cos();
                    im += img.get(r, c) * phase.sin();
                }
            }
            out.push((re, im));
        }
    }
    out
}

/// Exhaustive threshold sweep: `(threshold, far, vr)` for every distinct
/// score, counting `score >= threshold` in both classes.
pub fn roc_sweep(genuine: &[f64], impostor: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut thresholds: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds
        .into_iter()
        .map(|t| {
            let far = impostor.iter().filter(|&&s| s >= t).count() as f64 / impostor.len() as f64;
            let vr = genuine.iter().filter(|&&s| s >= t).count() as f64 / genuine.len() as f64;
            (t, far, vr)
        })
        .collect()
}

/// `max { VR(t) : FAR(t) <= target }`, zero when no threshold qualifies.
pub fn vr_at_far_sweep(genuine: &[f64], impostor: &[f64], target: f64) -> f64 {
    roc_sweep(genuine, impostor)
        .into_iter()
        .filter(|&(_, far, _)| far <= target)
        .map(|(_, _, vr)| vr)
        .fold(0.0, f64::max)
}

/// Fraction of (genuine, impostor) pairs ordered correctly, ties as 1/2.
pub fn brute_auc(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut wins = 0.0;
    for g in genuine {
        for i in impostor {
            if g > i {
                wins += 1.0;
            } else if g == i {
                wins += 0.5;
            }
        }
    }
    wins / (genuine.len() * impostor.len()) as f64
}

/// Two-pass population standardization with the 1e-8 scale floor.
pub fn standardize(rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let (l, n) = (rows.len(), rows[0].len());
    let mean: Vec<f64> = (0..n)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / l as f64)
        .collect();
    let scale: Vec<f64> = (0..n)
        .map(|j| {
            let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / l as f64;
            v.sqrt().max(1e-8)
        })
        .collect();
    let z = rows
        .iter()
        .map(|r| (0..n).map(|j| (r[j] - mean[j]) / scale[j]).collect())
        .collect();
    (z, mean, scale)
}

/// PCA by forming the full `n x n` covariance of standardized rows.
/// Returns the top-`k` eigenvalues and unit eigenvectors.
pub fn covariance_pca(rows: &[Vec<f64>], k: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let (z, mean, scale) = standardize(rows);
    let (l, n) = (z.len(), z[0].len());
    let x = DMatrix::from_fn(l, n, |i, j| z[i][j]);
    let cov = x.transpose() * &x / l as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order[..k]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (values, vectors, mean, scale)
}

pub fn covariance_project(vectors: &[Vec<f64>], mean: &[f64], scale: &[f64], x: &[f64]) -> Vec<f64> {
    let z: Vec<f64> = x.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s).collect();
    vectors
        .iter()
        .map(|v| v.iter().zip(&z).map(|(a, b)| a * b).sum())
        .collect()
}

/// Max over components of `min(|a - b|, |a + b|)`.
pub fn max_diff_up_to_sign(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let k = a[0].len();
    let mut worst: f64 = 0.0;
    for j in 0..k {
        let same: f64 = a.iter().zip(b).map(|(x, y)| (x[j] - y[j]).abs()).fold(0.0, f64::max);
        let flip: f64 = a.iter().zip(b).map(|(x, y)| (x[j] + y[j]).abs()).fold(0.0, f64::max);
        worst = worst.max(same.min(flip));
    }
    worst
}

/// Minimum-norm least-squares surface whose differences across every
/// interior pixel face match the face-averaged field `(nx, ny)`, solved by
/// SVD pseudo-inverse. The result has zero mean.
pub fn least_squares_surface(nx: &Image, ny: &Image) -> Vec<f64> {
    let (w, h) = (nx.width(), nx.height());
    let mut rows: Vec<(usize, usize, f64)> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if c + 1 < w {
                rows.push((r * w + c, r * w + c + 1, 0.5 * (nx.get(r, c) + nx.get(r, c + 1))));
            }
            if r + 1 < h {
                rows.push((r * w + c, (r + 1) * w + c, 0.5 * (ny.get(r, c) + ny.get(r + 1, c))));
            }
        }
    }
    let mut d = DMatrix::<f64>::zeros(rows.len(), w * h);
    let mut g = DVector::<f64>::zeros(rows.len());
    for (k, &(p, q, t)) in rows.iter().enumerate() {
        d[(k, p)] = -1.0;
        d[(k, q)] = 1.0;
        g[k] = t;
    }
    let pinv = d.pseudo_inverse(1e-10).expect("pseudo-inverse");
    (pinv * g).iter().copied().collect()
}

pub fn demean(v: &[f64]) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - m).collect()
}
