//! Linear and kernel PCA over standardized feature vectors.
//!
//! PCA picks the cheaper of two equivalent eigenproblems: the `n x n`
//! covariance when the dimension is small, otherwise the `l x l` Gram matrix
//! of the centered samples, whose eigenvectors `u` map back to covariance
//! eigenvectors `v = Z^T u / |Z^T u|`. Kernel PCA double-centers the kernel
//! matrix so that a linear kernel reproduces PCA exactly.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{FeatureLayout, FeatureVector};

/// Floor on per-coordinate standard deviation.
pub const SCALE_FLOOR: f64 = 1e-8;
/// Eigenvalues at or below this (relative to `max(1, lambda_max)`) count as zero.
pub const EIGEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct TrainingSet {
    rows: Vec<FeatureVector>,
    labels: Vec<String>,
}

impl TrainingSet {
    pub fn new(rows: Vec<FeatureVector>, labels: Vec<String>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::input(format!(
                "training set needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        if labels.len() != rows.len() {
            return Err(Error::input(format!(
                "{} labels for {} rows",
                labels.len(),
                rows.len()
            )));
        }
        let layout = &rows[0].layout;
        if let Some(i) = rows.iter().position(|r| &r.layout != layout) {
            return Err(Error::input(format!("row {i} has a different feature layout")));
        }
        Ok(TrainingSet { rows, labels })
    }

    /// Rows of plain values under a raw layout, all labeled by their index.
    pub fn from_raw(rows: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (0..rows.len()).map(|i| i.to_string()).collect();
        TrainingSet::new(rows.into_iter().map(FeatureVector::raw).collect(), labels)
    }

    pub fn rows(&self) -> &[FeatureVector] {
        &self.rows
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.rows[0].layout
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }
}

/// Per-coordinate mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

pub fn standardize_fit(train: &TrainingSet) -> Standardizer {
    let n = train.dim();
    let l = train.len() as f64;
    let mut mean = vec![0.0; n];
    for row in train.rows() {
        for (m, v) in mean.iter_mut().zip(&row.values) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= l);
    let mut var = vec![0.0; n];
    for row in train.rows() {
        for ((acc, v), m) in var.iter_mut().zip(&row.values).zip(&mean) {
            let d = v - m;
            *acc += d * d;
        }
    }
    let scale = var
        .into_iter()
        .map(|v| (v / l).sqrt().max(SCALE_FLOOR))
        .collect();
    Standardizer { mean, scale }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubspaceKind {
    Pca,
    Kpca,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if let KernelSpec::Rbf { gamma } = self {
            if !(gamma.is_finite() && *gamma > 0.0) {
                return Err(Error::config(format!("rbf gamma must be finite and > 0, got {gamma}")));
            }
        }
        Ok(())
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// How many principal components to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentCount {
    Fixed(usize),
    /// Smallest `k` whose eigenvalues carry this fraction of the retained mass.
    Energy(f64),
}

impl Default for ComponentCount {
    fn default() -> Self {
        ComponentCount::Energy(0.98)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Basis {
    /// Unit-norm principal axes in standardized feature space.
    Linear { components: Vec<Vec<f64>> },
    /// Dual coefficients over the standardized training rows.
    Kernel {
        kernel: KernelSpec,
        train_rows: Vec<Vec<f64>>,
        alphas: Vec<Vec<f64>>,
        row_means: Vec<f64>,
        total_mean: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceModel {
    pub kind: SubspaceKind,
    pub layout: FeatureLayout,
    pub standardizer: Standardizer,
    /// Retained eigenvalues, descending. Covariance eigenvalues for PCA,
    /// centered-kernel eigenvalues for KPCA.
    pub eigenvalues: Vec<f64>,
    /// Number of components asked for before degenerate ones were dropped.
    pub requested_components: usize,
    pub basis: Basis,
}

impl SubspaceModel {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    /// True when fewer components were kept than requested.
    pub fn shrunk(&self) -> bool {
        self.k() < self.requested_components
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("subspace model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::input(format!("bad subspace model: {e}")))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending. Eigenvectors
/// are returned as owned columns.
fn sym_eigen_desc(m: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    (values, vectors)
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn significant(values: &[f64]) -> usize {
    let top = values.first().copied().unwrap_or(0.0).max(1.0);
    values.iter().take_while(|&&v| v > EIGEN_TOL * top).count()
}

fn choose_k(count: ComponentCount, eigenvalues: &[f64], available: usize, kmax: usize) -> Result<usize> {
    match count {
        ComponentCount::Fixed(k) => {
            if k == 0 || k > kmax {
                return Err(Error::config(format!(
                    "component count {k} must lie in [1, {kmax}]"
                )));
            }
            Ok(k)
        }
        ComponentCount::Energy(frac) => {
            if !(frac > 0.0 && frac <= 1.0) {
                return Err(Error::config(format!("energy fraction {frac} must lie in (0, 1]")));
            }
            let kept = &eigenvalues[..available.min(kmax)];
            let total: f64 = kept.iter().sum();
            if kept.is_empty() || total <= 0.0 {
                return Ok(0);
            }
            let mut acc = 0.0;
            for (i, v) in kept.iter().enumerate() {
                acc += v;
                if acc >= frac * total {
                    return Ok(i + 1);
                }
            }
            Ok(kept.len())
        }
    }
}

fn standardized_rows(train: &TrainingSet, st: &Standardizer) -> Vec<Vec<f64>> {
    train.rows().iter().map(|r| st.apply(&r.values)).collect()
}

pub fn pca_train(train: &TrainingSet, count: ComponentCount) -> Result<SubspaceModel> {
    let (l, n) = (train.len(), train.dim());
    let kmax = (l - 1).min(n);
    let standardizer = standardize_fit(train);
    let z = standardized_rows(train, &standardizer);

    let (eigenvalues, components, requested) = if n <= l {
        let mut cov = DMatrix::<f64>::zeros(n, n);
        for row in &z {
            for a in 0..n {
                for b in a..n {
                    cov[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..n {
            for b in a..n {
                let v = cov[(a, b)] / l as f64;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        let (values, vectors) = sym_eigen_desc(cov);
        let values: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
        let k = choose_k(count, &values, significant(&values), kmax)?;
        let mut comps: Vec<Vec<f64>> = vectors.into_iter().take(k).collect();
        comps.iter_mut().for_each(|v| fix_sign(v));
        (values[..k].to_vec(), comps, k)
    } else {
        let mut gram = DMatrix::<f64>::zeros(l, l);
        for i in 0..l {
            for j in i..l {
                let v = dot(&z[i], &z[j]);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        let (values, vectors) = sym_eigen_desc(gram);
        let values: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
        let available = significant(&values);
        let k = choose_k(count, &values, available, kmax)?;
        let kept = k.min(available);
        let mut comps = Vec::with_capacity(kept);
        for u in vectors.iter().take(kept) {
            let mut v = vec![0.0; n];
            for (ui, row) in u.iter().zip(&z) {
                for (acc, x) in v.iter_mut().zip(row) {
                    *acc += ui * x;
                }
            }
            let norm = dot(&v, &v).sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            fix_sign(&mut v);
            comps.push(v);
        }
        let cov_values = values[..kept].iter().map(|v| v / l as f64).collect();
        (cov_values, comps, k)
    };

    if components.len() < requested {
        log::warn!(
            "pca: kept {} of {} requested components (degenerate training set)",
            components.len(),
            requested
        );
    }
    Ok(SubspaceModel {
        kind: SubspaceKind::Pca,
        layout: train.layout().clone(),
        standardizer,
        eigenvalues,
        requested_components: requested,
        basis: Basis::Linear { components },
    })
}

/// `1 / median` of pairwise squared distances between standardized rows;
/// falls back to 1 when all rows coincide.
pub fn median_heuristic_gamma(train: &TrainingSet) -> f64 {
    let st = standardize_fit(train);
    let z = standardized_rows(train, &st);
    let mut d2 = Vec::with_capacity(z.len() * (z.len() - 1) / 2);
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            d2.push(z[i].iter().zip(&z[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
        }
    }
    d2.sort_by(f64::total_cmp);
    let m = d2.len();
    let median = if m % 2 == 1 {
        d2[m / 2]
    } else {
        0.5 * (d2[m / 2 - 1] + d2[m / 2])
    };
    if median > 0.0 && median.is_finite() {
        1.0 / median
    } else {
        1.0
    }
}

pub fn kpca_train(train: &TrainingSet, kernel: KernelSpec, count: ComponentCount) -> Result<SubspaceModel> {
    kernel.validate()?;
    let l = train.len();
    let kmax = l - 1;
    let standardizer = standardize_fit(train);
    let z = standardized_rows(train, &standardizer);

    let mut k = DMatrix::<f64>::zeros(l, l);
    for i in 0..l {
        for j in i..l {
            let v = kernel.eval(&z[i], &z[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let row_means: Vec<f64> = (0..l).map(|i| k.row(i).sum() / l as f64).collect();
    let total_mean = row_means.iter().sum::<f64>() / l as f64;
    let mut centered = k;
    for i in 0..l {
        for j in 0..l {
            centered[(i, j)] += total_mean - row_means[i] - row_means[j];
        }
    }
    // restore exact symmetry lost to rounding
    for i in 0..l {
        for j in i + 1..l {
            let v = 0.5 * (centered[(i, j)] + centered[(j, i)]);
            centered[(i, j)] = v;
            centered[(j, i)] = v;
        }
    }

    let (values, vectors) = sym_eigen_desc(centered);
    let values: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
    let available = significant(&values);
    let requested = choose_k(count, &values, available, kmax)?;
    let kept = requested.min(available);
    if kept < requested {
        log::warn!("kpca: only {kept} of {requested} requested components have non-zero eigenvalues");
    }

    let alphas = vectors
        .into_iter()
        .zip(&values)
        .take(kept)
        .map(|(mut u, &lambda)| {
            let s = lambda.sqrt();
            u.iter_mut().for_each(|x| *x /= s);
            fix_sign(&mut u);
            u
        })
        .collect();

    Ok(SubspaceModel {
        kind: SubspaceKind::Kpca,
        layout: train.layout().clone(),
        standardizer,
        eigenvalues: values[..kept].to_vec(),
        requested_components: requested,
        basis: Basis::Kernel {
            kernel,
            train_rows: z,
            alphas,
            row_means,
            total_mean,
        },
    })
}

/// Coordinates of `x` in the model's subspace.
pub fn project(model: &SubspaceModel, x: &FeatureVector) -> Result<Vec<f64>> {
    if x.layout != model.layout {
        return Err(Error::input(format!(
            "feature layout ({} values) does not match the model's ({} values)",
            x.len(),
            model.layout.total_len()
        )));
    }
    let z = model.standardizer.apply(&x.values);
    Ok(match &model.basis {
        Basis::Linear { components } => components.iter().map(|v| dot(v, &z)).collect(),
        Basis::Kernel {
            kernel,
            train_rows,
            alphas,
            row_means,
            total_mean,
        } => {
            let kv: Vec<f64> = train_rows.iter().map(|r| kernel.eval(r, &z)).collect();
            let kmean = kv.iter().sum::<f64>() / kv.len() as f64;
            let kc: Vec<f64> = kv
                .iter()
                .zip(row_means)
                .map(|(v, rm)| v - kmean - rm + total_mean)
                .collect();
            alphas.iter().map(|a| dot(a, &kc)).collect()
        }
    })
}
