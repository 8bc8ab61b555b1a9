//! Hybrid Fourier features: the centered 2-D DFT, its real/imaginary,
//! magnitude and cosine-phase domains, and nested low-frequency band
//! selections.

use std::fmt;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::Image;

/// Centered 2-D DFT: DC sits at `(height / 2, width / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub width: usize,
    pub height: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexSpectrum {
    pub fn dc_position(&self) -> (usize, usize) {
        (self.height / 2, self.width / 2)
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        let i = row * self.width + col;
        Complex64::new(self.re[i], self.im[i])
    }
}

/// Unnormalized forward 2-D DFT followed by a quadrant swap.
pub fn dft2(img: &Image) -> ComplexSpectrum {
    let (w, h) = (img.width(), img.height());
    let mut planner = FftPlanner::<f64>::new();
    let row_fft = planner.plan_fft_forward(w);
    let col_fft = planner.plan_fft_forward(h);

    let mut data: Vec<Complex64> = img
        .pixels()
        .iter()
        .map(|&p| Complex64::new(p, 0.0))
        .collect();
    for row in data.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            column[r] = data[r * w + c];
        }
        col_fft.process(&mut column);
        for r in 0..h {
            data[r * w + c] = column[r];
        }
    }

    let (dr, dc) = (h / 2, w / 2);
    let mut re = vec![0.0; w * h];
    let mut im = vec![0.0; w * h];
    for r in 0..h {
        let src_r = (r + h - dr) % h;
        for c in 0..w {
            let src_c = (c + w - dc) % w;
            let z = data[src_r * w + src_c];
            re[r * w + c] = z.re;
            im[r * w + c] = z.im;
        }
    }
    ComplexSpectrum {
        width: w,
        height: h,
        re,
        im,
    }
}

fn plane(s: &ComplexSpectrum, values: Vec<f64>) -> Image {
    Image::new(s.width, s.height, values).expect("spectrum values are finite")
}

/// Magnitude `sqrt(re^2 + im^2)`.
pub fn spectrum(s: &ComplexSpectrum) -> Image {
    plane(
        s,
        s.re.iter().zip(&s.im).map(|(r, i)| r.hypot(*i)).collect(),
    )
}

/// `cos(atan2(im, re))` in closed form, `re / |F|`; zero where `|F| < eps`.
pub fn phase_cos(s: &ComplexSpectrum, eps: f64) -> Image {
    plane(
        s,
        s.re.iter()
            .zip(&s.im)
            .map(|(&r, &i)| {
                let mag = r.hypot(i);
                if mag < eps {
                    0.0
                } else {
                    (r / mag).clamp(-1.0, 1.0)
                }
            })
            .collect(),
    )
}

/// Real and imaginary planes.
pub fn ri_domain(s: &ComplexSpectrum) -> (Image, Image) {
    (plane(s, s.re.clone()), plane(s, s.im.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BandName {
    B1,
    B2,
    B3,
}

impl fmt::Display for BandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BandName::B1 => "B1",
            BandName::B2 => "B2",
            BandName::B3 => "B3",
        };
        f.write_str(s)
    }
}

/// Centered rectangle of `fraction * H` by `fraction * W` coefficients
/// around DC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: BandName,
    pub fraction: f64,
}

impl BandSpec {
    pub fn new(name: BandName, fraction: f64) -> Self {
        BandSpec { name, fraction }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::config(format!(
                "band {} fraction {} must lie in (0, 1]",
                self.name, self.fraction
            )));
        }
        Ok(())
    }

    /// `(row0, col0, rows, cols)` of the selected block.
    pub fn rect(&self, width: usize, height: usize) -> Result<(usize, usize, usize, usize)> {
        self.validate()?;
        let rows = ((self.fraction * height as f64).ceil() as usize).min(height);
        let cols = ((self.fraction * width as f64).ceil() as usize).min(width);
        if rows == 0 || cols == 0 {
            return Err(Error::config(format!("band {} selects nothing", self.name)));
        }
        let row0 = height / 2 - rows / 2;
        let col0 = width / 2 - cols / 2;
        Ok((row0, col0, rows, cols))
    }

    pub fn len(&self, width: usize, height: usize) -> Result<usize> {
        let (_, _, rows, cols) = self.rect(width, height)?;
        Ok(rows * cols)
    }
}

/// The three nested bands used for every domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSet {
    pub bands: [BandSpec; 3],
}

impl BandSet {
    pub fn from_fractions(fractions: [f64; 3]) -> Result<Self> {
        let set = BandSet {
            bands: [
                BandSpec::new(BandName::B1, fractions[0]),
                BandSpec::new(BandName::B2, fractions[1]),
                BandSpec::new(BandName::B3, fractions[2]),
            ],
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        for b in &self.bands {
            b.validate()?;
        }
        let f = self.bands.map(|b| b.fraction);
        if !(f[0] < f[1] && f[1] < f[2]) {
            return Err(Error::config(format!(
                "band fractions must be strictly increasing, got {f:?}"
            )));
        }
        Ok(())
    }
}

impl Default for BandSet {
    fn default() -> Self {
        BandSet::from_fractions([0.25, 0.5, 0.75]).expect("default bands are valid")
    }
}

/// Row-major flattening of the band's block of `m`.
pub fn band_select(m: &Image, band: &BandSpec) -> Result<Vec<f64>> {
    let (row0, col0, rows, cols) = band.rect(m.width(), m.height())?;
    let mut out = Vec::with_capacity(rows * cols);
    for r in row0..row0 + rows {
        for c in col0..col0 + cols {
            out.push(m.get(r, c));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// Real and imaginary components.
    Ri,
    /// Magnitude spectrum.
    Spectrum,
    /// Cosine of the phase angle.
    Phase,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Ri, Domain::Spectrum, Domain::Phase];
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Domain::Ri => "ri",
            Domain::Spectrum => "spectrum",
            Domain::Phase => "phase",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Real,
    Imag,
    Spectrum,
    PhaseCos,
    /// Untyped data, e.g. vectors built outside the Fourier extractor.
    Raw,
}

impl SegmentKind {
    pub fn domain(&self) -> Option<Domain> {
        match self {
            SegmentKind::Real | SegmentKind::Imag => Some(Domain::Ri),
            SegmentKind::Spectrum => Some(Domain::Spectrum),
            SegmentKind::PhaseCos => Some(Domain::Phase),
            SegmentKind::Raw => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub band: Option<BandName>,
    pub len: usize,
}

/// Ordered segment descriptor shared by every vector from one extraction
/// config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub segments: Vec<Segment>,
}

impl FeatureLayout {
    pub fn raw(len: usize) -> Self {
        FeatureLayout {
            segments: vec![Segment {
                kind: SegmentKind::Raw,
                band: None,
                len,
            }],
        }
    }

    pub fn total_len(&self) -> usize {
        self.segments.iter().map(|s| s.len).sum()
    }

    /// Layout produced by [`extract_features`] for a `width x height` image.
    pub fn for_image(width: usize, height: usize, bands: &BandSet) -> Result<Self> {
        let mut segments = Vec::with_capacity(12);
        for b in &bands.bands {
            let len = b.len(width, height)?;
            for kind in [SegmentKind::Real, SegmentKind::Imag] {
                segments.push(Segment {
                    kind,
                    band: Some(b.name),
                    len,
                });
            }
        }
        for kind in [SegmentKind::Spectrum, SegmentKind::PhaseCos] {
            for b in &bands.bands {
                segments.push(Segment {
                    kind,
                    band: Some(b.name),
                    len: b.len(width, height)?,
                });
            }
        }
        Ok(FeatureLayout { segments })
    }

    /// Sub-layout holding only the segments of one domain.
    pub fn domain(&self, domain: Domain) -> FeatureLayout {
        FeatureLayout {
            segments: self
                .segments
                .iter()
                .filter(|s| s.kind.domain() == Some(domain))
                .copied()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, layout: FeatureLayout) -> Result<Self> {
        if values.len() != layout.total_len() {
            return Err(Error::input(format!(
                "feature vector has {} values but layout describes {}",
                values.len(),
                layout.total_len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("feature vector contains non-finite values"));
        }
        Ok(FeatureVector { values, layout })
    }

    /// Wraps plain values under a single raw segment.
    pub fn raw(values: Vec<f64>) -> Self {
        let layout = FeatureLayout::raw(values.len());
        FeatureVector { values, layout }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Concatenated values of one domain's segments, with their layout.
    pub fn domain(&self, domain: Domain) -> FeatureVector {
        let mut values = Vec::new();
        let mut offset = 0;
        for seg in &self.layout.segments {
            if seg.kind.domain() == Some(domain) {
                values.extend_from_slice(&self.values[offset..offset + seg.len]);
            }
            offset += seg.len;
        }
        FeatureVector {
            values,
            layout: self.layout.domain(domain),
        }
    }
}

/// Concatenates `re, im` per band, then the magnitude bands, then the
/// cosine-phase bands.
pub fn extract_features(img: &Image, bands: &BandSet, eps: f64) -> Result<FeatureVector> {
    bands.validate()?;
    if !(eps > 0.0) {
        return Err(Error::config(format!("phase eps must be > 0, got {eps}")));
    }
    let layout = FeatureLayout::for_image(img.width(), img.height(), bands)?;
    let s = dft2(img);
    let (re, im) = ri_domain(&s);
    let mag = spectrum(&s);
    let phase = phase_cos(&s, eps);

    let mut values = Vec::with_capacity(layout.total_len());
    for b in &bands.bands {
        values.extend(band_select(&re, b)?);
        values.extend(band_select(&im, b)?);
    }
    for m in [&mag, &phase] {
        for b in &bands.bands {
            values.extend(band_select(m, b)?);
        }
    }
    FeatureVector::new(values, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    /// Direct O(N^2) DFT, uncentered.
    fn naive_dft(img: &Image) -> Vec<Complex64> {
        let (w, h) = (img.width(), img.height());
        let mut out = vec![Complex64::new(0.0, 0.0); w * h];
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..h {
                    for c in 0..w {
                        let ang = -2.0
                            * std::f64::consts::PI
                            * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                        acc += img.get(r, c) * Complex64::from_polar(1.0, ang);
                    }
                }
                out[u * w + v] = acc;
            }
        }
        out
    }

    #[test]
    fn matches_direct_dft_after_centering() {
        for (w, h) in [(8, 8), (6, 5), (7, 4)] {
            let img = random_image(w, h, 3);
            let s = dft2(&img);
            let naive = naive_dft(&img);
            for u in 0..h {
                for v in 0..w {
                    let z = s.get((u + h / 2) % h, (v + w / 2) % w);
                    assert_abs_diff_eq!(z.re, naive[u * w + v].re, epsilon = 1e-10);
                    assert_abs_diff_eq!(z.im, naive[u * w + v].im, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn impulse_and_constant() {
        let mut imp = Image::filled(8, 6, 0.0);
        imp.set(0, 0, 1.0);
        let s = spectrum(&dft2(&imp));
        for &m in s.pixels() {
            assert_abs_diff_eq!(m, 1.0, epsilon = 1e-12);
        }

        let s = dft2(&Image::filled(8, 6, 0.5));
        let (dr, dc) = s.dc_position();
        assert_eq!((dr, dc), (3, 4));
        for r in 0..6 {
            for c in 0..8 {
                let z = s.get(r, c);
                if (r, c) == (dr, dc) {
                    assert_abs_diff_eq!(z.re, 0.5 * 48.0, epsilon = 1e-12);
                } else {
                    assert!(z.norm() < 1e-12);
                }
                assert_eq!(z.im.abs() < 1e-12, true);
            }
        }
    }

    #[test]
    fn parseval_and_conjugate_symmetry() {
        let img = random_image(8, 8, 11);
        let s = dft2(&img);
        let energy: f64 = img.pixels().iter().map(|p| p * p).sum();
        let spec: f64 = s.re.iter().zip(&s.im).map(|(r, i)| r * r + i * i).sum();
        assert!(((spec / 64.0) - energy).abs() / energy < 1e-9);

        // F(-k) = conj(F(k)) in uncentered indices
        let (w, h) = (8, 8);
        let at = |u: usize, v: usize| s.get((u + h / 2) % h, (v + w / 2) % w);
        for u in 0..h {
            for v in 0..w {
                let a = at(u, v);
                let b = at((h - u) % h, (w - v) % w);
                assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-9);
                assert_abs_diff_eq!(a.im, -b.im, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn spectrum_and_phase_examples() {
        let s = ComplexSpectrum {
            width: 3,
            height: 1,
            re: vec![3.0, 0.0, 0.0],
            im: vec![4.0, 1.0, 0.0],
        };
        let m = spectrum(&s);
        assert_eq!(m.pixels(), &[5.0, 1.0, 0.0]);
        let p = phase_cos(&s, 1e-12);
        assert_eq!(p.pixels()[0], 0.6);
        assert_eq!(p.pixels()[1], 0.0);
        assert_eq!(p.pixels()[2], 0.0);
    }

    #[test]
    fn shift_changes_phase_but_not_magnitude() {
        let img = random_image(16, 12, 5);
        let shifted = Image::from_fn(16, 12, |r, c| img.get((r + 12 - 3) % 12, (c + 16 - 5) % 16));
        let (a, b) = (dft2(&img), dft2(&shifted));
        for (x, y) in spectrum(&a).pixels().iter().zip(spectrum(&b).pixels()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-9);
        }
        let pa = phase_cos(&a, 1e-12);
        let pb = phase_cos(&b, 1e-12);
        let max_diff = pa
            .pixels()
            .iter()
            .zip(pb.pixels())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(max_diff > 0.1);
        assert_ne!(a.re, b.re);
    }

    #[test]
    fn even_image_has_real_spectrum() {
        // symmetric about the origin under circular indexing
        let (w, h) = (8, 6);
        let base = random_image(w, h, 9);
        let even = Image::from_fn(w, h, |r, c| {
            0.5 * (base.get(r, c) + base.get((h - r) % h, (w - c) % w))
        });
        let (_, im) = ri_domain(&dft2(&even));
        assert!(im.pixels().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn ri_domain_reproduces_spectrum() {
        let s = dft2(&random_image(6, 6, 1));
        let (re, im) = ri_domain(&s);
        let rebuilt = ComplexSpectrum {
            width: 6,
            height: 6,
            re: re.into_pixels(),
            im: im.into_pixels(),
        };
        assert_eq!(spectrum(&rebuilt), spectrum(&s));
    }

    #[test]
    fn band_select_sizes() {
        let m = Image::from_fn(8, 8, |r, c| (r * 8 + c) as f64);
        assert_eq!(band_select(&m, &BandSpec::new(BandName::B3, 1.0)).unwrap().len(), 64);
        let center = band_select(&m, &BandSpec::new(BandName::B1, 0.25)).unwrap();
        assert_eq!(center, vec![27.0, 28.0, 35.0, 36.0]);
        assert!(band_select(&m, &BandSpec::new(BandName::B1, 0.0)).is_err());
        assert!(band_select(&m, &BandSpec::new(BandName::B1, 1.5)).is_err());
    }

    #[test]
    fn bands_are_nested() {
        for (w, h) in [(8, 8), (64, 80), (7, 13), (5, 3), (64, 64)] {
            let index_set = |f: f64| -> BTreeSet<(usize, usize)> {
                let (r0, c0, rows, cols) = BandSpec::new(BandName::B1, f).rect(w, h).unwrap();
                (r0..r0 + rows)
                    .flat_map(|r| (c0..c0 + cols).map(move |c| (r, c)))
                    .collect()
            };
            let (b1, b2, b3) = (index_set(0.25), index_set(0.5), index_set(0.75));
            assert!(b1.is_subset(&b2) && b2.is_subset(&b3), "{w}x{h}");
            assert!(b1.contains(&(h / 2, w / 2)));
        }
    }

    #[test]
    fn feature_layout_for_64x64() {
        let img = random_image(64, 64, 2);
        let fv = extract_features(&img, &BandSet::default(), 1e-12).unwrap();
        let per_band = 16 * 16 + 32 * 32 + 48 * 48;
        assert_eq!(fv.len(), 14336);
        assert_eq!(fv.len(), 4 * per_band);
        assert_eq!(fv.domain(Domain::Ri).len(), 2 * per_band);
        assert_eq!(fv.domain(Domain::Spectrum).len(), per_band);
        assert_eq!(fv.domain(Domain::Phase).len(), per_band);
        assert_eq!(
            fv.layout,
            FeatureLayout::for_image(64, 64, &BandSet::default()).unwrap()
        );
        let again = extract_features(&img, &BandSet::default(), 1e-12).unwrap();
        assert_eq!(fv, again);
    }

    #[test]
    fn constant_image_features() {
        let img = Image::filled(8, 8, 0.5);
        let fv = extract_features(&img, &BandSet::default(), 1e-12).unwrap();
        for domain in [Domain::Spectrum, Domain::Phase] {
            let d = fv.domain(domain);
            let mut offset = 0;
            for seg in &d.layout.segments {
                let vals = &d.values[offset..offset + seg.len];
                let nonzero: Vec<_> = vals.iter().filter(|v| v.abs() > 1e-12).collect();
                assert_eq!(nonzero.len(), 1);
                if domain == Domain::Phase {
                    assert_eq!(*nonzero[0], 1.0);
                }
                offset += seg.len;
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn phase_cos_is_bounded(vals in proptest::collection::vec(-5.0f64..5.0, 30)) {
            let img = Image::new(6, 5, vals).unwrap();
            let p = phase_cos(&dft2(&img), 1e-12);
            proptest::prop_assert!(p.pixels().iter().all(|v| (-1.0..=1.0).contains(v)));
        }

        #[test]
        fn spectrum_is_centrosymmetric(seed in 0u64..1000) {
            let img = random_image(7, 6, seed);
            let m = spectrum(&dft2(&img));
            let (w, h) = (7, 6);
            // DC at (h/2, w/2): mirror index relative to DC, modulo size
            for r in 0..h {
                for c in 0..w {
                    let mr = (2 * (h / 2) + h - r) % h;
                    let mc = (2 * (w / 2) + w - c) % w;
                    proptest::prop_assert!((m.get(r, c) - m.get(mr, mc)).abs() < 1e-9);
                }
            }
        }
    }
}
