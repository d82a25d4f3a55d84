//! Image containers, the 2-D DFT convention, and blur-kernel construction.
//!
//! Images are real rasters stored row-major (vectorisation by rows). The
//! forward DFT is unnormalised (the DC coefficient equals the sample sum) and
//! the inverse carries the `1/(rows*cols)` factor. Every spectral formula in
//! the crate assumes this convention.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{param_err, shape_err, Error, Result};

/// Real-valued 2-D raster, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return shape_err(format!("grid dimensions must be positive, got {rows}x{cols}"));
        }
        if data.len() != rows * cols {
            return shape_err(format!(
                "declared {rows}x{cols} but data holds {} samples",
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Circular access with signed offsets.
    #[inline]
    pub fn get_wrapped(&self, r: isize, c: isize) -> f64 {
        let rr = r.rem_euclid(self.rows as isize) as usize;
        let cc = c.rem_euclid(self.cols as isize) as usize;
        self.data[rr * self.cols + cc]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Row-major vectorisation.
    pub fn vectorise(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Inverse of [`ImageGrid::vectorise`].
    pub fn unvectorise(rows: usize, cols: usize, v: Vec<f64>) -> Result<Self> {
        Self::new(rows, cols, v)
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Elementwise combination; panics on shape mismatch.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "zip_map shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub(crate) fn check_shape(&self, rows: usize, cols: usize, what: &str) -> Result<()> {
        if self.shape() != (rows, cols) {
            return shape_err(format!(
                "{what}: expected {rows}x{cols}, got {}x{}",
                self.rows, self.cols
            ));
        }
        Ok(())
    }
}

/// Complex 2-D array in DFT ordering: frequency `(u, v)` lives at `u*cols + v`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralGrid {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

/// Eigenvalues of a block-circulant-with-circulant-blocks operator, in the
/// same layout as [`SpectralGrid`].
pub type SpectralDiagonal = SpectralGrid;

impl SpectralGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return shape_err(format!("grid dimensions must be positive, got {rows}x{cols}"));
        }
        if data.len() != rows * cols {
            return shape_err(format!(
                "declared {rows}x{cols} but data holds {} samples",
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: Complex64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.data[u * self.cols + v]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    /// Pointwise product, i.e. composition of two circulant operators.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return shape_err("hadamard product of differently shaped spectra");
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect(),
        })
    }
}

/// Reusable row/column FFT plans for a fixed grid shape.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2").field("rows", &self.rows).field("cols", &self.cols).finish()
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let (row_plan, col_plan) =
            if inverse { (&self.row_inv, &self.col_inv) } else { (&self.row_fwd, &self.col_fwd) };
        let scratch_len =
            row_plan.get_inplace_scratch_len().max(col_plan.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
        for row in buf.chunks_exact_mut(self.cols) {
            row_plan.process_with_scratch(row, &mut scratch);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                column[r] = buf[r * self.cols + c];
            }
            col_plan.process_with_scratch(&mut column, &mut scratch);
            for r in 0..self.rows {
                buf[r * self.cols + c] = column[r];
            }
        }
    }

    pub fn forward(&self, img: &ImageGrid) -> Result<SpectralGrid> {
        img.check_shape(self.rows, self.cols, "dft2 input")?;
        let mut buf: Vec<Complex64> = img.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        Ok(SpectralGrid { rows: self.rows, cols: self.cols, data: buf })
    }

    pub fn forward_complex(&self, spec: &SpectralGrid) -> Result<SpectralGrid> {
        if spec.shape() != (self.rows, self.cols) {
            return shape_err("forward_complex: plan/grid shape mismatch");
        }
        let mut buf = spec.data.clone();
        self.transform(&mut buf, false);
        Ok(SpectralGrid { rows: self.rows, cols: self.cols, data: buf })
    }

    /// Inverse transform including the `1/(rows*cols)` factor; returns the
    /// complex result so callers can inspect the imaginary residue.
    pub fn inverse_complex(&self, spec: &SpectralGrid) -> Result<SpectralGrid> {
        if spec.shape() != (self.rows, self.cols) {
            return shape_err("idft2: plan/grid shape mismatch");
        }
        let mut buf = spec.data.clone();
        self.transform(&mut buf, true);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
        Ok(SpectralGrid { rows: self.rows, cols: self.cols, data: buf })
    }

    /// Inverse transform keeping only the real part.
    pub fn inverse(&self, spec: &SpectralGrid) -> Result<ImageGrid> {
        let z = self.inverse_complex(spec)?;
        Ok(ImageGrid { rows: self.rows, cols: self.cols, data: z.data.iter().map(|c| c.re).collect() })
    }
}

/// Unnormalised forward 2-D DFT.
pub fn dft2(img: &ImageGrid) -> Result<SpectralGrid> {
    Fft2::new(img.rows, img.cols).forward(img)
}

/// Inverse 2-D DFT (with `1/(rows*cols)`), real part.
pub fn idft2(spec: &SpectralGrid) -> Result<ImageGrid> {
    Fft2::new(spec.rows, spec.cols).inverse(spec)
}

/// Blur kernel description.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelSpec {
    /// Isotropic Gaussian sampled on a `band x band` integer lattice.
    Gaussian { band: usize, sigma: f64 },
    /// Constant `1/(rows*cols)` box.
    Uniform { rows: usize, cols: usize },
    /// Dirac kernel (no blur).
    Identity,
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { band, sigma } => {
                if band == 0 || band % 2 == 0 {
                    return param_err(format!("gaussian band must be odd and positive, got {band}"));
                }
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return param_err(format!("gaussian sigma must be positive, got {sigma}"));
                }
            }
            KernelSpec::Uniform { rows, cols } => {
                if rows == 0 || cols == 0 {
                    return param_err("uniform kernel support must be positive");
                }
            }
            KernelSpec::Identity => {}
        }
        Ok(())
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian { band, sigma } => write!(f, "gaussian:{band}:{sigma}"),
            KernelSpec::Uniform { rows, cols } => write!(f, "uniform:{rows}:{cols}"),
            KernelSpec::Identity => write!(f, "identity"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Accepts `gaussian:BAND:SIGMA`, `uniform:ROWS:COLS` and `identity`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::InvalidParameter(format!("unrecognised kernel spec '{s}'"));
        let spec = match parts.as_slice() {
            ["identity"] => KernelSpec::Identity,
            ["gaussian", band, sigma] => KernelSpec::Gaussian {
                band: band.parse().map_err(|_| bad())?,
                sigma: sigma.parse().map_err(|_| bad())?,
            },
            ["uniform", r, c] => KernelSpec::Uniform {
                rows: r.parse().map_err(|_| bad())?,
                cols: c.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Anchor of a kernel support of the given side: `ceil(side/2) - 1`.
/// Odd sides give the exact centre, even sides the centre-left sample.
#[inline]
pub const fn kernel_anchor(side: usize) -> usize {
    (side + 1) / 2 - 1
}

/// Builds a small unit-sum kernel.
pub fn build_kernel(spec: &KernelSpec) -> Result<ImageGrid> {
    spec.validate()?;
    let kernel = match *spec {
        KernelSpec::Gaussian { band, sigma } => {
            let half = (band / 2) as f64;
            let raw = ImageGrid::from_fn(band, band, |r, c| {
                let i = r as f64 - half;
                let j = c as f64 - half;
                (-(i * i + j * j) / (2.0 * sigma * sigma)).exp()
            });
            let total = raw.sum();
            raw.scale(1.0 / total)
        }
        KernelSpec::Uniform { rows, cols } => {
            ImageGrid::filled(rows, cols, 1.0 / (rows * cols) as f64)
        }
        KernelSpec::Identity => ImageGrid::filled(1, 1, 1.0),
    };
    Ok(kernel)
}

/// Zero-embeds `kernel` into a `rows x cols` grid with its anchor at `(0,0)`
/// and returns the DFT, i.e. the eigenvalues of circular convolution.
pub fn kernel_to_otf(kernel: &ImageGrid, rows: usize, cols: usize) -> Result<SpectralDiagonal> {
    if kernel.rows() > rows || kernel.cols() > cols {
        return shape_err(format!(
            "kernel {}x{} does not fit in a {rows}x{cols} grid",
            kernel.rows(),
            kernel.cols()
        ));
    }
    let psf = embed_kernel(kernel, rows, cols);
    dft2(&psf)
}

/// Circularly shifted zero-embedding of a kernel (anchor at the origin).
pub fn embed_kernel(kernel: &ImageGrid, rows: usize, cols: usize) -> ImageGrid {
    let ar = kernel_anchor(kernel.rows()) as isize;
    let ac = kernel_anchor(kernel.cols()) as isize;
    let mut psf = ImageGrid::zeros(rows, cols);
    for a in 0..kernel.rows() {
        for b in 0..kernel.cols() {
            let r = (a as isize - ar).rem_euclid(rows as isize) as usize;
            let c = (b as isize - ac).rem_euclid(cols as isize) as usize;
            let idx = r * cols + c;
            psf.data[idx] += kernel.get(a, b);
        }
    }
    psf
}

/// Direct circular convolution `y(p) = sum_a k(a) x(p - (a - anchor))`.
/// Quadratic in the kernel size; the spectral route is used in solvers.
pub fn circular_convolve(x: &ImageGrid, kernel: &ImageGrid) -> ImageGrid {
    let ar = kernel_anchor(kernel.rows()) as isize;
    let ac = kernel_anchor(kernel.cols()) as isize;
    ImageGrid::from_fn(x.rows(), x.cols(), |r, c| {
        let mut acc = 0.0;
        for a in 0..kernel.rows() {
            for b in 0..kernel.cols() {
                let w = kernel.get(a, b);
                if w != 0.0 {
                    let rr = r as isize - (a as isize - ar);
                    let cc = c as isize - (b as isize - ac);
                    acc += w * x.get_wrapped(rr, cc);
                }
            }
        }
        acc
    })
}

/// Applies a circulant operator given by its spectral diagonal.
pub fn apply_otf(plan: &Fft2, otf: &SpectralDiagonal, x: &ImageGrid) -> Result<ImageGrid> {
    let spec = plan.forward(x)?;
    plan.inverse(&spec.hadamard(otf)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rows: usize, cols: usize, seed: u64) -> ImageGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageGrid::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn naive_dft(x: &ImageGrid) -> Vec<Complex64> {
        let (m, n) = x.shape();
        let mut out = vec![Complex64::new(0.0, 0.0); m * n];
        for u in 0..m {
            for v in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..m {
                    for j in 0..n {
                        let ph = -2.0
                            * std::f64::consts::PI
                            * ((u * i) as f64 / m as f64 + (v * j) as f64 / n as f64);
                        acc += x.get(i, j) * Complex64::from_polar(1.0, ph);
                    }
                }
                out[u * n + v] = acc;
            }
        }
        out
    }

    #[test]
    fn impulse_transforms_to_ones() {
        let mut x = ImageGrid::zeros(4, 4);
        x.set(0, 0, 1.0);
        let s = dft2(&x).unwrap();
        for z in s.data() {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn constant_has_only_dc() {
        let x = ImageGrid::filled(3, 5, 2.5);
        let s = dft2(&x).unwrap();
        assert!((s.get(0, 0) - Complex64::new(37.5, 0.0)).norm() < 1e-12);
        for (k, z) in s.data().iter().enumerate().skip(1) {
            assert!(z.norm() < 1e-12, "bin {k} = {z}");
        }
    }

    #[test]
    fn matches_direct_dft_and_roundtrips() {
        let x = random_grid(8, 8, 11);
        let fast = dft2(&x).unwrap();
        let slow = naive_dft(&x);
        for (a, b) in fast.data().iter().zip(&slow) {
            assert!((a - b).norm() <= 1e-12 * (1.0 + b.norm()));
        }
        let back = idft2(&fast).unwrap();
        let err = back.sub(&x).norm() / x.norm();
        assert!(err <= 1e-12, "roundtrip {err}");
        let energy: f64 = fast.data().iter().map(|z| z.norm_sqr()).sum::<f64>() / 64.0;
        assert!((energy - x.norm_sq()).abs() <= 1e-12 * x.norm_sq());
    }

    #[test]
    fn rectangular_transform_matches_direct() {
        let x = random_grid(3, 6, 5);
        let fast = dft2(&x).unwrap();
        for (a, b) in fast.data().iter().zip(naive_dft(&x)) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn conjugate_symmetry_of_real_input() {
        let x = random_grid(5, 6, 3);
        let s = dft2(&x).unwrap();
        for u in 0..5 {
            for v in 0..6 {
                let mirrored = s.get((5 - u) % 5, (6 - v) % 6).conj();
                assert!((s.get(u, v) - mirrored).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn data_length_mismatch_is_rejected() {
        assert!(matches!(ImageGrid::new(2, 2, vec![0.0; 3]), Err(Error::Shape(_))));
        assert!(SpectralGrid::new(2, 3, vec![Complex64::new(0.0, 0.0); 5]).is_err());
    }

    #[test]
    fn gaussian_band3_weights() {
        let k = build_kernel(&KernelSpec::Gaussian { band: 3, sigma: 0.5 }).unwrap();
        // e^{-2}, e^{-4} relative to centre, normalised by 1 + 4e^{-2} + 4e^{-4}
        let e2 = (-2.0_f64).exp();
        let e4 = (-4.0_f64).exp();
        let z = 1.0 + 4.0 * e2 + 4.0 * e4;
        assert!((k.get(1, 1) - 1.0 / z).abs() < 1e-12);
        assert!((k.get(1, 1) - 0.619347).abs() < 1e-5);
        assert!((k.get(0, 1) - 0.083820).abs() < 1e-5);
        assert!((k.get(0, 0) - 0.011344).abs() < 1e-5);
        assert!((k.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trivial_kernels() {
        let u = build_kernel(&KernelSpec::Uniform { rows: 2, cols: 2 }).unwrap();
        assert_eq!(u.data(), &[0.25; 4]);
        let g = build_kernel(&KernelSpec::Gaussian { band: 1, sigma: 7.0 }).unwrap();
        assert_eq!(g.data(), &[1.0]);
    }

    #[test]
    fn invalid_kernels_rejected() {
        assert!(build_kernel(&KernelSpec::Gaussian { band: 4, sigma: 1.0 }).is_err());
        assert!(build_kernel(&KernelSpec::Gaussian { band: 5, sigma: 0.0 }).is_err());
        assert!("gaussian:13".parse::<KernelSpec>().is_err());
        assert_eq!(
            "gaussian:13:3".parse::<KernelSpec>().unwrap(),
            KernelSpec::Gaussian { band: 13, sigma: 3.0 }
        );
        assert_eq!(
            "uniform:4:2".parse::<KernelSpec>().unwrap(),
            KernelSpec::Uniform { rows: 4, cols: 2 }
        );
    }

    #[test]
    fn anchors() {
        assert_eq!(kernel_anchor(1), 0);
        assert_eq!(kernel_anchor(2), 0);
        assert_eq!(kernel_anchor(3), 1);
        assert_eq!(kernel_anchor(4), 1);
        assert_eq!(kernel_anchor(13), 6);
    }

    #[test]
    fn identity_otf_and_dc_gain() {
        let one = ImageGrid::filled(1, 1, 1.0);
        let otf = kernel_to_otf(&one, 4, 4).unwrap();
        assert!(otf.data().iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let g = build_kernel(&KernelSpec::Gaussian { band: 5, sigma: 1.3 }).unwrap();
        let otf = kernel_to_otf(&g, 9, 7).unwrap();
        assert!((otf.get(0, 0) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(kernel_to_otf(&g, 4, 9).is_err());
    }

    #[test]
    fn otf_route_equals_direct_circular_convolution() {
        for (rows, cols, spec) in [
            (8, 8, KernelSpec::Uniform { rows: 2, cols: 2 }),
            (6, 8, KernelSpec::Gaussian { band: 3, sigma: 0.8 }),
            (5, 7, KernelSpec::Uniform { rows: 3, cols: 2 }),
        ] {
            let k = build_kernel(&spec).unwrap();
            let x = random_grid(rows, cols, 21);
            let plan = Fft2::new(rows, cols);
            let otf = kernel_to_otf(&k, rows, cols).unwrap();
            let fast = apply_otf(&plan, &otf, &x).unwrap();
            let slow = circular_convolve(&x, &k);
            assert!(fast.sub(&slow).max_abs() < 1e-10, "{spec}");
        }
    }

    #[test]
    fn dense_circulant_eigenvalues_of_uniform_2x2() {
        // Column j of the circulant operator is the response to an impulse at j;
        // projecting it onto Fourier mode f must return otf[f] times that mode.
        let k = build_kernel(&KernelSpec::Uniform { rows: 2, cols: 2 }).unwrap();
        let otf = kernel_to_otf(&k, 4, 4).unwrap();
        for u in 0..4 {
            for v in 0..4 {
                let mode = ImageGrid::from_fn(4, 4, |i, j| {
                    (2.0 * std::f64::consts::PI * ((u * i) as f64 / 4.0 + (v * j) as f64 / 4.0)).cos()
                });
                let mode_s = ImageGrid::from_fn(4, 4, |i, j| {
                    (2.0 * std::f64::consts::PI * ((u * i) as f64 / 4.0 + (v * j) as f64 / 4.0)).sin()
                });
                let kc = circular_convolve(&mode, &k);
                let ks = circular_convolve(&mode_s, &k);
                let lam = otf.get(u, v);
                for i in 0..4 {
                    for j in 0..4 {
                        // K e^{i theta} = lam e^{i theta}
                        let lhs = Complex64::new(kc.get(i, j), ks.get(i, j));
                        let rhs = lam * Complex64::new(mode.get(i, j), mode_s.get(i, j));
                        assert!((lhs - rhs).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn vectorise_roundtrip() {
        let x = random_grid(3, 4, 1);
        let v = x.vectorise();
        assert_eq!(v[4 + 2], x.get(1, 2));
        assert_eq!(ImageGrid::unvectorise(3, 4, v).unwrap(), x);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn linearity_and_parseval(
                rows in 1usize..9, cols in 1usize..9, seed in 0u64..1000, a in -3.0f64..3.0
            ) {
                let x = random_grid(rows, cols, seed);
                let y = random_grid(rows, cols, seed + 7);
                let lhs = dft2(&x.scale(a).add(&y)).unwrap();
                let fx = dft2(&x).unwrap();
                let fy = dft2(&y).unwrap();
                for k in 0..lhs.len() {
                    let rhs = fx.data()[k] * a + fy.data()[k];
                    prop_assert!((lhs.data()[k] - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()) * 10.0);
                }
                let energy: f64 = fx.data().iter().map(|z| z.norm_sqr()).sum::<f64>()
                    / (rows * cols) as f64;
                prop_assert!((energy - x.norm_sq()).abs() <= 1e-12 * x.norm_sq().max(1e-300));
            }
        }
    }
}
