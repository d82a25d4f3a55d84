#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use whitesr::grid::{build_kernel, circular_convolve, ImageGrid, KernelSpec};
use whitesr::operators::{Decimator, RegularizerShape};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ImageGrid {
    ImageGrid::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Dense matrix of a linear map given by its action on unit impulses.
pub fn dense_from_action(rows: usize, cols: usize, out_len: usize, f: impl Fn(&ImageGrid) -> Vec<f64>) -> DMatrix<f64> {
    let n = rows * cols;
    let mut m = DMatrix::zeros(out_len, n);
    for k in 0..n {
        let mut e = ImageGrid::zeros(rows, cols);
        e.data_mut()[k] = 1.0;
        for (i, v) in f(&e).into_iter().enumerate() {
            m[(i, k)] = v;
        }
    }
    m
}

/// Circular blur as a dense matrix, built by direct spatial convolution.
pub fn dense_blur(kernel: &KernelSpec, rows: usize, cols: usize) -> DMatrix<f64> {
    let k = build_kernel(kernel).unwrap();
    dense_from_action(rows, cols, rows * cols, |e| circular_convolve(e, &k).into_data())
}

/// Top-left-sample decimation as a dense selection matrix.
pub fn dense_select(dec: &Decimator) -> DMatrix<f64> {
    let (hr, hc) = dec.hr_shape();
    let (lr, lc) = dec.lr_shape();
    let (dr, dc) = dec.factors();
    let mut s = DMatrix::zeros(lr * lc, hr * hc);
    for i in 0..lr {
        for j in 0..lc {
            s[(i * lc + j, (i * dr) * hc + j * dc)] = 1.0;
        }
    }
    s
}

/// Stacked regulariser blocks built from explicit periodic stencils.
pub fn dense_regularizer(shape: RegularizerShape, rows: usize, cols: usize) -> Vec<DMatrix<f64>> {
    let n = rows * cols;
    match shape {
        RegularizerShape::Identity => vec![DMatrix::identity(n, n)],
        RegularizerShape::Gradient => {
            let mut h = DMatrix::zeros(n, n);
            let mut v = DMatrix::zeros(n, n);
            for i in 0..rows {
                for j in 0..cols {
                    let p = i * cols + j;
                    h[(p, p)] -= 1.0;
                    h[(p, i * cols + (j + 1) % cols)] += 1.0;
                    v[(p, p)] -= 1.0;
                    v[(p, ((i + 1) % rows) * cols + j)] += 1.0;
                }
            }
            vec![h, v]
        }
    }
}

/// Solves `(μ AᵀA + Σ LⱼᵀLⱼ + εI) x = μ Aᵀb + Σ Lⱼᵀvⱼ` densely.
pub fn dense_l2l2(a: &DMatrix<f64>, ls: &[DMatrix<f64>], b: &[f64], v: &[Vec<f64>], mu: f64, eps: f64) -> Vec<f64> {
    let n = a.ncols();
    let mut lhs = a.transpose() * a * mu + DMatrix::identity(n, n) * eps;
    let mut rhs = a.transpose() * DVector::from_column_slice(b) * mu;
    for (l, vj) in ls.iter().zip(v) {
        lhs += l.transpose() * l;
        rhs += l.transpose() * DVector::from_column_slice(vj);
    }
    let x = lhs.lu().solve(&rhs).expect("dense normal matrix is invertible");
    x.iter().copied().collect()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

/// Unitary 2-D DFT matrix for row-major vectorisation.
pub fn unitary_dft(rows: usize, cols: usize) -> DMatrix<Complex64> {
    let n = rows * cols;
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |p, q| {
        let (u, v) = (p / cols, p % cols);
        let (r, c) = (q / cols, q % cols);
        let phase = -2.0 * std::f64::consts::PI * ((u * r) as f64 / rows as f64 + (v * c) as f64 / cols as f64);
        Complex64::from_polar(scale, phase)
    })
}

pub fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

pub fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// 1-D brute-force minimiser of `g(t) + (β/2)(t - q)²` by a dense scan
/// followed by golden-section polishing.
pub fn brute_prox_1d(g: impl Fn(f64) -> f64, q: f64, beta: f64, lo: f64, hi: f64) -> f64 {
    let f = |t: f64| g(t) + 0.5 * beta * (t - q).powi(2);
    let steps = 4000;
    let h = (hi - lo) / steps as f64;
    let mut best = lo;
    for k in 0..=steps {
        let t = lo + h * k as f64;
        if f(t) < f(best) {
            best = t;
        }
    }
    golden(&f, (best - h).max(lo), (best + h).min(hi))
}

pub fn golden(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    for _ in 0..200 {
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
        if b - a < 1e-13 {
            break;
        }
    }
    let m = 0.5 * (a + b);
    [a, b, 0.0].into_iter().fold(m, |best, t| if f(t) < f(best) { t } else { best })
}

/// 2-D brute-force minimiser of `g(t) + (β/2)‖t - q‖²` in polar
/// coordinates: angle scan with golden refinement, golden search over the
/// radius for each angle.
pub fn brute_prox_2d(g: impl Fn(f64, f64) -> f64, q: (f64, f64), beta: f64) -> (f64, f64) {
    let f = |a: f64, b: f64| g(a, b) + 0.5 * beta * ((a - q.0).powi(2) + (b - q.1).powi(2));
    let reach = q.0.hypot(q.1) + 1.0;
    let radius = |theta: f64| golden(&|r: f64| f(r * theta.cos(), r * theta.sin()), 0.0, reach);
    let along = |theta: f64| {
        let r = radius(theta);
        f(r * theta.cos(), r * theta.sin())
    };
    let steps = 720;
    let h = std::f64::consts::TAU / steps as f64;
    let scan: Vec<(f64, f64)> = (0..steps).map(|k| k as f64 * h).map(|t| (t, along(t))).collect();
    let best = scan.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    let theta = golden(&along, best - h, best + h);
    let r = radius(theta);
    (r * theta.cos(), r * theta.sin())
}
