//! Reconstruction quality metrics and the bicubic baseline.

use crate::error::{param_err, Result};
use crate::grid::ImageGrid;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// `20 log10(√N · max / ‖x - x*‖)`, the maximum taken over both images;
/// `+inf` for identical images.
pub fn psnr(x_true: &ImageGrid, x_est: &ImageGrid) -> Result<f64> {
    x_est.check_shape(x_true.rows(), x_true.cols(), "estimate")?;
    let err = x_true.sub(x_est).norm();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = x_true.max().max(x_est.max());
    Ok(20.0 * ((x_true.len() as f64).sqrt() * peak / err).log10())
}

/// `20 log10(‖x - b̄‖ / ‖x - x*‖)`; `+inf` when the estimate is exact.
pub fn isnr(x_true: &ImageGrid, x_est: &ImageGrid, b_bar: &ImageGrid) -> Result<f64> {
    x_est.check_shape(x_true.rows(), x_true.cols(), "estimate")?;
    b_bar.check_shape(x_true.rows(), x_true.cols(), "baseline")?;
    let err = x_true.sub(x_est).norm();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (x_true.sub(b_bar).norm() / err).log10())
}

/// Dynamic range used by [`ssim`]: `max - min` of the reference, or 1 for a
/// constant reference.
pub fn dynamic_range(x: &ImageGrid) -> f64 {
    let r = x.max() - x.min();
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

pub fn ssim(x_true: &ImageGrid, x_est: &ImageGrid) -> Result<f64> {
    ssim_with_range(x_true, x_est, dynamic_range(x_true))
}

/// Normalised 1-D Gaussian window of the given odd length.
pub fn gaussian_window(len: usize, sigma: f64) -> Vec<f64> {
    let c = (len as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..len).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Window side along a dimension: 11, or the largest odd size that fits.
pub fn ssim_window_side(extent: usize) -> usize {
    if extent >= SSIM_WINDOW {
        SSIM_WINDOW
    } else if extent % 2 == 1 {
        extent
    } else {
        extent - 1
    }
}

fn filter_valid(x: &ImageGrid, wr: &[f64], wc: &[f64]) -> ImageGrid {
    let (rows, cols) = x.shape();
    let (or, oc) = (rows + 1 - wr.len(), cols + 1 - wc.len());
    let mut tmp = ImageGrid::zeros(rows, oc);
    for r in 0..rows {
        for c in 0..oc {
            let s: f64 = wc.iter().enumerate().map(|(k, w)| w * x.get(r, c + k)).sum();
            tmp.set(r, c, s);
        }
    }
    ImageGrid::from_fn(or, oc, |r, c| wr.iter().enumerate().map(|(k, w)| w * tmp.get(r + k, c)).sum())
}

/// Mean SSIM over all fully contained Gaussian windows.
pub fn ssim_with_range(x: &ImageGrid, y: &ImageGrid, range: f64) -> Result<f64> {
    y.check_shape(x.rows(), x.cols(), "estimate")?;
    if !(range > 0.0 && range.is_finite()) {
        return param_err(format!("dynamic range must be positive, got {range}"));
    }
    if x.is_empty() {
        return param_err("SSIM of an empty image");
    }
    let wr = gaussian_window(ssim_window_side(x.rows()), SSIM_SIGMA);
    let wc = gaussian_window(ssim_window_side(x.cols()), SSIM_SIGMA);
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let mx = filter_valid(x, &wr, &wc);
    let my = filter_valid(y, &wr, &wc);
    let mxx = filter_valid(&x.zip_map(x, |a, b| a * b), &wr, &wc);
    let myy = filter_valid(&y.zip_map(y, |a, b| a * b), &wr, &wc);
    let mxy = filter_valid(&x.zip_map(y, |a, b| a * b), &wr, &wc);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx.data()[i], my.data()[i]);
        let vx = mxx.data()[i] - ux * ux;
        let vy = myy.data()[i] - uy * uy;
        let cxy = mxy.data()[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / mx.len() as f64)
}

/// Jaccard index `TP / (TP + FN + FP)` after greedy nearest-first one-to-one
/// matching of points within Euclidean distance `delta`.
pub fn jaccard(truth: &[(f64, f64)], detected: &[(f64, f64)], delta: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return param_err(format!("matching radius must be nonnegative, got {delta}"));
    }
    if truth.is_empty() && detected.is_empty() {
        return Ok(1.0);
    }
    let mut candidates = Vec::new();
    for (i, a) in truth.iter().enumerate() {
        for (j, b) in detected.iter().enumerate() {
            let dist = (a.0 - b.0).hypot(a.1 - b.1);
            if dist <= delta {
                candidates.push((dist, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_truth = vec![false; truth.len()];
    let mut used_det = vec![false; detected.len()];
    let mut tp = 0usize;
    for (_, i, j) in candidates {
        if !used_truth[i] && !used_det[j] {
            used_truth[i] = true;
            used_det[j] = true;
            tp += 1;
        }
    }
    let fn_ = truth.len() - tp;
    let fp = detected.len() - tp;
    Ok(tp as f64 / (tp + fn_ + fp) as f64)
}

/// Strictly positive pixels as `(row, col, intensity)`.
pub fn detect_points(x: &ImageGrid) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let v = x.get(r, c);
            if v > 0.0 {
                out.push((r, c, v));
            }
        }
    }
    out
}

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn keys_kernel(s: f64) -> f64 {
    let a = -0.5;
    let s = s.abs();
    if s <= 1.0 {
        (a + 2.0) * s.powi(3) - (a + 3.0) * s * s + 1.0
    } else if s < 2.0 {
        a * s.powi(3) - 5.0 * a * s * s + 8.0 * a * s - 4.0 * a
    } else {
        0.0
    }
}

fn cubic_taps(out_len: usize, factor: usize, in_len: usize) -> Vec<[(usize, f64); 4]> {
    (0..out_len)
        .map(|i| {
            let pos = i as f64 / factor as f64;
            let base = pos.floor();
            let frac = pos - base;
            let mut taps = [(0usize, 0.0); 4];
            for (k, tap) in taps.iter_mut().enumerate() {
                let off = k as isize - 1;
                let idx = (base as isize + off).rem_euclid(in_len as isize) as usize;
                *tap = (idx, keys_kernel(frac - off as f64));
            }
            taps
        })
        .collect()
}

/// Separable bicubic interpolation with periodic extension; HR pixel `I`
/// samples LR position `I / d`.
pub fn bicubic_upsample(b: &ImageGrid, dr: usize, dc: usize) -> Result<ImageGrid> {
    if dr == 0 || dc == 0 {
        return param_err("upsampling factors must be at least 1");
    }
    let (rows, cols) = b.shape();
    let (hr, hc) = (rows * dr, cols * dc);
    let row_taps = cubic_taps(hr, dr, rows);
    let col_taps = cubic_taps(hc, dc, cols);
    let mut tmp = ImageGrid::zeros(rows, hc);
    for r in 0..rows {
        for (c, taps) in col_taps.iter().enumerate() {
            tmp.set(r, c, taps.iter().map(|&(j, w)| w * b.get(r, j)).sum());
        }
    }
    Ok(ImageGrid::from_fn(hr, hc, |r, c| row_taps[r].iter().map(|&(i, w)| w * tmp.get(i, c)).sum()))
}
