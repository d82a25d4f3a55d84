//! Regularisation functions `G` paired with their operator `L`, the proximity
//! maps used by ADMM, and the CEL0 penalty and reweighting formulas.

use std::fmt;
use std::str::FromStr;

use crate::error::{param_err, shape_err, Error, Result};
use crate::grid::{build_kernel, circular_convolve, ImageGrid, KernelSpec};
use crate::operators::{forward_diff_h, forward_diff_v, RegularizerShape};

/// Literal (as usually printed) or exact proximal calculus for the two maps
/// where they differ: anisotropic TV and non-negative weighted ℓ1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ProxMode {
    #[default]
    Exact,
    /// TVA: group shrinkage with the ℓ1 norm in the denominator.
    /// Non-negative WL1: `max(0, |q| - w/β)`.
    Literal,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RegularizerKind {
    /// `G(t) = ½‖t‖²` on the gradient.
    Tik,
    /// Isotropic TV.
    Tvi,
    /// Anisotropic TV.
    Tva { mode: ProxMode },
    /// Weighted isotropic TV; the weights come from an [`AlphaRule`].
    Wtv,
    /// Weighted ℓ1 on the pixels (`w ≡ 1` when absent).
    Wl1 { weights: Option<ImageGrid> },
    /// Weighted ℓ1 plus a non-negativity constraint.
    Wl1Nonneg { weights: Option<ImageGrid>, mode: ProxMode },
    /// `G ≡ 0` with `L = I`; the prox is the identity.
    Zero,
}

impl RegularizerKind {
    pub fn operator_shape(&self) -> RegularizerShape {
        match self {
            Self::Tik | Self::Tvi | Self::Tva { .. } | Self::Wtv => RegularizerShape::Gradient,
            Self::Wl1 { .. } | Self::Wl1Nonneg { .. } | Self::Zero => RegularizerShape::Identity,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Tik => "tik",
            Self::Tvi => "tvi",
            Self::Tva { .. } => "tva",
            Self::Wtv => "wtv",
            Self::Wl1 { .. } => "wl1",
            Self::Wl1Nonneg { .. } => "wl1+",
            Self::Zero => "zero",
        }
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        let weights = match self {
            Self::Wl1 { weights } | Self::Wl1Nonneg { weights, .. } => weights.as_ref(),
            _ => None,
        };
        if let Some(w) = weights {
            w.check_shape(rows, cols, "regulariser weights")?;
            let strict = matches!(self, Self::Wl1 { .. });
            if w.data().iter().any(|&v| !v.is_finite() || v < 0.0 || (strict && v == 0.0)) {
                return param_err("regulariser weights must be positive and finite");
            }
        }
        Ok(())
    }

    /// Evaluates `G(t)`; `alpha` is used only by WTV.
    pub fn value(&self, t: &[ImageGrid], alpha: Option<&ImageGrid>) -> f64 {
        let pairs = || t[0].data().iter().zip(t[1].data());
        match self {
            Self::Tik => t.iter().map(|g| 0.5 * g.norm_sq()).sum(),
            Self::Tvi => pairs().map(|(h, v)| h.hypot(*v)).sum(),
            Self::Tva { .. } => pairs().map(|(h, v)| h.abs() + v.abs()).sum(),
            Self::Wtv => match alpha {
                Some(a) => pairs().zip(a.data()).map(|((h, v), w)| w * h.hypot(*v)).sum(),
                None => pairs().map(|(h, v)| h.hypot(*v)).sum(),
            },
            Self::Wl1 { weights } | Self::Wl1Nonneg { weights, .. } => {
                let nonneg = matches!(self, Self::Wl1Nonneg { .. });
                if nonneg && t[0].data().iter().any(|&x| x < 0.0) {
                    return f64::INFINITY;
                }
                match weights {
                    Some(w) => t[0].data().iter().zip(w.data()).map(|(x, w)| w * x.abs()).sum(),
                    None => t[0].data().iter().map(|x| x.abs()).sum(),
                }
            }
            Self::Zero => 0.0,
        }
    }

    /// `prox_{G/β}(q)`.
    pub fn prox(&self, q: &[ImageGrid], beta: f64, alpha: Option<&ImageGrid>) -> Result<Vec<ImageGrid>> {
        let expect = self.operator_shape();
        let parts = if expect == RegularizerShape::Gradient { 2 } else { 1 };
        if q.len() != parts {
            return shape_err(format!("{} prox expects {parts} components, got {}", self.name(), q.len()));
        }
        match self {
            Self::Tik => prox_tik(q, beta),
            Self::Tvi => prox_tvi(q, beta),
            Self::Tva { mode } => prox_tva(q, beta, *mode),
            Self::Wtv => match alpha {
                Some(a) => prox_wtv(q, beta, a),
                None => prox_tvi(q, beta),
            },
            Self::Wl1 { weights } => {
                let w = weights.clone().unwrap_or_else(|| ImageGrid::filled(q[0].rows(), q[0].cols(), 1.0));
                Ok(vec![prox_wl1(&q[0], beta, &w)?])
            }
            Self::Wl1Nonneg { weights, mode } => {
                let w = weights.clone().unwrap_or_else(|| ImageGrid::filled(q[0].rows(), q[0].cols(), 1.0));
                Ok(vec![prox_wl1_nonneg(&q[0], beta, &w, *mode)?])
            }
            Self::Zero => {
                check_beta(beta)?;
                Ok(q.to_vec())
            }
        }
    }
}

impl fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "tik" => Self::Tik,
            "tvi" => Self::Tvi,
            "tva" => Self::Tva { mode: ProxMode::Exact },
            "tva-literal" => Self::Tva { mode: ProxMode::Literal },
            "wtv" => Self::Wtv,
            "wl1" => Self::Wl1 { weights: None },
            "wl1+" | "wl1-nonneg" => Self::Wl1Nonneg { weights: None, mode: ProxMode::Exact },
            other => return param_err(format!("unknown regulariser '{other}'")),
        })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return param_err(format!("penalty parameter must be positive, got {beta}"));
    }
    Ok(())
}

fn check_pairs(q: &[ImageGrid]) -> Result<()> {
    if q.len() != 2 || q[0].shape() != q[1].shape() {
        return shape_err("expected two gradient components of equal shape");
    }
    Ok(())
}

/// Scalar soft threshold `sign(q) max(|q| - thr, 0)`.
pub fn soft_threshold(q: f64, thr: f64) -> f64 {
    if q > thr {
        q - thr
    } else if q < -thr {
        q + thr
    } else {
        0.0
    }
}

/// Group shrinkage `max(1 - thr/norm, 0) (h, v)`.
pub fn shrink_pair(h: f64, v: f64, thr: f64, norm: f64) -> (f64, f64) {
    if norm <= thr || norm == 0.0 {
        (0.0, 0.0)
    } else {
        let s = 1.0 - thr / norm;
        (s * h, s * v)
    }
}

fn map_pairs(q: &[ImageGrid], f: impl Fn(usize, f64, f64) -> (f64, f64)) -> Vec<ImageGrid> {
    let (rows, cols) = q[0].shape();
    let mut h = ImageGrid::zeros(rows, cols);
    let mut v = ImageGrid::zeros(rows, cols);
    for i in 0..q[0].len() {
        let (a, b) = f(i, q[0].data()[i], q[1].data()[i]);
        h.data_mut()[i] = a;
        v.data_mut()[i] = b;
    }
    vec![h, v]
}

pub fn prox_tik(q: &[ImageGrid], beta: f64) -> Result<Vec<ImageGrid>> {
    check_beta(beta)?;
    let s = beta / (1.0 + beta);
    Ok(q.iter().map(|g| g.scale(s)).collect())
}

pub fn prox_tvi(q: &[ImageGrid], beta: f64) -> Result<Vec<ImageGrid>> {
    check_beta(beta)?;
    check_pairs(q)?;
    Ok(map_pairs(q, |_, h, v| shrink_pair(h, v, 1.0 / beta, h.hypot(v))))
}

pub fn prox_tva(q: &[ImageGrid], beta: f64, mode: ProxMode) -> Result<Vec<ImageGrid>> {
    check_beta(beta)?;
    check_pairs(q)?;
    let thr = 1.0 / beta;
    Ok(match mode {
        ProxMode::Exact => map_pairs(q, |_, h, v| (soft_threshold(h, thr), soft_threshold(v, thr))),
        ProxMode::Literal => map_pairs(q, |_, h, v| shrink_pair(h, v, thr, h.abs() + v.abs())),
    })
}

pub fn prox_wtv(q: &[ImageGrid], beta: f64, alpha: &ImageGrid) -> Result<Vec<ImageGrid>> {
    check_beta(beta)?;
    check_pairs(q)?;
    alpha.check_shape(q[0].rows(), q[0].cols(), "WTV weights")?;
    if alpha.data().iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return param_err("WTV weights must be positive");
    }
    let a = alpha.data();
    Ok(map_pairs(q, |i, h, v| shrink_pair(h, v, a[i] / beta, h.hypot(v))))
}

pub fn prox_wl1(q: &ImageGrid, beta: f64, w: &ImageGrid) -> Result<ImageGrid> {
    check_beta(beta)?;
    w.check_shape(q.rows(), q.cols(), "WL1 weights")?;
    if w.data().iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return param_err("WL1 weights must be positive");
    }
    Ok(q.zip_map(w, |q, w| soft_threshold(q, w / beta)))
}

pub fn prox_wl1_nonneg(q: &ImageGrid, beta: f64, w: &ImageGrid, mode: ProxMode) -> Result<ImageGrid> {
    check_beta(beta)?;
    w.check_shape(q.rows(), q.cols(), "WL1 weights")?;
    if w.data().iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return param_err("WL1 weights must be nonnegative");
    }
    Ok(match mode {
        ProxMode::Exact => q.zip_map(w, |q, w| (q - w / beta).max(0.0)),
        ProxMode::Literal => q.zip_map(w, |q, w| (q.abs() - w / beta).max(0.0)),
    })
}

/// Parameters of the CEL0 relaxation: the regularisation weight and the
/// column norms `‖a_i‖` of `A = SK`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cel0Params {
    pub mu: f64,
    pub col_norms: ImageGrid,
}

impl Cel0Params {
    pub fn new(mu: f64, col_norms: ImageGrid) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return param_err(format!("CEL0 parameter must be positive, got {mu}"));
        }
        if col_norms.data().iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::Degenerate("CEL0 needs strictly positive column norms".into()));
        }
        Ok(Self { mu, col_norms })
    }

    fn check(&self, x: &ImageGrid) -> Result<()> {
        x.check_shape(self.col_norms.rows(), self.col_norms.cols(), "CEL0 argument")
    }
}

/// `φ(s) = 1 - (μa²/2)(|s| - θ)²` for `|s| ≤ θ = √(2/μ)/a`, and 1 beyond.
pub fn cel0_phi(s: f64, mu: f64, a: f64) -> f64 {
    let theta = (2.0 / mu).sqrt() / a;
    let s = s.abs();
    if s <= theta {
        1.0 - 0.5 * mu * a * a * (s - theta) * (s - theta)
    } else {
        1.0
    }
}

/// Derivative of `φ` with respect to `|s|`.
pub fn cel0_weight(s: f64, mu: f64, a: f64) -> f64 {
    let s = s.abs();
    if s <= (2.0 / mu).sqrt() / a {
        (mu * ((2.0 / mu).sqrt() * a - a * a * s)).max(0.0)
    } else {
        0.0
    }
}

pub fn cel0_penalty(x: &ImageGrid, params: &Cel0Params) -> Result<f64> {
    params.check(x)?;
    Ok(x.data()
        .iter()
        .zip(params.col_norms.data())
        .map(|(&s, &a)| cel0_phi(s, params.mu, a))
        .sum())
}

pub fn cel0_weights(x: &ImageGrid, params: &Cel0Params) -> Result<ImageGrid> {
    params.check(x)?;
    Ok(x.zip_map(&params.col_norms, |s, a| cel0_weight(s, params.mu, a)))
}

/// Per-pixel WTV weights recomputed from the current iterate.
pub trait AlphaRule: Send + Sync + fmt::Debug {
    fn alpha(&mut self, x: &ImageGrid) -> Result<ImageGrid>;
}

/// Default WTV weights `α = 1/(1 + κ g)` with `g` the Gaussian-smoothed
/// gradient magnitude. When `kappa` is unset it is calibrated on the first
/// iterate so that the mean weight equals `target_mean`, then kept.
#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedGradientAlpha {
    pub kappa: Option<f64>,
    pub sigma: f64,
    pub target_mean: f64,
}

impl Default for SmoothedGradientAlpha {
    fn default() -> Self {
        Self { kappa: None, sigma: 1.0, target_mean: 0.5 }
    }
}

impl AlphaRule for SmoothedGradientAlpha {
    fn alpha(&mut self, x: &ImageGrid) -> Result<ImageGrid> {
        let g = smoothed_gradient_magnitude(x, self.sigma)?;
        let kappa = match self.kappa {
            Some(k) => k,
            None => {
                let k = calibrate_kappa(&g, self.target_mean)?;
                self.kappa = Some(k);
                k
            }
        };
        wtv_alpha_from_magnitude(&g, kappa)
    }
}

pub fn smoothed_gradient_magnitude(x: &ImageGrid, sigma: f64) -> Result<ImageGrid> {
    let dh = forward_diff_h(x);
    let dv = forward_diff_v(x);
    let mag = dh.zip_map(&dv, f64::hypot);
    if sigma == 0.0 {
        return Ok(mag);
    }
    let band = 2 * (3.0 * sigma).ceil() as usize + 1;
    let kernel = build_kernel(&KernelSpec::Gaussian { band, sigma })?;
    Ok(circular_convolve(&mag, &kernel).map(|v| v.max(0.0)))
}

pub fn wtv_alpha_from_magnitude(g: &ImageGrid, kappa: f64) -> Result<ImageGrid> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return param_err(format!("edge sensitivity must be nonnegative, got {kappa}"));
    }
    Ok(g.map(|v| 1.0 / (1.0 + kappa * v)))
}

/// Default rule applied to an iterate with an explicit `κ`.
pub fn wtv_alpha_update(x: &ImageGrid, kappa: f64) -> Result<ImageGrid> {
    wtv_alpha_from_magnitude(&smoothed_gradient_magnitude(x, 1.0)?, kappa)
}

/// `κ ≥ 0` with `mean(1/(1+κ g)) = target`, or the largest useful `κ` when
/// too many pixels are flat for the target to be reached.
pub fn calibrate_kappa(g: &ImageGrid, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return param_err(format!("target mean weight must lie in (0, 1), got {target}"));
    }
    let gmax = g.max();
    if gmax <= 0.0 {
        return Ok(0.0);
    }
    let mean = |k: f64| g.data().iter().map(|v| 1.0 / (1.0 + k * v)).sum::<f64>() / g.len() as f64;
    let mut hi = 1.0 / gmax;
    while mean(hi) > target {
        hi *= 2.0;
        if hi * gmax > 1e15 {
            return Ok(hi);
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
