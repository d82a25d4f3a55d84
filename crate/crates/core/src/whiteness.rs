//! Residual whiteness: autocorrelation, the scalar whiteness measure, its
//! closed form as a function of μ, and the two parameter-selection rules
//! (whiteness minimisation and the discrepancy principle).

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{param_err, shape_err, Error, Result};
use crate::grid::{Fft2, ImageGrid};
use crate::solver::{residual_norm_from_terms, SpectralCache};

pub const DEFAULT_MU_BRACKET: (f64, f64) = (1e-4, 1e4);
pub const DEFAULT_GRID_POINTS: usize = 60;
pub const DEFAULT_REL_TOL: f64 = 1e-6;
pub const DP_BRACKET: (f64, f64) = (1e-10, 1e14);

/// Circular sample autocorrelation `a(l,m) = (1/n) Σ e(i,j) e(i+l,j+m)`.
pub fn sample_autocorrelation(e: &ImageGrid) -> ImageGrid {
    let (rows, cols) = e.shape();
    let n = e.len() as f64;
    let plan = Fft2::new(rows, cols);
    let spec = plan.forward(e).expect("plan shape matches");
    let power = crate::grid::SpectralGrid::new(
        rows,
        cols,
        spec.data().iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)).collect(),
    )
    .expect("shape preserved");
    // idft(|ẽ|²) gives Σ e(p) e(p - lag); the autocorrelation is even so
    // the sign of the lag does not matter.
    plan.inverse(&power).expect("plan shape matches").scale(1.0 / n)
}

/// `Σ|ẽ|⁴ / (Σ|ẽ|²)²`; 1 for a constant image, `1/n` for a flat spectrum.
pub fn whiteness_of_image(e: &ImageGrid) -> Result<f64> {
    if e.is_all_zero() {
        return Err(Error::Degenerate("whiteness of an all-zero residual is undefined".into()));
    }
    if !e.is_finite() {
        return Err(Error::Numerical("residual contains non-finite samples".into()));
    }
    let scale = e.max_abs();
    let spec = crate::grid::dft2(&e.scale(1.0 / scale))?;
    Ok(spectral_whiteness(spec.data().iter().map(|z| z.norm_sqr())))
}

fn spectral_whiteness(power: impl Iterator<Item = f64>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for p in power {
        num += p * p;
        den += p;
    }
    num / (den * den)
}

/// Closed-form whiteness of the residual of `x*(mu)` from the group scalars.
///
/// Each LR frequency contributes `t_g = |(nu_g - rho_g)/(1 + eta_g mu)|`, which
/// is `d` times the DFT magnitude of the LR residual at that frequency; the
/// measure is scale-free, so this equals `whiteness_of_image` of the residual.
pub fn whiteness_from_terms(eta: &[f64], rho: &[Complex64], nu: &[Complex64], mu: f64) -> Result<f64> {
    if eta.len() != rho.len() || rho.len() != nu.len() {
        return shape_err("group scalar lengths differ");
    }
    let terms: Vec<f64> = eta
        .iter()
        .zip(rho)
        .zip(nu)
        .map(|((e, r), n)| ((n - r) / (1.0 + e * mu)).norm_sqr())
        .collect();
    let peak = terms.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::Degenerate("residual spectrum is identically zero".into()));
    }
    if !peak.is_finite() {
        return Err(Error::Numerical("non-finite residual spectrum".into()));
    }
    Ok(spectral_whiteness(terms.iter().map(|t| t / peak)))
}

pub fn whiteness_of_mu(cache: &SpectralCache, nu: &[Complex64], mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite()) {
        return param_err(format!("mu must be positive and finite, got {mu}"));
    }
    if nu.len() != cache.lr_len() {
        return shape_err("nu has the wrong number of groups");
    }
    whiteness_from_terms(cache.eta(), cache.rho(), nu, mu)
}

/// Result of a one-dimensional minimisation over a log-spaced bracket.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarMinimum {
    pub mu: f64,
    pub value: f64,
    /// The coarse-grid argmin sat on an end of the bracket.
    pub boundary: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchOptions {
    pub bracket: (f64, f64),
    pub grid_points: usize,
    pub rel_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { bracket: DEFAULT_MU_BRACKET, grid_points: DEFAULT_GRID_POINTS, rel_tol: DEFAULT_REL_TOL }
    }
}

impl SearchOptions {
    pub fn with_bracket(lo: f64, hi: f64) -> Self {
        Self { bracket: (lo, hi), ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bracket;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return param_err(format!("invalid bracket [{lo}, {hi}]"));
        }
        if self.grid_points < 3 {
            return param_err("at least three grid points are needed");
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return param_err(format!("relative tolerance must lie in (0, 1), got {}", self.rel_tol));
        }
        Ok(())
    }
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|k| {
            if k == 0 {
                lo
            } else if k + 1 == points {
                hi
            } else {
                (a + (b - a) * k as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

/// Coarse log-grid scan followed by golden-section refinement in `ln mu`
/// around the grid argmin. Non-finite values are treated as `+inf`.
pub fn minimize_log_scalar<F>(f: F, opts: &SearchOptions) -> Result<ScalarMinimum>
where
    F: Fn(f64) -> f64 + Sync,
{
    opts.validate()?;
    let grid = log_grid(opts.bracket.0, opts.bracket.1, opts.grid_points);
    let clean = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
    let values: Vec<f64> = grid.par_iter().map(|&mu| clean(f(mu))).collect();

    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = k;
        }
    }
    if !values[best].is_finite() {
        return Err(Error::Numerical("objective is non-finite on the whole bracket".into()));
    }
    if best == 0 || best + 1 == grid.len() {
        return Ok(ScalarMinimum { mu: grid[best], value: values[best], boundary: true });
    }

    let g = |s: f64| clean(f(s.exp()));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (grid[best - 1].ln(), grid[best + 1].ln());
    let width = (1.0 + opts.rel_tol).ln();
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    while b - a > width {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = g(d);
        }
    }
    let (s, v) = if fc <= fd { (c, fc) } else { (d, fd) };
    if v <= values[best] {
        Ok(ScalarMinimum { mu: s.exp(), value: v, boundary: false })
    } else {
        Ok(ScalarMinimum { mu: grid[best], value: values[best], boundary: false })
    }
}

/// μ minimising the closed-form residual whiteness.
pub fn minimize_whiteness(
    cache: &SpectralCache,
    nu: &[Complex64],
    opts: &SearchOptions,
) -> Result<ScalarMinimum> {
    if nu.len() != cache.lr_len() {
        return shape_err("nu has the wrong number of groups");
    }
    // Surface a degenerate residual as such rather than as non-finite values.
    whiteness_of_mu(cache, nu, opts.bracket.0.max(f64::MIN_POSITIVE))?;
    let (eta, rho) = (cache.eta(), cache.rho());
    let w = |mu: f64| whiteness_from_terms(eta, rho, nu, mu).unwrap_or(f64::INFINITY);
    let coarse = minimize_log_scalar(w, opts)?;
    if coarse.boundary {
        return Ok(coarse);
    }
    // The golden section only resolves the argmin to about the square root of
    // the working precision; the sign change of the slope pins it down fully.
    let slope = |mu: f64| whiteness_slope(eta, rho, nu, mu);
    let step = 4.0 * opts.rel_tol;
    let (lo, hi) = (coarse.mu / (1.0 + step), coarse.mu * (1.0 + step));
    match bisect_sign_change(slope, lo, hi) {
        Some(mu) if w(mu) <= coarse.value * (1.0 + 1e-12) => {
            Ok(ScalarMinimum { mu, value: w(mu), boundary: false })
        }
        _ => Ok(coarse),
    }
}

/// `dW/d ln mu` up to a positive factor, from the group scalars.
pub fn whiteness_slope(eta: &[f64], rho: &[Complex64], nu: &[Complex64], mu: f64) -> f64 {
    let (mut s1, mut s2, mut d1, mut d2) = (0.0, 0.0, 0.0, 0.0);
    for ((e, r), n) in eta.iter().zip(rho).zip(nu) {
        let den = 1.0 + e * mu;
        let p = (n - r).norm_sqr() / (den * den);
        let dp = -2.0 * e * mu * p / den;
        s1 += p;
        s2 += p * p;
        d1 += dp;
        d2 += p * dp;
    }
    d2 * s1 - s2 * d1
}

/// Bisection in `ln mu` for an increasing sign change of `slope` on
/// `[lo, hi]`, run down to adjacent floating-point values.
fn bisect_sign_change(slope: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Option<f64> {
    if !(slope(lo) < 0.0 && slope(hi) > 0.0) {
        return None;
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let s = slope(m.exp());
        if s < 0.0 {
            a = m;
        } else if s > 0.0 {
            b = m;
        } else {
            return Some(m.exp());
        }
    }
    Some((0.5 * (a + b)).exp())
}

/// Ratio between the residual standard deviation and the noise level.
pub fn tau_star(residual_norm: f64, n: usize, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return param_err(format!("noise level must be positive, got {sigma}"));
    }
    if n == 0 {
        return param_err("pixel count must be positive");
    }
    Ok(residual_norm / ((n as f64).sqrt() * sigma))
}

/// Discrepancy principle: μ with `‖SKx*(μ) - b‖ = τ √n σ`, by bisection in
/// `ln μ` on the decreasing residual norm over `bracket`.
pub fn solve_dp_mu_in(
    cache: &SpectralCache,
    nu: &[Complex64],
    sigma: f64,
    tau: f64,
    bracket: (f64, f64),
) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return param_err(format!("discrepancy factor must be positive, got {tau}"));
    }
    if nu.len() != cache.lr_len() {
        return shape_err("nu has the wrong number of groups");
    }
    let n = cache.lr_len();
    tau_star(0.0, n, sigma)?;
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return param_err(format!("invalid bracket [{lo}, {hi}]"));
    }
    let norm = |mu: f64| {
        residual_norm_from_terms(cache.eta(), cache.rho(), nu, mu, cache.hr_len(), cache.d())
    };
    let target = tau * (n as f64).sqrt() * sigma;
    let (high, low) = (norm(lo), norm(hi));
    if !(target <= high && target >= low) {
        return Err(Error::Unattainable { target, low, high });
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let scale = (n as f64).sqrt() * sigma;
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        let r = norm(m.exp());
        if ((r - target) / scale).abs() <= 1e-6 * tau.max(1.0) || b - a < 1e-14 {
            return Ok(m.exp());
        }
        if r > target {
            a = m;
        } else {
            b = m;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

pub fn solve_dp_mu(cache: &SpectralCache, nu: &[Complex64], sigma: f64, tau: f64) -> Result<f64> {
    solve_dp_mu_in(cache, nu, sigma, tau, DP_BRACKET)
}

/// Whiteness (and optionally τ*) sampled over a set of μ values.
#[derive(Clone, Debug, PartialEq)]
pub struct WhitenessCurve {
    pub mus: Vec<f64>,
    pub w_values: Vec<f64>,
    pub tau_values: Option<Vec<f64>>,
}

impl WhitenessCurve {
    pub fn evaluate(
        cache: &SpectralCache,
        nu: &[Complex64],
        mus: &[f64],
        sigma: Option<f64>,
    ) -> Result<Self> {
        if mus.windows(2).any(|w| w[1] <= w[0]) {
            return param_err("curve abscissae must be strictly increasing");
        }
        let w_values = mus
            .par_iter()
            .map(|&mu| whiteness_of_mu(cache, nu, mu))
            .collect::<Result<Vec<_>>>()?;
        let tau_values = match sigma {
            None => None,
            Some(s) => Some(
                mus.iter()
                    .map(|&mu| {
                        let r = residual_norm_from_terms(
                            cache.eta(),
                            cache.rho(),
                            nu,
                            mu,
                            cache.hr_len(),
                            cache.d(),
                        );
                        tau_star(r, cache.lr_len(), s)
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        Ok(Self { mus: mus.to_vec(), w_values, tau_values })
    }

    pub fn len(&self) -> usize {
        self.mus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mus.is_empty()
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "mu,tau,W")?;
        for (k, (mu, w)) in self.mus.iter().zip(&self.w_values).enumerate() {
            let tau = self.tau_values.as_ref().map(|t| format!("{:.16e}", t[k]));
            writeln!(out, "{mu:.16e},{},{w:.16e}", tau.as_deref().unwrap_or("nan"))?;
        }
        Ok(())
    }
}
