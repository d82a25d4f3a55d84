//! Fast solver for the generalised Tikhonov problem
//!
//! ```text
//!     min_x  (mu/2)‖S K x - b‖² + (1/2)‖L x - v‖²
//! ```
//!
//! under periodic boundary conditions. In the DFT basis `S^H S` only couples
//! the `d` frequencies of an alias group, so after gathering each group into a
//! contiguous block the normal matrix is diagonal plus one rank-one term per
//! group and is inverted with the Sherman-Morrison-Woodbury formula. Nothing of size `N x N` is ever formed.
//!
//! The ε of the regularised inverse `(Σ|γ|² + ε)⁻¹` acts as an extra
//! `(ε/2)‖x‖²` term, which keeps the system invertible when `L` has a null
//! space (the DC component of the gradient).

use num_complex::Complex64;

use crate::error::{param_err, shape_err, Error, Result};
use crate::grid::{Fft2, ImageGrid, SpectralDiagonal, SpectralGrid};
use crate::operators::{decimate, zero_interpolate, AliasGroups, Decimator, RegularizerOperator};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative bound on the imaginary residue accepted when returning to the
/// spatial domain.
const IMAG_TOLERANCE: f64 = 1e-9;

/// The target `v = (v_1, ..., v_s)` of the quadratic regulariser.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitVector(pub Vec<ImageGrid>);

impl SplitVector {
    pub fn zeros(s: usize, rows: usize, cols: usize) -> Self {
        Self(vec![ImageGrid::zeros(rows, cols); s])
    }

    pub fn count(&self) -> usize {
        self.0.len()
    }

    pub fn parts(&self) -> &[ImageGrid] {
        &self.0
    }
}

/// μ-independent spectral quantities, stored in alias-group order.
#[derive(Clone, Debug)]
pub struct SpectralCache {
    plan: Fft2,
    dec: Decimator,
    groups: AliasGroups,
    reg_count: usize,
    lambda_hat: Vec<Complex64>,
    gamma_hat: Vec<Vec<Complex64>>,
    zeta: Vec<f64>,
    inv_zeta_eps: Vec<f64>,
    omega: Vec<f64>,
    eta: Vec<f64>,
    rho: Vec<Complex64>,
    b_hat_h: Vec<Complex64>,
    epsilon: f64,
}

/// Default ε: `1e-10 * (max ζ + 1)`.
pub fn default_epsilon(zeta_max: f64) -> f64 {
    1e-10 * (zeta_max + 1.0)
}

pub fn precompute_cache(
    otf: &SpectralDiagonal,
    reg: &RegularizerOperator,
    b: &ImageGrid,
    dec: &Decimator,
    epsilon: Option<f64>,
) -> Result<SpectralCache> {
    let (hr, hc) = dec.hr_shape();
    let (lr, lc) = dec.lr_shape();
    if otf.shape() != (hr, hc) {
        return shape_err(format!("blur OTF is {:?}, expected {hr}x{hc}", otf.shape()));
    }
    if reg.grid_shape() != (hr, hc) {
        return shape_err("regulariser grid does not match the HR shape");
    }
    b.check_shape(lr, lc, "observation")?;
    if !b.is_finite() {
        return Err(Error::Numerical("observation contains non-finite samples".into()));
    }

    let mut zeta_hr = vec![0.0; hr * hc];
    for diag in reg.diagonals() {
        for (z, g) in zeta_hr.iter_mut().zip(diag.data()) {
            *z += g.norm_sqr();
        }
    }
    let zeta_max = zeta_hr.iter().copied().fold(0.0, f64::max);
    let epsilon = match epsilon {
        None => default_epsilon(zeta_max),
        Some(e) if e > 0.0 && e.is_finite() => e,
        Some(e) => return param_err(format!("epsilon must be positive, got {e}")),
    };

    let plan = Fft2::new(hr, hc);
    let groups = dec.alias_groups();
    let b_h = zero_interpolate(b, dec)?;
    let b_tilde_h = plan.forward(&b_h)?;

    let lambda_hat = groups.permute(otf.data());
    let gamma_hat: Vec<Vec<Complex64>> =
        reg.diagonals().iter().map(|g| groups.permute(g.data())).collect();
    let zeta = groups.permute(&zeta_hr);
    let inv_zeta_eps: Vec<f64> = zeta.iter().map(|z| 1.0 / (z + epsilon)).collect();
    let b_hat_h = groups.permute(b_tilde_h.data());

    let d = groups.d();
    let n = groups.n();
    let mut omega = vec![0.0; n];
    let mut rho = vec![ZERO; n];
    for g in 0..n {
        let block = g * d..(g + 1) * d;
        omega[g] = block.clone().map(|k| lambda_hat[k].norm_sqr() * inv_zeta_eps[k]).sum();
        rho[g] = block.map(|k| b_hat_h[k]).fold(ZERO, |acc, z| acc + z);
    }
    let eta = omega.iter().map(|w| w / d as f64).collect();

    Ok(SpectralCache {
        plan,
        dec: *dec,
        groups,
        reg_count: reg.count(),
        lambda_hat,
        gamma_hat,
        zeta,
        inv_zeta_eps,
        omega,
        eta,
        rho,
        b_hat_h,
        epsilon,
    })
}

impl SpectralCache {
    pub fn decimator(&self) -> &Decimator {
        &self.dec
    }

    pub fn groups(&self) -> &AliasGroups {
        &self.groups
    }

    pub fn plan(&self) -> &Fft2 {
        &self.plan
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn reg_count(&self) -> usize {
        self.reg_count
    }

    pub fn d(&self) -> usize {
        self.groups.d()
    }

    /// Number of HR pixels `N`.
    pub fn hr_len(&self) -> usize {
        self.groups.len()
    }

    /// Number of LR pixels `n`.
    pub fn lr_len(&self) -> usize {
        self.groups.n()
    }

    pub fn lambda_hat(&self) -> &[Complex64] {
        &self.lambda_hat
    }

    pub fn gamma_hat(&self) -> &[Vec<Complex64>] {
        &self.gamma_hat
    }

    pub fn zeta(&self) -> &[f64] {
        &self.zeta
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn rho(&self) -> &[Complex64] {
        &self.rho
    }

    pub fn b_hat_h(&self) -> &[Complex64] {
        &self.b_hat_h
    }

    /// Transforms `v` once and returns everything the solver and the
    /// whiteness function need from it.
    pub fn split_spectrum(&self, v: &SplitVector) -> Result<SplitSpectrum> {
        if v.count() != self.reg_count {
            return shape_err(format!(
                "split vector has {} parts, regulariser has {}",
                v.count(),
                self.reg_count
            ));
        }
        let len = self.hr_len();
        let mut weighted = vec![ZERO; len];
        for (part, gamma) in v.parts().iter().zip(&self.gamma_hat) {
            if !part.is_finite() {
                return Err(Error::Numerical("split vector contains non-finite samples".into()));
            }
            if part.is_all_zero() {
                continue;
            }
            let spec = self.plan.forward(part)?;
            for (pos, &k) in self.groups.members().iter().enumerate() {
                weighted[pos] += gamma[pos].conj() * spec.data()[k];
            }
        }
        let d = self.d();
        let nu = (0..self.lr_len())
            .map(|g| {
                (g * d..(g + 1) * d).fold(ZERO, |acc, k| {
                    acc + self.lambda_hat[k] * weighted[k] * self.inv_zeta_eps[k]
                })
            })
            .collect();
        Ok(SplitSpectrum { nu, weighted })
    }

    /// Spectral-domain solve; returns the HR-ordered spectrum of `x*(mu)`.
    pub fn solve_spectrum(&self, split: &SplitSpectrum, mu: f64) -> Result<SpectralGrid> {
        check_mu(mu)?;
        let d = self.d();
        let scaled = mu / d as f64;
        let mut x_hat = vec![ZERO; self.hr_len()];
        let mut q = vec![ZERO; d];
        for g in 0..self.lr_len() {
            let base = g * d;
            // Each group solves (D + (mu/d) a a^H) x = q with D = diag(ζ + ε)
            // and a = conj(λ). The member with the smallest diagonal entry is
            // split off so that an ε-sized entry never divides a large value.
            let mut pivot = 0;
            for l in 0..d {
                let k = base + l;
                q[l] = self.lambda_hat[k].conj() * self.b_hat_h[k] * mu + split.weighted[k];
                if self.zeta[k] < self.zeta[base + pivot] {
                    pivot = l;
                }
            }
            let (mut s_rest, mut w_rest) = (ZERO, 0.0);
            for l in (0..d).filter(|&l| l != pivot) {
                let k = base + l;
                s_rest += self.lambda_hat[k] * q[l] * self.inv_zeta_eps[k];
                w_rest += self.lambda_hat[k].norm_sqr() * self.inv_zeta_eps[k];
            }
            let kp = base + pivot;
            let delta = self.zeta[kp] + self.epsilon;
            let a_p = self.lambda_hat[kp].conj();
            let denom = delta * (1.0 + scaled * w_rest) + scaled * a_p.norm_sqr();
            let coef = (self.lambda_hat[kp] * q[pivot] + s_rest * delta) * (scaled / denom);
            for l in 0..d {
                let k = base + l;
                x_hat[k] = if l == pivot {
                    (q[l] * (1.0 + scaled * w_rest) - a_p * s_rest * scaled) / denom
                } else {
                    (q[l] - self.lambda_hat[k].conj() * coef) * self.inv_zeta_eps[k]
                };
            }
        }
        let (hr, hc) = self.dec.hr_shape();
        SpectralGrid::new(hr, hc, self.groups.unpermute(&x_hat))
    }

    pub fn solve(&self, split: &SplitSpectrum, mu: f64) -> Result<ImageGrid> {
        let spec = self.solve_spectrum(split, mu)?;
        let z = self.plan.inverse_complex(&spec)?;
        let max_re = z.data().iter().fold(0.0_f64, |m, c| m.max(c.re.abs()));
        let max_im = z.data().iter().fold(0.0_f64, |m, c| m.max(c.im.abs()));
        if !(max_re.is_finite() && max_im.is_finite()) {
            return Err(Error::Numerical("solver produced non-finite values".into()));
        }
        if max_im > IMAG_TOLERANCE * max_re.max(1.0) {
            return Err(Error::Numerical(format!(
                "solution has imaginary residue {max_im:.3e} (real scale {max_re:.3e})"
            )));
        }
        let (hr, hc) = self.dec.hr_shape();
        ImageGrid::new(hr, hc, z.data().iter().map(|c| c.re).collect())
    }

    /// Residual group sums `(nu_g - rho_g)/(1 + eta_g mu)`.
    pub fn residual_terms(&self, nu: &[Complex64], mu: f64) -> Vec<Complex64> {
        residual_terms(&self.eta, &self.rho, nu, mu)
    }
}

/// Per-`v` spectral data: group scalars `nu` and the weighted regulariser
/// right-hand side `Σ_j conj(γ_j) ṽ_j` in group order.
#[derive(Clone, Debug)]
pub struct SplitSpectrum {
    pub nu: Vec<Complex64>,
    weighted: Vec<Complex64>,
}

impl SplitSpectrum {
    /// Spectrum of `v = 0`.
    pub fn zero(cache: &SpectralCache) -> Self {
        Self { nu: vec![ZERO; cache.lr_len()], weighted: vec![ZERO; cache.hr_len()] }
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return param_err(format!("regularisation parameter must be positive and finite, got {mu}"));
    }
    Ok(())
}

pub(crate) fn residual_terms(
    eta: &[f64],
    rho: &[Complex64],
    nu: &[Complex64],
    mu: f64,
) -> Vec<Complex64> {
    eta.iter()
        .zip(rho)
        .zip(nu)
        .map(|((e, r), n)| (n - r) / (1.0 + e * mu))
        .collect()
}

/// Group scalars `nu_g` for a given split vector.
pub fn compute_nu(cache: &SpectralCache, v: &SplitVector) -> Result<Vec<Complex64>> {
    Ok(cache.split_spectrum(v)?.nu)
}

/// Minimiser of `(mu/2)‖SKx-b‖² + (1/2)‖Lx-v‖² + (ε/2)‖x‖²`.
pub fn solve_l2l2(cache: &SpectralCache, v: &SplitVector, mu: f64) -> Result<ImageGrid> {
    let split = cache.split_spectrum(v)?;
    cache.solve(&split, mu)
}

/// `‖S K x*(mu) - b‖₂` evaluated in closed form from the group scalars.
pub fn residual_norm_of_mu(cache: &SpectralCache, nu: &[Complex64], mu: f64) -> Result<f64> {
    check_mu(mu)?;
    if nu.len() != cache.lr_len() {
        return shape_err("nu has the wrong number of groups");
    }
    Ok(residual_norm_from_terms(&cache.eta, &cache.rho, nu, mu, cache.hr_len(), cache.d()))
}

pub(crate) fn residual_norm_from_terms(
    eta: &[f64],
    rho: &[Complex64],
    nu: &[Complex64],
    mu: f64,
    hr_len: usize,
    d: usize,
) -> f64 {
    let energy: f64 = eta
        .iter()
        .zip(rho)
        .zip(nu)
        .map(|((e, r), n)| ((n - r) / (1.0 + e * mu)).norm_sqr())
        .sum();
    (energy / (hr_len * d) as f64).sqrt()
}

/// Spatial LR residual `S K x - b`.
pub fn lowres_residual(
    x: &ImageGrid,
    otf: &SpectralDiagonal,
    dec: &Decimator,
    b: &ImageGrid,
) -> Result<ImageGrid> {
    let (hr, hc) = dec.hr_shape();
    x.check_shape(hr, hc, "residual input")?;
    let (lr, lc) = dec.lr_shape();
    b.check_shape(lr, lc, "observation")?;
    let plan = Fft2::new(hr, hc);
    let blurred = crate::grid::apply_otf(&plan, otf, x)?;
    Ok(decimate(&blurred, dec)?.sub(b))
}
