//! Sparse reconstruction with the CEL0 relaxation of the ℓ0 penalty, solved
//! by iteratively reweighted ℓ1 with non-negativity. Each outer iteration
//! selects μ (by residual whiteness unless another rule is set), linearises
//! the penalty at the current iterate and runs ADMM on the weighted-ℓ1
//! surrogate with μ frozen.

use crate::admm::{
    finish_report, penalty_for, run_admm_iterations, solve_tik, AdmmContext, AdmmOptions, AdmmState, MuRule,
    ReconstructionReport,
};
use crate::error::{Error, Result};
use crate::grid::{apply_otf, Fft2, ImageGrid, SpectralDiagonal};
use crate::operators::{decimate, Decimator, RegularizerShape};
use crate::prox::{cel0_penalty, cel0_weights, Cel0Params, ProxMode, RegularizerKind, SmoothedGradientAlpha};
use crate::solver::lowres_residual;
use crate::whiteness::{minimize_whiteness, solve_dp_mu_in, DP_BRACKET};

/// `‖SK e_i‖₂` for every pixel, computed once per decimation phase.
pub fn column_norms(otf: &SpectralDiagonal, dec: &Decimator) -> Result<ImageGrid> {
    let (hr, hc) = dec.hr_shape();
    let (dr, dc) = dec.factors();
    let plan = Fft2::new(hr, hc);
    let mut phase = vec![0.0; dr * dc];
    for p in 0..dr {
        for q in 0..dc {
            let mut e = ImageGrid::zeros(hr, hc);
            e.set(p, q, 1.0);
            phase[p * dc + q] = decimate(&apply_otf(&plan, otf, &e)?, dec)?.norm();
        }
    }
    let largest = phase.iter().copied().fold(0.0, f64::max);
    if phase.iter().any(|&a| !(a > 1e-12 * largest)) || largest == 0.0 {
        return Err(Error::Degenerate(
            "some pixels do not reach any observed sample (zero column norm)".into(),
        ));
    }
    Ok(ImageGrid::from_fn(hr, hc, |r, c| phase[(r % dr) * dc + c % dc]))
}

/// `(μ/2)‖SKx - b‖² + Σ φ(x_i)`.
pub fn cel0_objective(
    x: &ImageGrid,
    b: &ImageGrid,
    otf: &SpectralDiagonal,
    dec: &Decimator,
    params: &Cel0Params,
) -> Result<f64> {
    let r = lowres_residual(x, otf, dec, b)?;
    Ok(0.5 * params.mu * r.norm_sq() + cel0_penalty(x, params)?)
}

/// Weighted-ℓ1 majoriser of the CEL0 objective, tangent at `anchor`:
/// `(μ/2)‖SKx - b‖² + Σ [w_i|x_i| + φ(anchor_i) - w_i|anchor_i|]`.
pub fn cel0_surrogate(
    x: &ImageGrid,
    anchor: &ImageGrid,
    b: &ImageGrid,
    otf: &SpectralDiagonal,
    dec: &Decimator,
    params: &Cel0Params,
) -> Result<f64> {
    let w = cel0_weights(anchor, params)?;
    let r = lowres_residual(x, otf, dec, b)?;
    let linear: f64 = x
        .data()
        .iter()
        .zip(anchor.data())
        .zip(w.data())
        .map(|((x, a), w)| w * (x.abs() - a.abs()))
        .sum();
    Ok(0.5 * params.mu * r.norm_sq() + cel0_penalty(anchor, params)? + linear)
}

#[derive(Clone, Debug)]
pub struct Irl1Options {
    /// Inner ADMM settings; `max_iter` applies to the initialisation run.
    pub admm: AdmmOptions,
    pub inner_max_iter: usize,
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// Freeze μ instead of re-selecting it at every outer iteration.
    pub fixed_mu: Option<f64>,
}

impl Default for Irl1Options {
    fn default() -> Self {
        Self {
            admm: AdmmOptions::default(),
            inner_max_iter: 200,
            outer_tol: 1e-4,
            outer_max_iter: 30,
            fixed_mu: None,
        }
    }
}

/// Bookkeeping of one outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct OuterRecord {
    /// Iterate the penalty was linearised at.
    pub anchor: ImageGrid,
    pub mu: f64,
    /// CEL0 objective at the outer start, with this iteration's μ.
    pub objective_start: f64,
    /// CEL0 objective at the outer end, with the same μ.
    pub objective_end: f64,
    /// Surrogate at the outer start (equals `objective_start`).
    pub surrogate_start: f64,
    pub change: f64,
    pub inner_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct Irl1Report {
    /// Final reconstruction; `x_star` is the non-negative split variable.
    pub report: ReconstructionReport,
    /// Output of the weighted-ℓ1 initialisation.
    pub init: ImageGrid,
    pub col_norms: ImageGrid,
    pub outer: Vec<OuterRecord>,
}

pub fn irwp_irl1_run(
    b: &ImageGrid,
    otf: &SpectralDiagonal,
    dec: &Decimator,
    opts: &Irl1Options,
) -> Result<Irl1Report> {
    let norms = column_norms(otf, dec)?;
    let (hr, hc) = dec.hr_shape();
    let admm = &opts.admm;

    if b.is_all_zero() {
        let x = ImageGrid::zeros(hr, hc);
        let report = ReconstructionReport {
            model: "cel0".into(),
            x_star: x.clone(),
            mu_star: opts.fixed_mu.unwrap_or(f64::NAN),
            tau_star: admm.sigma.map(|_| 0.0),
            residual_norm: 0.0,
            whiteness: f64::NAN,
            iterations: 0,
            beta: f64::NAN,
            traces: Default::default(),
            converged: true,
            boundary_hit: false,
        };
        let record = OuterRecord {
            anchor: x.clone(),
            mu: report.mu_star,
            objective_start: 0.0,
            objective_end: 0.0,
            surrogate_start: 0.0,
            change: 0.0,
            inner_iterations: 0,
        };
        return Ok(Irl1Report { report, init: x, col_norms: norms, outer: vec![record] });
    }

    let tik_opts = AdmmOptions { truth: None, ..admm.clone() };
    let (tik, _) = solve_tik(b, otf, dec, &tik_opts)?;
    let ctx = AdmmContext::new(b, otf, dec, RegularizerShape::Identity, admm.epsilon)?;
    let mut alpha = SmoothedGradientAlpha::default();
    let beta = penalty_for(admm, tik.mu_star);
    let mut state = AdmmState::from_iterate(&ctx, tik.x_star, tik.mu_star, beta)?;
    let l1 = RegularizerKind::Wl1Nonneg { weights: None, mode: ProxMode::Exact };
    let init_opts = match opts.fixed_mu {
        Some(mu) => AdmmOptions { rule: MuRule::Fixed(mu), ..admm.clone() },
        None => admm.clone(),
    };
    run_admm_iterations(&mut state, &ctx, &l1, &init_opts, &mut alpha)?;
    let init = state.t[0].clone();

    let mut x = init.clone();
    let mut outer = Vec::new();
    let mut converged = false;
    for _ in 0..opts.outer_max_iter {
        let mu = match opts.fixed_mu {
            Some(mu) => mu,
            None => {
                let split = ctx.cache.split_spectrum(&state.split_target())?;
                let gamma = match admm.rule {
                    MuRule::Fixed(mu) => mu / beta,
                    MuRule::Discrepancy { sigma, tau } => {
                        solve_dp_mu_in(&ctx.cache, &split.nu, sigma, tau, DP_BRACKET)?
                    }
                    MuRule::Whiteness => {
                        let m = minimize_whiteness(&ctx.cache, &split.nu, &admm.search)?;
                        state.boundary_hit = m.boundary;
                        m.mu
                    }
                };
                gamma * beta
            }
        };
        let params = Cel0Params::new(mu, norms.clone())?;
        let weights = cel0_weights(&x, &params)?;
        let objective_start = cel0_objective(&x, b, otf, dec, &params)?;
        let surrogate_start = cel0_surrogate(&x, &x, b, otf, dec, &params)?;

        let kind = RegularizerKind::Wl1Nonneg { weights: Some(weights), mode: ProxMode::Exact };
        let inner_opts =
            AdmmOptions { rule: MuRule::Fixed(mu), max_iter: opts.inner_max_iter, ..admm.clone() };
        let before = state.k;
        run_admm_iterations(&mut state, &ctx, &kind, &inner_opts, &mut alpha)?;
        let next = state.t[0].clone();

        let base = x.norm();
        let change = if base > 0.0 { next.sub(&x).norm() / base } else if next.is_all_zero() { 0.0 } else { 1.0 };
        outer.push(OuterRecord {
            anchor: x.clone(),
            mu,
            objective_start,
            objective_end: cel0_objective(&next, b, otf, dec, &params)?,
            surrogate_start,
            change,
            inner_iterations: state.k - before,
        });
        x = next;
        if change < opts.outer_tol {
            converged = true;
            break;
        }
    }

    let mut report = finish_report("cel0", state, &ctx, admm, converged);
    report.mu_star = outer.last().map_or(report.mu_star, |o| o.mu);
    report.x_star = x;
    Ok(Irl1Report { report, init, col_norms: norms, outer })
}
