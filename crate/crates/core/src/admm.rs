//! Automatic parameter selection for the quadratic model and ADMM for the
//! non-smooth models, with the regularisation parameter re-selected at every
//! iteration from the current split target.

use std::io::Write;

use crate::error::{param_err, Error, Result};
use crate::grid::{ImageGrid, SpectralDiagonal};
use crate::metrics::{isnr, ssim_with_range};
use crate::operators::{build_regularizer, Decimator, RegularizerOperator, RegularizerShape};
use crate::prox::{AlphaRule, RegularizerKind, SmoothedGradientAlpha};
use crate::solver::{precompute_cache, residual_norm_of_mu, SpectralCache, SplitSpectrum, SplitVector};
use crate::whiteness::{
    minimize_whiteness, solve_dp_mu_in, tau_star, whiteness_of_mu, SearchOptions, DP_BRACKET,
};

/// How the regularisation parameter is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MuRule {
    /// Minimise the residual whiteness (needs no noise level).
    Whiteness,
    /// Discrepancy principle `‖SKx - b‖ = τ √n σ`.
    Discrepancy { sigma: f64, tau: f64 },
    /// Keep μ fixed.
    Fixed(f64),
}

/// Ground truth used only to fill metric traces.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthReference {
    pub truth: ImageGrid,
    /// Baseline `b̄` for ISNR (usually the bicubic interpolation of `b`).
    pub baseline: ImageGrid,
    pub range: f64,
}

#[derive(Clone, Debug)]
pub struct AdmmOptions {
    /// ADMM penalty, or its multiplier when `scale_beta` is set.
    pub beta: f64,
    /// Use `beta * sqrt(mu0)` as the penalty, `mu0` being the parameter of
    /// the initial quadratic solution. The penalty is fixed thereafter.
    pub scale_beta: bool,
    pub tol: f64,
    /// Bound on `‖t - Lx‖∞` that must also hold at convergence.
    pub primal_tol: f64,
    pub max_iter: usize,
    pub rule: MuRule,
    pub search: SearchOptions,
    /// Centre the γ bracket on the previous γ (one decade each side) after
    /// the third iteration.
    pub warm_start: bool,
    pub epsilon: Option<f64>,
    /// Noise level used only for the τ trace.
    pub sigma: Option<f64>,
    pub truth: Option<TruthReference>,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            beta: 1.0,
            scale_beta: true,
            tol: 1e-5,
            primal_tol: 1e-4,
            max_iter: 500,
            rule: MuRule::Whiteness,
            search: SearchOptions::default(),
            warm_start: true,
            epsilon: None,
            sigma: None,
            truth: None,
        }
    }
}

impl AdmmOptions {
    fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return param_err(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.tol > 0.0 && self.primal_tol > 0.0) {
            return param_err(format!("tolerances must be positive, got {} and {}", self.tol, self.primal_tol));
        }
        match self.rule {
            MuRule::Fixed(mu) if !(mu > 0.0 && mu.is_finite()) => {
                param_err(format!("fixed mu must be positive, got {mu}"))
            }
            MuRule::Discrepancy { sigma, tau } if !(sigma > 0.0 && tau > 0.0) => {
                param_err("discrepancy rule needs positive sigma and tau")
            }
            _ => Ok(()),
        }
    }
}

/// Per-iteration diagnostics. `tau` is filled when σ is known, `isnr` and
/// `ssim` when ground truth is supplied.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Traces {
    pub mu: Vec<f64>,
    pub residual: Vec<f64>,
    pub tau: Vec<f64>,
    pub whiteness: Vec<f64>,
    pub change: Vec<f64>,
    pub violation: Vec<f64>,
    pub isnr: Vec<f64>,
    pub ssim: Vec<f64>,
}

impl Traces {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// CSV `k,mu,tau,change[,isnr,ssim]`; `tau` is `nan` when σ was unknown.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let metrics = !self.isnr.is_empty();
        if metrics {
            writeln!(out, "k,mu,tau,change,isnr,ssim")?;
        } else {
            writeln!(out, "k,mu,tau,change")?;
        }
        for k in 0..self.len() {
            let tau = self.tau.get(k).copied().unwrap_or(f64::NAN);
            write!(out, "{k},{:.16e},{},{:.16e}", self.mu[k], fmt_nan(tau), self.change[k])?;
            if metrics {
                write!(out, ",{:.16e},{:.16e}", self.isnr[k], self.ssim[k])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn fmt_nan(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.16e}")
    }
}

#[derive(Clone, Debug)]
pub struct ReconstructionReport {
    pub model: String,
    pub x_star: ImageGrid,
    pub mu_star: f64,
    /// `τ*` at the final μ when σ is known.
    pub tau_star: Option<f64>,
    pub residual_norm: f64,
    pub whiteness: f64,
    pub iterations: usize,
    /// Penalty the run used.
    pub beta: f64,
    pub traces: Traces,
    pub converged: bool,
    pub boundary_hit: bool,
}

/// Operators shared by every iteration of a run.
#[derive(Clone, Debug)]
pub struct AdmmContext {
    pub cache: SpectralCache,
    pub reg: RegularizerOperator,
    pub otf: SpectralDiagonal,
    pub dec: Decimator,
    pub b: ImageGrid,
}

impl AdmmContext {
    pub fn new(
        b: &ImageGrid,
        otf: &SpectralDiagonal,
        dec: &Decimator,
        shape: RegularizerShape,
        epsilon: Option<f64>,
    ) -> Result<Self> {
        let (hr, hc) = dec.hr_shape();
        let reg = build_regularizer(shape, hr, hc)?;
        let cache = precompute_cache(otf, &reg, b, dec, epsilon)?;
        Ok(Self { cache, reg, otf: otf.clone(), dec: *dec, b: b.clone() })
    }
}

#[derive(Clone, Debug)]
pub struct AdmmState {
    pub x: ImageGrid,
    pub t: Vec<ImageGrid>,
    pub lambda: Vec<ImageGrid>,
    pub beta: f64,
    pub k: usize,
    /// Last γ = μ/β used in the x-update.
    pub gamma: f64,
    pub alpha: Option<ImageGrid>,
    pub boundary_hit: bool,
    pub traces: Traces,
}

impl AdmmState {
    /// `t = Lx`, `λ = 0`.
    pub fn from_iterate(ctx: &AdmmContext, x: ImageGrid, mu: f64, beta: f64) -> Result<Self> {
        let t = ctx.reg.apply(&x)?;
        let lambda = t.iter().map(|g| ImageGrid::zeros(g.rows(), g.cols())).collect();
        Ok(Self {
            x,
            t,
            lambda,
            beta,
            k: 0,
            gamma: mu / beta,
            alpha: None,
            boundary_hit: false,
            traces: Traces::default(),
        })
    }

    /// Split target `v = t - λ/β` of the next x-update.
    pub fn split_target(&self) -> SplitVector {
        SplitVector(
            self.t
                .iter()
                .zip(&self.lambda)
                .map(|(t, l)| t.zip_map(l, |t, l| t - l / self.beta))
                .collect(),
        )
    }

    pub fn mu(&self) -> f64 {
        self.gamma * self.beta
    }
}

/// Chooses γ for the quadratic subproblem according to the rule.
fn select_gamma(
    cache: &SpectralCache,
    split: &SplitSpectrum,
    opts: &AdmmOptions,
    beta: f64,
    previous: Option<f64>,
) -> Result<(f64, bool)> {
    match opts.rule {
        MuRule::Fixed(mu) => Ok((mu / beta, false)),
        MuRule::Discrepancy { sigma, tau } => {
            Ok((solve_dp_mu_in(cache, &split.nu, sigma, tau, DP_BRACKET)?, false))
        }
        MuRule::Whiteness => {
            if let Some(g) = previous {
                let warm = SearchOptions { bracket: (g / 10.0, g * 10.0), ..opts.search };
                let m = minimize_whiteness(cache, &split.nu, &warm)?;
                if !m.boundary {
                    return Ok((m.mu, false));
                }
            }
            let m = minimize_whiteness(cache, &split.nu, &opts.search)?;
            Ok((m.mu, m.boundary))
        }
    }
}

fn record_metrics(traces: &mut Traces, x: &ImageGrid, truth: &Option<TruthReference>) -> Result<()> {
    if let Some(t) = truth {
        traces.isnr.push(isnr(&t.truth, x, &t.baseline)?);
        traces.ssim.push(ssim_with_range(&t.truth, x, t.range)?);
    }
    Ok(())
}

/// One IRWP-ADMM iteration: split target, γ selection, x-update, optional
/// WTV weight update, prox step and dual update.
pub fn irwp_admm_step(
    state: &mut AdmmState,
    ctx: &AdmmContext,
    kind: &RegularizerKind,
    opts: &AdmmOptions,
    alpha_rule: &mut dyn AlphaRule,
) -> Result<()> {
    let beta = state.beta;
    let v = state.split_target();
    let split = ctx.cache.split_spectrum(&v)?;
    let previous = (opts.warm_start && state.k >= 3).then_some(state.gamma);
    let (gamma, boundary) = select_gamma(&ctx.cache, &split, opts, beta, previous)?;
    let x = ctx.cache.solve(&split, gamma)?;

    if matches!(kind, RegularizerKind::Wtv) {
        state.alpha = Some(alpha_rule.alpha(&x)?);
    }
    let lx = ctx.reg.apply(&x)?;
    let q: Vec<ImageGrid> =
        lx.iter().zip(&state.lambda).map(|(l, lam)| l.zip_map(lam, |l, m| l + m / beta)).collect();
    let t = kind.prox(&q, beta, state.alpha.as_ref())?;
    let lambda = dual_update(&state.lambda, &t, &lx, beta);
    let violation = t.iter().zip(&lx).map(|(t, l)| t.sub(l).max_abs()).fold(0.0, f64::max);

    let prev_norm = state.x.norm();
    let change = if prev_norm > 0.0 {
        x.sub(&state.x).norm() / prev_norm
    } else if x.norm() == 0.0 {
        0.0
    } else {
        1.0
    };
    if !(x.is_finite() && violation.is_finite()) {
        return Err(Error::Numerical(format!("non-finite ADMM state at iteration {}", state.k + 1)));
    }

    let residual = residual_norm_of_mu(&ctx.cache, &split.nu, gamma)?;
    let w = whiteness_of_mu(&ctx.cache, &split.nu, gamma).unwrap_or(f64::NAN);
    let traces = &mut state.traces;
    traces.mu.push(gamma * beta);
    traces.residual.push(residual);
    if let Some(s) = opts.sigma {
        traces.tau.push(tau_star(residual, ctx.cache.lr_len(), s)?);
    }
    traces.whiteness.push(w);
    traces.change.push(change);
    traces.violation.push(violation);
    record_metrics(traces, &x, &opts.truth)?;

    state.x = x;
    state.t = t;
    state.lambda = lambda;
    state.gamma = gamma;
    state.boundary_hit = boundary;
    state.k += 1;
    Ok(())
}

/// Effective ADMM penalty for a run started from a solution with parameter `mu0`.
pub fn penalty_for(opts: &AdmmOptions, mu0: f64) -> f64 {
    if opts.scale_beta && mu0 > 0.0 && mu0.is_finite() {
        opts.beta * mu0.sqrt()
    } else {
        opts.beta
    }
}

/// `λ - β (t - Lx)`.
pub fn dual_update(lambda: &[ImageGrid], t: &[ImageGrid], lx: &[ImageGrid], beta: f64) -> Vec<ImageGrid> {
    lambda
        .iter()
        .zip(t)
        .zip(lx)
        .map(|((lam, t), l)| {
            ImageGrid::from_fn(lam.rows(), lam.cols(), |r, c| lam.get(r, c) - beta * (t.get(r, c) - l.get(r, c)))
        })
        .collect()
}

/// Iterates until the relative change of `x` drops below `opts.tol` with the
/// constraint violation below `opts.primal_tol`, or `opts.max_iter` steps
/// were taken. Returns whether the tolerances were met.
pub fn run_admm_iterations(
    state: &mut AdmmState,
    ctx: &AdmmContext,
    kind: &RegularizerKind,
    opts: &AdmmOptions,
    alpha_rule: &mut dyn AlphaRule,
) -> Result<bool> {
    opts.validate()?;
    let start = state.k;
    while state.k - start < opts.max_iter {
        irwp_admm_step(state, ctx, kind, opts, alpha_rule)?;
        let tr = &state.traces;
        if tr.change.last().is_some_and(|&c| c < opts.tol) && tr.violation.last().is_some_and(|&v| v < opts.primal_tol)
        {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Quadratic model with gradient regulariser and `v = 0`, μ chosen by `rule`.
pub fn solve_tik(
    b: &ImageGrid,
    otf: &SpectralDiagonal,
    dec: &Decimator,
    opts: &AdmmOptions,
) -> Result<(ReconstructionReport, AdmmContext)> {
    opts.validate()?;
    let ctx = AdmmContext::new(b, otf, dec, RegularizerShape::Gradient, opts.epsilon)?;
    let report = solve_tik_in(&ctx, opts)?;
    Ok((report, ctx))
}

fn solve_tik_in(ctx: &AdmmContext, opts: &AdmmOptions) -> Result<ReconstructionReport> {
    let split = SplitSpectrum::zero(&ctx.cache);
    let (mu, boundary) = match opts.rule {
        MuRule::Whiteness => {
            let m = minimize_whiteness(&ctx.cache, &split.nu, &opts.search)?;
            (m.mu, m.boundary)
        }
        _ => select_gamma(&ctx.cache, &split, opts, 1.0, None)?,
    };
    let x = ctx.cache.solve(&split, mu)?;
    let residual = residual_norm_of_mu(&ctx.cache, &split.nu, mu)?;
    let tau = opts.sigma.map(|s| tau_star(residual, ctx.cache.lr_len(), s)).transpose()?;
    let w = whiteness_of_mu(&ctx.cache, &split.nu, mu).unwrap_or(f64::NAN);
    let mut traces = Traces {
        mu: vec![mu],
        residual: vec![residual],
        tau: tau.into_iter().collect(),
        whiteness: vec![w],
        change: vec![0.0],
        violation: vec![0.0],
        ..Traces::default()
    };
    record_metrics(&mut traces, &x, &opts.truth)?;
    Ok(ReconstructionReport {
        model: "tik".into(),
        x_star: x,
        mu_star: mu,
        tau_star: tau,
        residual_norm: residual,
        whiteness: w,
        iterations: 1,
        beta: f64::NAN,
        traces,
        converged: true,
        boundary_hit: boundary,
    })
}

/// Residual-whiteness μ for the quadratic gradient model and its solution.
pub fn exact_rwp_tik(
    b: &ImageGrid,
    otf: &SpectralDiagonal,
    dec: &Decimator,
    opts: &AdmmOptions,
) -> Result<(f64, ImageGrid)> {
    let opts = AdmmOptions { rule: MuRule::Whiteness, ..opts.clone() };
    let (report, _) = solve_tik(b, otf, dec, &opts)?;
    Ok((report.mu_star, report.x_star))
}

/// IRWP-ADMM with the default WTV weight rule.
pub fn irwp_admm_run(
    b: &ImageGrid,
    otf: &SpectralDiagonal,
    dec: &Decimator,
    kind: &RegularizerKind,
    opts: &AdmmOptions,
) -> Result<ReconstructionReport> {
    irwp_admm_run_with(b, otf, dec, kind, opts, &mut SmoothedGradientAlpha::default())
}

pub fn irwp_admm_run_with(
    b: &ImageGrid,
    otf: &SpectralDiagonal,
    dec: &Decimator,
    kind: &RegularizerKind,
    opts: &AdmmOptions,
    alpha_rule: &mut dyn AlphaRule,
) -> Result<ReconstructionReport> {
    opts.validate()?;
    let (hr, hc) = dec.hr_shape();
    kind.validate(hr, hc)?;
    let tik_opts = AdmmOptions { truth: None, ..opts.clone() };
    let (init, tik_ctx) = solve_tik(b, otf, dec, &tik_opts)?;
    if matches!(kind, RegularizerKind::Tik) {
        return solve_tik_in(&tik_ctx, opts);
    }
    let ctx = match kind.operator_shape() {
        RegularizerShape::Gradient => tik_ctx,
        shape => AdmmContext::new(b, otf, dec, shape, opts.epsilon)?,
    };
    let beta = penalty_for(opts, init.mu_star);
    let mut state = AdmmState::from_iterate(&ctx, init.x_star, init.mu_star, beta)?;
    let converged = run_admm_iterations(&mut state, &ctx, kind, opts, alpha_rule)?;
    Ok(finish_report(kind.name(), state, &ctx, opts, converged))
}

pub(crate) fn finish_report(
    model: &str,
    state: AdmmState,
    ctx: &AdmmContext,
    opts: &AdmmOptions,
    converged: bool,
) -> ReconstructionReport {
    let residual = state.traces.residual.last().copied().unwrap_or(f64::NAN);
    let tau = opts.sigma.and_then(|s| tau_star(residual, ctx.cache.lr_len(), s).ok());
    ReconstructionReport {
        model: model.into(),
        mu_star: state.mu(),
        tau_star: tau,
        residual_norm: residual,
        whiteness: state.traces.whiteness.last().copied().unwrap_or(f64::NAN),
        iterations: state.k,
        beta: state.beta,
        converged,
        boundary_hit: state.boundary_hit,
        x_star: state.x,
        traces: state.traces,
    }
}
