//! Single-image super-resolution under blur, decimation and white Gaussian
//! noise, with the regularisation parameter chosen by making the residual as
//! white as possible.

pub mod admm;
pub mod cel0;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod operators;
pub mod prox;
pub mod sim;
pub mod solver;
pub mod whiteness;

pub use admm::{
    exact_rwp_tik, irwp_admm_run, irwp_admm_run_with, irwp_admm_step, penalty_for, solve_tik, AdmmContext, AdmmOptions,
    AdmmState, MuRule, ReconstructionReport, Traces, TruthReference,
};
pub use cel0::{column_norms, irwp_irl1_run, Irl1Options, Irl1Report};
pub use error::{Error, Result};
pub use grid::{dft2, idft2, Fft2, ImageGrid, KernelSpec, SpectralDiagonal, SpectralGrid};
pub use operators::{Decimator, RegularizerOperator, RegularizerShape};
pub use prox::{Cel0Params, ProxMode, RegularizerKind};
pub use sim::{degrade, make_phantom, DegradationSpec, NoiseLevel, PhantomKind};
pub use solver::{compute_nu, precompute_cache, residual_norm_of_mu, solve_l2l2, SpectralCache, SplitVector};
pub use whiteness::{
    minimize_whiteness, solve_dp_mu, tau_star, whiteness_of_image, whiteness_of_mu, SearchOptions,
    WhitenessCurve,
};
