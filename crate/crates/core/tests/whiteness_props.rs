mod common;

use proptest::prelude::*;

use common::*;
use whitesr::grid::{build_kernel, kernel_to_otf, ImageGrid, KernelSpec};
use whitesr::operators::{build_regularizer, Decimator, RegularizerShape};
use whitesr::solver::{compute_nu, lowres_residual, precompute_cache, residual_norm_of_mu, solve_l2l2, SplitVector};
use whitesr::whiteness::{
    minimize_whiteness, sample_autocorrelation, solve_dp_mu, tau_star, whiteness_of_image, whiteness_of_mu,
    SearchOptions,
};

struct Instance {
    cache: whitesr::SpectralCache,
    v: SplitVector,
    b: ImageGrid,
    otf: whitesr::SpectralDiagonal,
    dec: Decimator,
}

fn instance(rows: usize, cols: usize, dr: usize, dc: usize, seed: u64) -> Instance {
    let mut g = rng(seed);
    let dec = Decimator::new(rows, cols, dr, dc).unwrap();
    let b = random_grid(rows / dr, cols / dc, &mut g);
    let otf = kernel_to_otf(&build_kernel(&KernelSpec::Gaussian { band: 5, sigma: 1.0 }).unwrap(), rows, cols).unwrap();
    let reg = build_regularizer(RegularizerShape::Gradient, rows, cols).unwrap();
    let cache = precompute_cache(&otf, &reg, &b, &dec, None).unwrap();
    let v = SplitVector((0..2).map(|_| random_grid(rows, cols, &mut g).scale(0.1)).collect());
    Instance { cache, v, b, otf, dec }
}

#[test]
fn closed_form_whiteness_matches_residual_for_four_fold_aliasing() {
    for (dr, dc) in [(2, 2), (4, 1), (1, 4)] {
        let inst = instance(16, 16, dr, dc, 11);
        let nu = compute_nu(&inst.cache, &inst.v).unwrap();
        for mu in [1e-2, 0.3, 7.0, 150.0] {
            let x = solve_l2l2(&inst.cache, &inst.v, mu).unwrap();
            let r = lowres_residual(&x, &inst.otf, &inst.dec, &inst.b).unwrap();
            let direct = whiteness_of_image(&r).unwrap();
            let closed = whiteness_of_mu(&inst.cache, &nu, mu).unwrap();
            assert!((closed - direct).abs() <= 1e-8 * direct, "d=({dr},{dc}) mu={mu}: {closed} vs {direct}");
        }
    }
}

#[test]
fn selected_mu_is_the_grid_minimum() {
    let inst = instance(16, 16, 2, 2, 3);
    let nu = compute_nu(&inst.cache, &inst.v).unwrap();
    let best = minimize_whiteness(&inst.cache, &nu, &SearchOptions::default()).unwrap();
    let w_best = whiteness_of_mu(&inst.cache, &nu, best.mu).unwrap();
    for mu in whitesr::whiteness::log_grid(1e-4, 1e4, 400) {
        assert!(w_best <= whiteness_of_mu(&inst.cache, &nu, mu).unwrap() * (1.0 + 1e-12));
    }
}

#[test]
fn discrepancy_solution_hits_the_target() {
    let inst = instance(16, 16, 2, 2, 5);
    let nu = compute_nu(&inst.cache, &inst.v).unwrap();
    let n = inst.cache.lr_len();
    let r0 = residual_norm_of_mu(&inst.cache, &nu, 1e-6).unwrap();
    let sigma = 0.5 * r0 / (n as f64).sqrt();
    let mu = solve_dp_mu(&inst.cache, &nu, sigma, 1.0).unwrap();
    let tau = tau_star(residual_norm_of_mu(&inst.cache, &nu, mu).unwrap(), n, sigma).unwrap();
    assert!((tau - 1.0).abs() <= 1e-6, "tau {tau}");
    assert!(solve_dp_mu(&inst.cache, &nu, 10.0 * r0, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn whiteness_is_bounded_and_invariant(rows in 2usize..=9, cols in 2usize..=9, scale in 0.01f64..100.0, shift in (0usize..9, 0usize..9), seed in any::<u64>()) {
        let e = random_grid(rows, cols, &mut rng(seed));
        let w = whiteness_of_image(&e).unwrap();
        let n = (rows * cols) as f64;
        prop_assert!(w >= 1.0 / n - 1e-12 && w <= 1.0 + 1e-12);
        prop_assert!((whiteness_of_image(&e.scale(scale)).unwrap() - w).abs() <= 1e-10 * w);
        let shifted = ImageGrid::from_fn(rows, cols, |r, c| e.get((r + shift.0) % rows, (c + shift.1) % cols));
        prop_assert!((whiteness_of_image(&shifted).unwrap() - w).abs() <= 1e-10 * w);
    }

    #[test]
    fn autocorrelation_matches_direct_sum(rows in 1usize..=6, cols in 1usize..=6, seed in any::<u64>()) {
        let e = random_grid(rows, cols, &mut rng(seed));
        let got = sample_autocorrelation(&e);
        let n = (rows * cols) as f64;
        let mut worst = 0.0f64;
        for l in 0..rows {
            for m in 0..cols {
                let mut s = 0.0;
                for i in 0..rows {
                    for j in 0..cols {
                        s += e.get(i, j) * e.get((i + l) % rows, (j + m) % cols);
                    }
                }
                worst = worst.max((got.get(l, m) - s / n).abs());
            }
        }
        prop_assert!(worst <= 1e-10, "worst {worst}");
    }
}
