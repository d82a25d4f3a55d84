mod common;

use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;

use common::*;
use whitesr::grid::{build_kernel, dft2, idft2, kernel_to_otf, ImageGrid, KernelSpec};
use whitesr::operators::{build_regularizer, decimate, Decimator, RegularizerShape};
use whitesr::solver::{compute_nu, lowres_residual, precompute_cache, residual_norm_of_mu, solve_l2l2, SplitVector};

fn kernel_strategy() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (prop::sample::select(vec![1usize, 3, 5]), 0.4f64..2.0).prop_map(|(band, sigma)| KernelSpec::Gaussian { band, sigma }),
        (1usize..=3, 1usize..=3).prop_map(|(dr, dc)| KernelSpec::Uniform { rows: dr, cols: dc }),
    ]
}

fn shape_strategy() -> impl Strategy<Value = RegularizerShape> {
    prop_oneof![Just(RegularizerShape::Identity), Just(RegularizerShape::Gradient)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn spectral_solve_matches_dense_normal_equations(
        lr in (2usize..=5, 2usize..=5),
        factors in (1usize..=3, 1usize..=3),
        kernel in kernel_strategy(),
        shape in shape_strategy(),
        log_mu in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let (dr, dc) = factors;
        let (rows, cols) = (lr.0 * dr, lr.1 * dc);
        let mut g = rng(seed);
        let b = random_grid(lr.0, lr.1, &mut g);
        let dec = Decimator::new(rows, cols, dr, dc).unwrap();
        let otf = kernel_to_otf(&build_kernel(&kernel).unwrap(), rows, cols);
        prop_assume!(otf.is_ok());
        let otf = otf.unwrap();
        let reg = build_regularizer(shape, rows, cols).unwrap();
        let cache = precompute_cache(&otf, &reg, &b, &dec, None).unwrap();
        let v = SplitVector((0..reg.count()).map(|_| random_grid(rows, cols, &mut g)).collect());
        let mu = 10f64.powf(log_mu);

        let x = solve_l2l2(&cache, &v, mu).unwrap();
        let a = dense_select(&dec) * dense_blur(&kernel, rows, cols);
        let ls = dense_regularizer(shape, rows, cols);
        let vs: Vec<Vec<f64>> = v.parts().iter().map(|p| p.data().to_vec()).collect();
        let want = dense_l2l2(&a, &ls, b.data(), &vs, mu, cache.epsilon());
        prop_assert!(rel_err(x.data(), &want) <= 1e-9, "rel err {}", rel_err(x.data(), &want));

        let nu = compute_nu(&cache, &v).unwrap();
        let direct = lowres_residual(&x, &otf, &dec, &b).unwrap().norm();
        let closed = residual_norm_of_mu(&cache, &nu, mu).unwrap();
        prop_assert!((closed - direct).abs() <= 1e-8 * direct.max(1e-12));
    }

    #[test]
    fn dft_matches_dense_unitary_matrix(rows in 1usize..=6, cols in 1usize..=6, seed in any::<u64>()) {
        let x = random_grid(rows, cols, &mut rng(seed));
        let f = unitary_dft(rows, cols);
        let dense = &f * DVector::from_iterator(rows * cols, x.data().iter().map(|&v| Complex64::new(v, 0.0)));
        let scale = ((rows * cols) as f64).sqrt();
        let got = dft2(&x).unwrap();
        for (a, b) in got.data().iter().zip(dense.iter()) {
            prop_assert!((a - b * scale).norm() <= 1e-10);
        }
        let back = idft2(&got).unwrap();
        prop_assert!(max_abs(back.data(), x.data()) <= 1e-12);
    }

    #[test]
    fn blur_then_decimate_matches_dense_forward_model(
        lr in (2usize..=5, 2usize..=5),
        factors in (1usize..=3, 1usize..=3),
        kernel in kernel_strategy(),
        seed in any::<u64>(),
    ) {
        let (dr, dc) = factors;
        let (rows, cols) = (lr.0 * dr, lr.1 * dc);
        let x = random_grid(rows, cols, &mut rng(seed));
        let dec = Decimator::new(rows, cols, dr, dc).unwrap();
        let otf = kernel_to_otf(&build_kernel(&kernel).unwrap(), rows, cols);
        prop_assume!(otf.is_ok());
        let otf = otf.unwrap();
        let plan = whitesr::grid::Fft2::new(rows, cols);
        let got = decimate(&whitesr::grid::apply_otf(&plan, &otf, &x).unwrap(), &dec).unwrap();
        let a = dense_select(&dec) * dense_blur(&kernel, rows, cols);
        let want = a * DVector::from_column_slice(x.data());
        prop_assert!(max_abs(got.data(), want.as_slice()) <= 1e-12);
    }
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn shape_mismatches_are_rejected() {
    let dec = Decimator::new(4, 4, 2, 2).unwrap();
    let otf = kernel_to_otf(&build_kernel(&KernelSpec::Uniform { rows: 1, cols: 1 }).unwrap(), 4, 4).unwrap();
    let reg = build_regularizer(RegularizerShape::Gradient, 4, 4).unwrap();
    assert!(precompute_cache(&otf, &reg, &ImageGrid::zeros(3, 2), &dec, None).is_err());
    let wrong = kernel_to_otf(&build_kernel(&KernelSpec::Uniform { rows: 1, cols: 1 }).unwrap(), 4, 6).unwrap();
    assert!(precompute_cache(&wrong, &reg, &ImageGrid::zeros(2, 2), &dec, None).is_err());
    assert!(Decimator::new(5, 4, 2, 2).is_err());
}
