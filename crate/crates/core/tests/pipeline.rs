mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use common::*;
use whitesr::cel0::{cel0_objective, column_norms, irwp_irl1_run, Irl1Options};
use whitesr::grid::{build_kernel, kernel_to_otf, ImageGrid, KernelSpec};
use whitesr::io::{decode_pgm16, encode_pgm16, parse_matrix, parse_points, write_matrix, write_points, Metadata};
use whitesr::metrics::{bicubic_upsample, gaussian_window, jaccard, psnr, ssim_with_range};
use whitesr::operators::Decimator;
use whitesr::prox::Cel0Params;
use whitesr::sim::{degrade, make_phantom, DegradationSpec, NoiseLevel, PhantomKind};

#[test]
fn column_norms_match_dense_forward_matrix() {
    for (kernel, dr, dc) in [
        (KernelSpec::Gaussian { band: 5, sigma: 1.2 }, 2, 2),
        (KernelSpec::Uniform { rows: 3, cols: 2 }, 3, 1),
        (KernelSpec::Gaussian { band: 3, sigma: 0.7 }, 1, 3),
    ] {
        let (rows, cols) = (6, 6);
        let dec = Decimator::new(rows, cols, dr, dc).unwrap();
        let otf = kernel_to_otf(&build_kernel(&kernel).unwrap(), rows, cols).unwrap();
        let a: DMatrix<f64> = dense_select(&dec) * dense_blur(&kernel, rows, cols);
        let got = column_norms(&otf, &dec).unwrap();
        for k in 0..rows * cols {
            assert!((got.data()[k] - a.column(k).norm()).abs() <= 1e-12, "{kernel} pixel {k}");
        }
    }
}

#[test]
fn irl1_with_frozen_mu_does_not_increase_the_objective() {
    let truth = make_phantom(PhantomKind::Points { count: 4, min_separation: 6.0 }, 32, 32, 9).unwrap().image;
    let spec = DegradationSpec {
        kernel: KernelSpec::Gaussian { band: 7, sigma: 1.5 },
        pixel_blur: false,
        dr: 2,
        dc: 2,
        noise: NoiseLevel::Percent(1.0),
        seed: 9,
    };
    let deg = degrade(&truth, &spec).unwrap();
    let mu = 2e3;
    let opts = Irl1Options { fixed_mu: Some(mu), inner_max_iter: 400, ..Irl1Options::default() };
    let out = irwp_irl1_run(&deg.b, &deg.otf, &deg.dec, &opts).unwrap();
    assert!(!out.outer.is_empty());
    let params = Cel0Params::new(mu, out.col_norms.clone()).unwrap();
    let start = cel0_objective(&out.init, &deg.b, &deg.otf, &deg.dec, &params).unwrap();
    let end = cel0_objective(&out.report.x_star, &deg.b, &deg.otf, &deg.dec, &params).unwrap();
    assert!(end <= start * (1.0 + 1e-6), "{end} > {start}");
    assert!(out.report.x_star.min() >= 0.0);
    for rec in &out.outer {
        assert_eq!(rec.mu, mu);
        assert!((rec.surrogate_start - rec.objective_start).abs() <= 1e-10 * rec.objective_start.abs().max(1.0));
    }
}

/// Mean SSIM by explicit per-window sums over a 2-D Gaussian window.
fn ssim_oracle(x: &ImageGrid, y: &ImageGrid, range: f64) -> f64 {
    let clamp = |n: usize| if n >= 11 { 11 } else if n % 2 == 1 { n } else { n - 1 };
    let (sr, sc) = (clamp(x.rows()), clamp(x.cols()));
    let (gr, gc) = (gaussian_window(sr, 1.5), gaussian_window(sc, 1.5));
    let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
    let mut total = 0.0;
    let mut count = 0;
    for r0 in 0..=x.rows() - sr {
        for c0 in 0..=x.cols() - sc {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..sr {
                for j in 0..sc {
                    let w = gr[i] * gc[j];
                    let (a, b) = (x.get(r0 + i, c0 + j), y.get(r0 + i, c0 + j));
                    mx += w * a;
                    my += w * b;
                    sxx += w * a * a;
                    syy += w * b * b;
                    sxy += w * a * b;
                }
            }
            let (vx, vy, cxy) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn ssim_matches_windowed_oracle() {
    let mut g = rng(21);
    for (rows, cols) in [(16, 16), (20, 13), (9, 12)] {
        let x = random_grid(rows, cols, &mut g);
        let noise = random_grid(rows, cols, &mut g).scale(0.3);
        let y = x.add(&noise);
        let got = ssim_with_range(&x, &y, 2.0).unwrap();
        assert!((got - ssim_oracle(&x, &y, 2.0)).abs() <= 1e-12, "{rows}x{cols}");
        assert!((ssim_with_range(&x, &x, 2.0).unwrap() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn bicubic_reproduces_samples_and_constants() {
    let b = random_grid(6, 5, &mut rng(2));
    let up = bicubic_upsample(&b, 3, 2).unwrap();
    for r in 0..6 {
        for c in 0..5 {
            assert!((up.get(3 * r, 2 * c) - b.get(r, c)).abs() <= 1e-14);
        }
    }
    let flat = bicubic_upsample(&ImageGrid::filled(4, 4, 0.7), 4, 4).unwrap();
    assert!(flat.data().iter().all(|v| (v - 0.7).abs() <= 1e-14));
}

#[test]
fn metric_edge_cases() {
    let x = random_grid(8, 8, &mut rng(4));
    assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
    assert!(psnr(&x, &ImageGrid::zeros(4, 4)).is_err());
    assert_eq!(jaccard(&[], &[], 2.0).unwrap(), 1.0);
    assert_eq!(jaccard(&[(1.0, 1.0)], &[(1.5, 1.0)], 1.0).unwrap(), 1.0);
    assert_eq!(jaccard(&[(1.0, 1.0)], &[(5.0, 1.0)], 1.0).unwrap(), 0.0);
}

#[test]
fn degradation_is_reproducible_and_noise_has_requested_level() {
    let x = make_phantom(PhantomKind::Geometric { shapes: 6 }, 128, 128, 3).unwrap().image;
    let spec = DegradationSpec {
        kernel: KernelSpec::Gaussian { band: 7, sigma: 1.5 },
        pixel_blur: true,
        dr: 2,
        dc: 2,
        noise: NoiseLevel::Absolute(0.05),
        seed: 12,
    };
    let (a, b) = (degrade(&x, &spec).unwrap(), degrade(&x, &spec).unwrap());
    assert_eq!(a.b, b.b);
    let noise = a.b.sub(&a.clean);
    let sd = (noise.norm_sq() / noise.len() as f64).sqrt();
    assert!((sd / 0.05 - 1.0).abs() < 0.03, "noise sd {sd}");
    let other = degrade(&x, &DegradationSpec { seed: 13, ..spec.clone() }).unwrap();
    assert_ne!(a.b, other.b);

    let pct = degrade(&x, &DegradationSpec { noise: NoiseLevel::Percent(2.0), ..spec }).unwrap();
    assert!((pct.sigma - 0.02 * pct.clean.max()).abs() <= 1e-15);
}

#[test]
fn phantoms_respect_their_parameters() {
    let flat = make_phantom(PhantomKind::Blocks { cell: 16 }, 16, 16, 1).unwrap().image;
    assert!(flat.data().iter().all(|&v| v == flat.data()[0]));
    let pts = make_phantom(PhantomKind::Points { count: 6, min_separation: 7.0 }, 48, 48, 8).unwrap();
    assert_eq!(pts.points.len(), 6);
    for (i, p) in pts.points.iter().enumerate() {
        assert_eq!(pts.image.get(p.0, p.1), 1.0);
        for q in &pts.points[i + 1..] {
            let d = ((p.0 as f64 - q.0 as f64).powi(2) + (p.1 as f64 - q.1 as f64).powi(2)).sqrt();
            assert!(d >= 7.0);
        }
    }
    assert_eq!(pts.image.sum(), 6.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn matrix_text_round_trips_exactly(rows in 1usize..=7, cols in 1usize..=7, seed in any::<u64>()) {
        let x = random_grid(rows, cols, &mut rng(seed)).map(|v| v * 1e3);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &x).unwrap();
        prop_assert_eq!(parse_matrix(&String::from_utf8(buf).unwrap()).unwrap(), x);
    }

    #[test]
    fn pgm_round_trips_within_quantisation(rows in 1usize..=9, cols in 1usize..=9, seed in any::<u64>()) {
        let x = random_grid(rows, cols, &mut rng(seed));
        let back = decode_pgm16(&encode_pgm16(&x)).unwrap();
        let (lo, hi) = (x.min(), x.max());
        let span = if hi > lo { hi - lo } else { 1.0 };
        for (a, q) in x.data().iter().zip(back.data()) {
            prop_assert!(((a - lo) / span * 65535.0 - q).abs() <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn points_and_metadata_round_trip(pts in prop::collection::vec((0usize..100, 0usize..100, -5.0f64..5.0), 0..8)) {
        let mut buf = Vec::new();
        write_points(&mut buf, &pts).unwrap();
        prop_assert_eq!(parse_points(&String::from_utf8(buf).unwrap()).unwrap(), pts);
        let mut meta = Metadata::new();
        meta.set("kernel", "gaussian:13:3");
        meta.set("sigma", 0.1);
        let again = Metadata::parse(&meta.to_text()).unwrap();
        prop_assert_eq!(again, meta);
    }
}

#[test]
fn malformed_files_are_format_errors() {
    assert!(matches!(parse_matrix("1 2\n3"), Err(whitesr::Error::Format(_))));
    assert!(matches!(decode_pgm16(b"P2\n1 1\n255\n0"), Err(whitesr::Error::Format(_))));
    assert!(matches!(Metadata::parse("novalue"), Err(whitesr::Error::Format(_))));
}
