//! Grid, truncation, design matrix and pseudoinverse properties.

use std::f64::consts::PI;

use faer::{Mat, Side};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use fbspca::basis::{BasisIndexSet, DesignMatrix, PinvMode, Pseudoinverse};
use fbspca::cli::gram_values;
use fbspca::expansion::Expander;
use fbspca::grid::GridSpec;

fn column_image(grid: &GridSpec, design: &DesignMatrix, k: u32, q: u32) -> Vec<Complex64> {
    let col = design.column(k, q).unwrap();
    let mut img = vec![Complex64::new(0.0, 0.0); grid.pixel_count()];
    for (p, v) in grid.points().iter().zip(col) {
        img[p.pixel] = v;
    }
    img
}

#[test]
fn block_sizes_non_increasing_and_end() {
    for l in [4usize, 6, 12, 24] {
        let b = BasisIndexSet::truncate(l).unwrap();
        let sizes = b.block_sizes();
        assert!(sizes.windows(2).all(|w| w[0] >= w[1]), "L={l}: {sizes:?}");
        assert!(sizes.iter().all(|&p| p > 0));
        assert_eq!(b.p(b.max_k().unwrap() + 1), 0);
    }
}

#[test]
fn truncation_examples_at_six() {
    let b = BasisIndexSet::truncate(6).unwrap();
    assert_eq!(b.p(0), 6);
    assert_eq!(b.max_k(), Some(12));
    let total = b.signed_count();
    assert!((61..=83).contains(&total), "{total}");
}

#[test]
fn asymptotic_set_is_contained() {
    // {k + 2q <= 2L + 1/2} from the large-argument root formula
    for l in [6usize, 12, 24] {
        let b = BasisIndexSet::truncate(l).unwrap();
        let mut asymptotic = 0;
        for k in 0..=2 * l as u32 {
            for q in 1.. {
                if (k + 2 * q) as f64 > 2.0 * l as f64 + 0.5 {
                    break;
                }
                asymptotic += 1;
                assert!(b.root(k, q).is_some(), "L={l}: ({k},{q}) missing");
            }
        }
        assert!(asymptotic <= b.len());
    }
}

#[test]
fn gram_spectrum_concentrates_as_l_grows() {
    let mut last = f64::INFINITY;
    for l in [6usize, 12, 24] {
        let v = gram_values(l).unwrap();
        assert!(v.windows(2).all(|w| w[0] >= w[1]));
        assert!(v.iter().all(|&x| x > 0.5));
        let outside = v.iter().filter(|&&x| !(0.95..=1.05).contains(&x)).count() as f64 / v.len() as f64;
        assert!(outside <= last, "L={l}: {outside} > {last}");
        last = outside;
    }
}

#[test]
fn columns_steer_under_grid_rotation() {
    let grid = GridSpec::square(8).unwrap();
    let basis = BasisIndexSet::truncate(8).unwrap();
    let design = DesignMatrix::build(&grid, &basis).unwrap();
    for &(k, q) in basis.pairs() {
        let img = column_image(&grid, &design, k, q);
        let rotated = grid.rotate90(&img).unwrap();
        let phase = Complex64::from_polar(1.0, -(k as f64) * PI / 2.0);
        for (r, v) in rotated.iter().zip(&img) {
            assert!((r - v * phase).norm() < 1e-12, "({k},{q})");
        }
    }
}

#[test]
fn column_norms_near_unit() {
    let grid = GridSpec::square(12).unwrap();
    let basis = BasisIndexSet::truncate(12).unwrap();
    let design = DesignMatrix::build(&grid, &basis).unwrap();
    for &(k, q) in basis.pairs() {
        let n2: f64 = design.column(k, q).unwrap().iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.area_element();
        assert!((0.8..=1.2).contains(&n2), "({k},{q}) {n2}");
    }
}

#[test]
fn sampled_column_expands_to_unit_vector() {
    let e = Expander::square(8).unwrap();
    let grid = e.grid().clone();
    // Re psi^{3,2} = (psi^{3,2} + conj psi^{3,2}) / 2, so a_{3,2} = 1/2
    let img: Vec<f64> = column_image(&grid, e.design(), 3, 2).iter().map(|z| z.re).collect();
    let c = e.expand(&img).unwrap();
    for (k, q, a) in c.iter() {
        if (k, q) == (3, 2) {
            assert!((a - Complex64::new(0.5, 0.0)).norm() < 1e-6);
        } else {
            assert!(a.norm() < 1e-6 * 0.5, "({k},{q}) {a}");
        }
    }
}

#[test]
fn white_noise_coefficient_covariance_matches_inverse_gram() {
    let grid = GridSpec::square(6).unwrap();
    let basis = BasisIndexSet::truncate(6).unwrap();
    let design = DesignMatrix::build(&grid, &basis).unwrap();
    let pinv = Pseudoinverse::new(&design, PinvMode::Exact).unwrap();
    let a = design.real_form();
    let gram = a.transpose() * a;
    let eig = gram.self_adjoint_eigen(Side::Lower).unwrap();
    let u = eig.U();
    let s = eig.S().column_vector();
    let dim = basis.real_dim();
    let inv_diag: Vec<f64> = (0..dim).map(|i| (0..dim).map(|j| u[(i, j)] * u[(i, j)] / s[j]).sum()).collect();

    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut acc = vec![0.0; dim];
    for _ in 0..n {
        let noise: Vec<f64> = (0..grid.masked_count()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y = pinv.apply(&noise).unwrap();
        for (a, v) in acc.iter_mut().zip(&y) {
            *a += v * v / n as f64;
        }
    }
    for (i, (got, want)) in acc.iter().zip(&inv_diag).enumerate() {
        assert!(((got - want) / want).abs() < 0.1, "entry {i}: {got} vs {want}");
    }
}

#[test]
fn analytic_transform_matches_numerical_integral() {
    // Riemann sum of psi^{kq}(x) exp(-2 pi i k0 . x) over a fine grid of the disk
    let l = 16;
    let basis = BasisIndexSet::truncate(l).unwrap();
    let fine = 600;
    let h = 2.0 / fine as f64;
    let mut worst: f64 = 0.0;
    for &(k, q) in &[(0u32, 1u32), (1, 1), (2, 3), (5, 2)] {
        let root = basis.root(k, q).unwrap();
        let norm = basis.normalization(k, q).unwrap();
        for &(k0, phi0) in &[(0.3, 0.0), (0.7, 1.1), (1.2, 2.5)] {
            let (w0, w1) = (k0 * f64::cos(phi0), k0 * f64::sin(phi0));
            let mut sum = Complex64::new(0.0, 0.0);
            for i in 0..fine {
                let y = -1.0 + (i as f64 + 0.5) * h;
                for j in 0..fine {
                    let x = -1.0 + (j as f64 + 0.5) * h;
                    let r = (x * x + y * y).sqrt();
                    if r > 1.0 {
                        continue;
                    }
                    let theta = y.atan2(x);
                    let radial = norm * fbspca::bessel::bessel_j(k, root * r).unwrap();
                    let psi = Complex64::from_polar(radial, k as f64 * theta);
                    sum += psi * Complex64::from_polar(1.0, -2.0 * PI * (w0 * x + w1 * y));
                }
            }
            sum *= h * h;
            let analytic = basis.analytic_ft(k, q, k0, phi0).unwrap();
            let rel = (sum - analytic).norm() / analytic.norm().max(1e-3);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 0.02, "worst relative difference {worst}");
}

#[test]
fn pseudoinverse_is_left_inverse() {
    let grid = GridSpec::square(10).unwrap();
    let basis = BasisIndexSet::truncate(10).unwrap();
    let design = DesignMatrix::build(&grid, &basis).unwrap();
    let pinv = Pseudoinverse::new(&design, PinvMode::Exact).unwrap();
    let prod = pinv.matrix() * design.real_form();
    let dim = basis.real_dim();
    let diff = &prod - Mat::<f64>::identity(dim, dim);
    assert!(diff.norm_l2() < 1e-8);
}

#[test]
fn basis_cache_round_trip() {
    let b = BasisIndexSet::truncate(9).unwrap();
    let back = BasisIndexSet::from_cache_bytes(&b.to_cache_bytes()).unwrap();
    assert_eq!(b, back);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mask_count_band_and_symmetry(l in 2usize..60) {
        let g = GridSpec::square(l).unwrap();
        let area = PI * (l * l) as f64;
        let m = g.masked_count() as f64;
        let slack = 3.0 / l as f64;
        prop_assert!(m <= area * (1.0 + slack) && m >= area * (1.0 - slack));
        prop_assert!((g.spacing() - 1.0 / l as f64).abs() < 1e-15);
        let mask: Vec<u8> = g.mask().iter().map(|&b| b as u8).collect();
        prop_assert_eq!(g.rotate90(&mask).unwrap(), mask.clone());
        prop_assert_eq!(g.flip_vertical_axis(&mask).unwrap(), mask.clone());
        // horizontal-axis flip is a half turn after a vertical-axis flip
        let half = g.rotate90(&g.rotate90(&mask).unwrap()).unwrap();
        prop_assert_eq!(g.flip_vertical_axis(&half).unwrap(), mask);
    }

    #[test]
    fn pairs_satisfy_criterion(l in 2usize..40) {
        let b = BasisIndexSet::truncate(l).unwrap();
        let limit = PI * l as f64;
        for &(k, q) in b.pairs() {
            prop_assert!(b.root(k, q).unwrap() <= limit);
            prop_assert!(k as usize <= 2 * l);
        }
        let rel = (b.signed_count() as f64 - 2.0 * (l * l) as f64) / (2.0 * (l * l) as f64);
        prop_assert!(rel.abs() <= 0.15 || l < 6);
    }
}
