//! Expansion, reconstruction, steering, reflection and mean handling.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;

use fbspca::basis::BasisIndexSet;
use fbspca::expansion::{coefficient_header, decode_coefficients, encode_coefficients, rotational_mean, subtract_mean, CoeffSet, Expander};

fn expander() -> &'static Expander {
    static E: OnceLock<Expander> = OnceLock::new();
    E.get_or_init(|| Expander::square(8).unwrap())
}

fn coeffs_from(values: &[(f64, f64)], basis: &BasisIndexSet) -> CoeffSet {
    let mut c = CoeffSet::zeros(basis);
    let mut it = values.iter().cycle();
    for k in 0..basis.order_count() as u32 {
        for a in c.block_mut(k) {
            let &(re, im) = it.next().unwrap();
            *a = Complex64::new(re, if k == 0 { 0.0 } else { im });
        }
    }
    c
}

fn coeff_strategy() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 1..200)
}

fn image_strategy() -> impl Strategy<Value = Vec<f64>> {
    let n = expander().grid().pixel_count();
    prop::collection::vec(-1.0f64..1.0, n)
}

fn rel(a: &CoeffSet, b: &CoeffSet) -> f64 {
    let d = a.sub(b).unwrap().weighted_norm_sqr().sqrt();
    d / a.weighted_norm_sqr().sqrt().max(b.weighted_norm_sqr().sqrt()).max(1e-300)
}

fn residual(e: &Expander, c: &CoeffSet, img: &[f64]) -> f64 {
    let rec = e.reconstruct(c).unwrap();
    e.grid().points().iter().map(|p| (rec[p.pixel] - img[p.pixel]).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn zero_image_gives_zero_coefficients() {
    let e = expander();
    let c = e.expand(&vec![0.0; e.grid().pixel_count()]).unwrap();
    assert!(c.iter().all(|(_, _, a)| a == Complex64::new(0.0, 0.0)));
    let img = e.reconstruct(&CoeffSet::zeros(e.basis())).unwrap();
    assert!(img.iter().all(|&v| v == 0.0));
}

#[test]
fn rejects_bad_images() {
    let e = expander();
    assert!(e.expand(&[0.0; 3]).is_err());
    let mut img = vec![0.0; e.grid().pixel_count()];
    img[e.grid().points()[0].pixel] = f64::NAN;
    assert!(e.expand(&img).is_err());
}

#[test]
fn bandlimited_round_trip() {
    let e = expander();
    let c = coeffs_from(&[(0.3, -0.2), (1.0, 0.5), (-0.7, 0.1)], e.basis());
    let back = e.expand(&e.reconstruct(&c).unwrap()).unwrap();
    assert!(rel(&c, &back) < 1e-6);
}

#[test]
fn single_image_mean_keeps_radial_part() {
    let e = expander();
    let c = coeffs_from(&[(0.3, -0.2), (1.0, 0.5)], e.basis());
    let m = rotational_mean(std::slice::from_ref(&c)).unwrap();
    assert_eq!(m.block(0), c.block(0));
    for k in 1..m.order_count() as u32 {
        assert!(m.block(k).iter().all(|a| a.norm() == 0.0));
    }
    let centered = subtract_mean(std::slice::from_ref(&c)).unwrap();
    assert!(centered[0].block(0).iter().all(|a| a.norm() == 0.0));
    assert!(rotational_mean(&[]).is_err());
}

#[test]
fn mean_matches_dense_rotation_average() {
    let e = expander();
    let grid = e.grid();
    let c = coeffs_from(&[(0.8, 0.0), (0.5, -0.4), (-0.3, 0.6), (0.2, 0.2)], e.basis());
    let analytic = e.reconstruct(&rotational_mean(std::slice::from_ref(&c)).unwrap()).unwrap();
    let mut copies = Vec::with_capacity(720);
    for j in 0..360 {
        let s = c.steer(2.0 * PI * j as f64 / 360.0);
        copies.push(s.reflect());
        copies.push(s);
    }
    let images = e.reconstruct_all(&copies).unwrap();
    let mut avg = vec![0.0; grid.pixel_count()];
    for img in &images {
        for (a, v) in avg.iter_mut().zip(img) {
            *a += v / images.len() as f64;
        }
    }
    let peak = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = avg.iter().zip(&analytic).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err / peak < 1e-3, "{}", err / peak);
    // equal-radius pixels agree
    for &(key, _) in grid.distinct_radii().iter().take(5) {
        let vals: Vec<f64> = grid
            .points()
            .iter()
            .filter(|p| p.radius_key == key)
            .map(|p| analytic[p.pixel])
            .collect();
        for v in &vals {
            assert!((v - vals[0]).abs() < 1e-9);
        }
    }
}

#[test]
fn coefficient_file_round_trip() {
    let e = expander();
    let sets = vec![coeffs_from(&[(0.1, 0.2)], e.basis()), coeffs_from(&[(-1.0, 3.0), (2.0, 0.5)], e.basis())];
    let bytes = encode_coefficients(&sets, e.basis()).unwrap();
    assert_eq!(coefficient_header(&bytes).unwrap(), (2, 8, e.basis().len()));
    assert_eq!(decode_coefficients(&bytes, e.basis()).unwrap(), sets);
    assert!(decode_coefficients(&bytes[..bytes.len() - 1], e.basis()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn expand_is_linear(a in image_strategy(), b in image_strategy(), x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let e = expander();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(u, v)| x * u + y * v).collect();
        let lhs = e.expand(&mix).unwrap();
        let rhs = e.expand(&a).unwrap().scale(x).add(&e.expand(&b).unwrap().scale(y)).unwrap();
        prop_assert!(rel(&lhs, &rhs) < 1e-10);
    }

    #[test]
    fn expansion_is_least_squares(img in image_strategy(), probe in coeff_strategy(), eps in 1e-3f64..0.1) {
        let e = expander();
        let c = e.expand(&img).unwrap();
        let best = residual(e, &c, &img);
        let other = c.add(&coeffs_from(&probe, e.basis()).scale(eps)).unwrap();
        prop_assert!(best <= residual(e, &other, &img) + 1e-12);
    }

    #[test]
    fn real_images_have_real_radial_coefficients(img in image_strategy()) {
        let c = expander().expand(&img).unwrap();
        prop_assert!(c.k0_imaginary_ratio() < 1e-10);
    }

    #[test]
    fn quarter_turn_and_flip_are_exact(img in image_strategy()) {
        let e = expander();
        let g = e.grid();
        let c = e.expand(&img).unwrap();
        let rotated = g.rotate90(&img).unwrap();
        prop_assert!(rel(&c.steer(PI / 2.0), &e.expand(&rotated).unwrap()) < 1e-8);
        prop_assert!(rel(&c.reflect(), &e.expand(&g.flip_vertical_axis(&img).unwrap()).unwrap()) < 1e-8);
        let r0 = residual(e, &c, &img);
        let r1 = residual(e, &c.steer(PI / 2.0), &rotated);
        prop_assert!((r0 - r1).abs() <= 1e-9 * r0.max(1e-300));
    }

    #[test]
    fn steering_composes_and_preserves_norm(v in coeff_strategy(), a in -7.0f64..7.0, b in -7.0f64..7.0) {
        let c = coeffs_from(&v, expander().basis());
        prop_assert!(rel(&c.steer(0.0), &c) == 0.0);
        prop_assert!(rel(&c.steer(a).steer(b), &c.steer(a + b)) < 1e-12);
        let n0 = c.weighted_norm_sqr();
        prop_assert!((c.steer(a).weighted_norm_sqr() - n0).abs() <= 1e-12 * n0);
        prop_assert!((c.reflect().weighted_norm_sqr() - n0).abs() <= 1e-12 * n0);
    }

    #[test]
    fn reflection_is_an_involution(v in coeff_strategy()) {
        let c = coeffs_from(&v, expander().basis());
        prop_assert_eq!(c.reflect().reflect(), c.clone());
        let r = c.reflect();
        prop_assert_eq!(r.block(0), c.block(0));
        prop_assert!(c.reflect().k0_imaginary_ratio() < 1e-10);
        prop_assert!(c.steer(1.3).k0_imaginary_ratio() < 1e-10);
    }

    #[test]
    fn centering(vs in prop::collection::vec(coeff_strategy(), 1..6)) {
        let basis = expander().basis();
        let sets: Vec<CoeffSet> = vs.iter().map(|v| coeffs_from(v, basis)).collect();
        let centered = subtract_mean(&sets).unwrap();
        for q in 0..basis.p(0) {
            let s: f64 = centered.iter().map(|c| c.block(0)[q].re).sum();
            prop_assert!(s.abs() < 1e-12 * sets.len() as f64 * 10.0);
        }
        for (a, b) in centered.iter().zip(&sets) {
            for k in 1..basis.order_count() as u32 {
                prop_assert_eq!(a.block(k), b.block(k));
            }
        }
    }
}
