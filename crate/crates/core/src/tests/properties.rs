use approx::assert_relative_eq;
use proptest::prelude::*;

use crate::density::validate_class;
use crate::domain::{gamma_seminorm, DomainMesh};
use crate::grid::{gradient_at_quadrature, integrate, project_mean_zero, quadrature_points};
use crate::tensor::{dist2_so, polar, quad_value};
use crate::{BaseKind, Density, Mat, PeriodicField, PeriodicGrid, SymTensor4};

fn mat2() -> impl Strategy<Value = Mat> {
    prop::array::uniform4(-2.0f64..2.0).prop_map(|e| Mat::from_row_major(2, &e).unwrap())
}

fn mat3() -> impl Strategy<Value = Mat> {
    prop::array::uniform9(-2.0f64..2.0).prop_map(|e| Mat::from_row_major(3, &e).unwrap())
}

fn rotation3() -> impl Strategy<Value = Mat> {
    (prop::array::uniform3(-1.0f64..1.0), 0.0f64..6.28).prop_filter_map("axis", |(a, t)| {
        let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        (n > 0.1).then(|| Mat::rotation3([a[0] / n, a[1] / n, a[2] / n], t))
    })
}

fn near_identity3() -> impl Strategy<Value = Mat> {
    prop::array::uniform9(-0.4f64..0.4).prop_map(|e| Mat::identity(3) + Mat::from_row_major(3, &e).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dist2_is_rotation_invariant(f in mat3(), r in rotation3()) {
        let a = dist2_so(&f);
        let b = dist2_so(&(r * f));
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn dist2_is_minimal_over_sampled_rotations(f in mat3(), r in rotation3()) {
        prop_assert!(dist2_so(&f) <= (f - r).norm_sq() + 1e-10);
    }

    #[test]
    fn polar_rotation_is_special_orthogonal(f in mat3()) {
        let r = polar(&f).rotation;
        prop_assert!((r.transpose() * r - Mat::identity(3)).norm() <= 1e-10);
        prop_assert!((r.det() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn dist2_equals_distance_to_polar_rotation(f in mat2()) {
        let r = polar(&f).rotation;
        prop_assert!((dist2_so(&f) - (f - r).norm_sq()).abs() <= 1e-10 * dist2_so(&f).max(1.0));
    }

    #[test]
    fn quad_value_is_two_homogeneous_and_polarizes(g in mat3(), h in mat3(), t in -3.0f64..3.0) {
        let l = SymTensor4::sym_projector(3);
        prop_assert!((quad_value(&l, &(g * t)) - t * t * quad_value(&l, &g)).abs() <= 1e-10 * (1.0 + t * t) * quad_value(&l, &g).max(1.0));
        let lhs = quad_value(&l, &(g + h)) - quad_value(&l, &g) - quad_value(&l, &h);
        prop_assert!((lhs - 2.0 * l.bilinear(&g, &h)).abs() <= 1e-10 * (1.0 + g.norm_sq() + h.norm_sq()));
    }

    #[test]
    fn densities_are_frame_indifferent(f in near_identity3(), r in rotation3(), y in prop::array::uniform3(0.0f64..1.0)) {
        for w in [
            Density::homogeneous(BaseKind::Dist2, 3),
            Density::layered(BaseKind::Stvk, 0.2, 3).unwrap(),
            Density::prestressed(BaseKind::Stvk, 0.1, 0.15).unwrap(),
        ] {
            let a = w.eval(&y, &f);
            let b = w.eval(&y, &(r * f));
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        }
    }

    #[test]
    fn densities_are_periodic(f in near_identity3(), y in prop::array::uniform3(0.0f64..1.0), z in prop::array::uniform3(-3i32..3)) {
        let w = Density::prestressed(BaseKind::Dist2, 0.2, 0.2).unwrap();
        let shifted = [y[0] + z[0] as f64, y[1] + z[1] as f64, y[2] + z[2] as f64];
        prop_assert_eq!(w.eval(&y, &f), w.eval(&shifted, &f));
        let l = Density::layered(BaseKind::Dist2, 0.3, 3).unwrap();
        prop_assert_eq!(l.eval(&y, &f), l.eval(&shifted, &f));
    }

    #[test]
    fn gamma_seminorm_is_two_homogeneous(e in prop::array::uniform4(-2.0f64..2.0), t in -3.0f64..3.0) {
        let f = Mat::from_row_major(2, &e).unwrap();
        let mesh = DomainMesh::unit(2, 4).unwrap();
        let a = gamma_seminorm(&(f * t), &mesh);
        prop_assert!((a - t * t * gamma_seminorm(&f, &mesh)).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn projection_is_idempotent(values in prop::collection::vec(-1.0f64..1.0, 2 * 16)) {
        let grid = PeriodicGrid::new(2, 1, 4).unwrap();
        let f = PeriodicField::from_values(grid, values).unwrap();
        let once = project_mean_zero(&f);
        let twice = project_mean_zero(&once);
        for (a, b) in once.values.iter().zip(&twice.values) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
        prop_assert!(once.mean().iter().all(|m| m.abs() <= 1e-12));
    }

    #[test]
    fn periodic_gradients_integrate_to_zero(values in prop::collection::vec(-1.0f64..1.0, 2 * 64), k in 1usize..3) {
        let grid = PeriodicGrid::new(2, k, 4).unwrap();
        let f = PeriodicField::from_values(grid, values[..grid.dof_count()].to_vec()).unwrap();
        let grads = gradient_at_quadrature(&f);
        let mut total = Mat::zeros(2);
        let mut norm = 0.0;
        for g in &grads {
            total += *g;
            norm += g.norm_sq();
        }
        prop_assert!(total.norm() <= 1e-10 * norm.sqrt().max(1.0));
    }
}

#[test]
fn quadrature_weights_sum_to_cell_measure() {
    for (dim, k, res) in [(2, 1, 4), (2, 3, 6), (3, 2, 4)] {
        let grid = PeriodicGrid::new(dim, k, res).unwrap();
        let ones = vec![1.0; grid.quad_count()];
        assert_eq!(integrate(&ones, &grid).unwrap(), (k as f64).powi(dim as i32));
    }
}

#[test]
fn orthogonal_fourier_modes_integrate_to_zero() {
    let grid = PeriodicGrid::new(2, 1, 16).unwrap();
    let pts = quadrature_points(&grid);
    let two_pi = 2.0 * std::f64::consts::PI;
    let vals: Vec<f64> = pts.iter().map(|p| (two_pi * p[0]).sin() * (two_pi * 2.0 * p[1]).cos()).collect();
    assert!(integrate(&vals, &grid).unwrap().abs() < 1e-10);
}

#[test]
fn integrate_rejects_wrong_length() {
    let grid = PeriodicGrid::new(2, 1, 4).unwrap();
    assert!(integrate(&[1.0; 3], &grid).is_err());
}

#[test]
fn quadratic_term_matches_expansion_uniformly() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for w in [Density::layered(BaseKind::Dist2, 0.3, 2).unwrap(), Density::homogeneous(BaseKind::Stvk, 3)] {
        let q = w.quadratic_term().unwrap();
        let mut worst = [0.0f64; 3];
        for _ in 0..100 {
            let y: Vec<f64> = (0..w.dim).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut g = Mat::zeros(w.dim);
            for a in 0..w.dim * w.dim {
                g.set_flat(a, rng.gen_range(-1.0..1.0));
            }
            let g = g * (1.0 / g.norm());
            for (i, h) in [1e-1, 1e-2, 1e-3].iter().enumerate() {
                let r = (w.eval(&y, &(Mat::identity(w.dim) + g * *h)) - q.value(&y, &(g * *h))).abs() / (h * h);
                worst[i] = worst[i].max(r);
            }
        }
        assert!(worst[1] < worst[0] && worst[2] < worst[1], "{worst:?}");
    }
}

#[test]
fn skew_directions_have_zero_quadratic_term() {
    let w = Density::layered(BaseKind::Dist2, 0.5, 3).unwrap();
    let q = w.quadratic_term().unwrap();
    let skew = Mat::unit(3, 0, 1) - Mat::unit(3, 1, 0);
    assert!(q.value(&[0.2, 0.7, 0.1], &skew).abs() < 1e-6);
}

#[test]
fn validation_examples() {
    assert!(validate_class(&Density::homogeneous(BaseKind::Dist2, 2), 100, 1).all_passed());
    assert!(validate_class(&Density::layered(BaseKind::Dist2, 1.0, 2).unwrap(), 100, 1).all_passed());
    let pre = validate_class(&Density::prestressed(BaseKind::Stvk, 0.1, 0.15).unwrap(), 100, 1);
    assert!(!pre.condition("W2").unwrap().passed);
    assert!(!pre.condition("W3").unwrap().passed);
    let w3 = validate_class(&Density::homogeneous(BaseKind::Dist2, 3), 100, 1);
    assert_relative_eq!(w3.condition("W3").unwrap().fitted_constant.unwrap(), 1.0, epsilon = 1e-9);
}

#[test]
fn lemma5_bound_over_skew_matrices() {
    let mesh = DomainMesh::unit(2, 8).unwrap();
    let mut ratio: f64 = 0.0;
    for i in 1..50 {
        let t = i as f64 * 0.13 - 3.0;
        let f = (Mat::unit(2, 0, 1) - Mat::unit(2, 1, 0)) * t;
        ratio = ratio.max(f.norm_sq() / gamma_seminorm(&f, &mesh));
    }
    assert!(ratio.is_finite() && (ratio - 24.0).abs() < 1e-9, "{ratio}");
}
