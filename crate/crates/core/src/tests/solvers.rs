use crate::cell::{homogenized_tensor, khom_curve, solve_linear_cell, solve_nonlinear_cell};
use crate::domain::{minimize_functional, richardson, DomainMesh, Functional, Integrand, Load};
use crate::grid::quadrature_points;
use crate::tensor::quad_value;
use crate::{BaseKind, Density, Mat, PeriodicGrid, SolverOptions, StartConfig, StartSet, SymTensor4};

fn opts() -> SolverOptions {
    SolverOptions { tol: 1e-10, ..Default::default() }
}

#[test]
fn homogenized_tensor_is_symmetric_psd_and_below_average() {
    let w = Density::layered(BaseKind::Dist2, 0.3, 2).unwrap();
    let q = w.quadratic_term().unwrap();
    let grid = PeriodicGrid::new(2, 1, 8).unwrap();
    let hom = homogenized_tensor(&q, grid, &opts()).unwrap();
    assert!(hom.l_hom.max_asymmetry() < 1e-10);
    assert!(hom.l_hom.is_positive_semidefinite(1e-10));
    let pts = quadrature_points(&grid);
    for g in [Mat::unit(2, 0, 0), Mat::unit(2, 1, 1), Mat::unit(2, 0, 1) + Mat::unit(2, 1, 0)] {
        let avg = pts.iter().map(|y| q.value(y, &g)).sum::<f64>() / pts.len() as f64;
        assert!(hom.value(&g) <= avg + 1e-10, "{} > {avg}", hom.value(&g));
    }
}

#[test]
fn laminate_bounds_are_attained() {
    let w = Density::layered(BaseKind::Dist2, 0.5, 2).unwrap();
    let q = w.quadratic_term().unwrap();
    let hom = homogenized_tensor(&q, PeriodicGrid::new(2, 1, 16).unwrap(), &opts()).unwrap();
    let along = Mat::unit(2, 0, 0);
    let across = Mat::unit(2, 1, 1);
    let (stiff, soft) = (q.value(&[0.5, 0.25], &across), q.value(&[0.5, 0.75], &across));
    let harmonic = 2.0 / (1.0 / soft + 1.0 / stiff);
    let arithmetic = 0.5 * (soft + stiff);
    assert!((hom.value(&across) - harmonic).abs() < 1e-8 * harmonic, "{} vs {harmonic}", hom.value(&across));
    assert!((hom.value(&along) - arithmetic).abs() < 1e-8 * arithmetic, "{} vs {arithmetic}", hom.value(&along));
}

#[test]
fn linear_cell_is_k_invariant_and_monotone() {
    let q = Density::layered(BaseKind::Stvk, 0.4, 2).unwrap().quadratic_term().unwrap();
    let g = Mat::from_rows([[1.0, 0.3], [0.3, -0.5]]);
    let one = solve_linear_cell(&q, &g, PeriodicGrid::new(2, 1, 8).unwrap(), &opts()).unwrap();
    let two = solve_linear_cell(&q, &g, PeriodicGrid::new(2, 2, 8).unwrap(), &opts()).unwrap();
    assert!((one.energy - two.energy).abs() < 1e-9 * one.energy);
    for r in [&one, &two] {
        assert!(r.energy_trace.windows(2).all(|p| p[1] <= p[0] + 1e-12 * p[0].abs().max(1.0)));
    }
}

#[test]
fn corrector_is_stationary() {
    let q = Density::layered(BaseKind::Dist2, 0.2, 2).unwrap().quadratic_term().unwrap();
    let grid = PeriodicGrid::new(2, 1, 8).unwrap();
    let g = Mat::unit(2, 0, 0);
    let r = solve_linear_cell(&q, &g, grid, &opts()).unwrap();
    let mut hi = r.corrector.clone();
    let mut lo = r.corrector.clone();
    let n = hi.values.len();
    for i in 0..n {
        let bump = 1e-3 * ((i * 7919 % 13) as f64 - 6.0) / 6.0;
        hi.values[i] += bump;
        lo.values[i] -= bump;
    }
    let e_hi = cell_average(&q, &g, &hi);
    let e_lo = cell_average(&q, &g, &lo);
    assert!((e_hi - e_lo).abs() < 1e-9, "{e_hi} vs {e_lo}");
}

fn cell_average(q: &crate::QuadraticField, g: &Mat, phi: &crate::PeriodicField) -> f64 {
    let pts = quadrature_points(&phi.grid);
    let grads = crate::grid::gradient_at_quadrature(phi);
    pts.iter().zip(&grads).map(|(y, d)| q.value(y, &(*g + *d))).sum::<f64>() / pts.len() as f64
}

#[test]
fn rotations_cost_nothing() {
    let w = Density::layered(BaseKind::Dist2, 0.5, 2).unwrap();
    let grid = PeriodicGrid::new(2, 1, 4).unwrap();
    let r = solve_nonlinear_cell(&w, &Mat::rotation2(0.7), grid, &StartSet::zero(grid), &opts()).unwrap();
    assert!(r.energy.abs() < 1e-12, "{}", r.energy);
}

#[test]
fn multi_cell_curve_never_increases() {
    let w = Density::layered(BaseKind::Dist2, 0.01, 2).unwrap();
    let f = Mat::diag(&[0.8, 1.0]);
    let cfg = StartConfig { zero: true, bending: true, random_fields: 0, ..Default::default() };
    let (points, _) = khom_curve(&w, &f, &[1, 2, 4], 6, &cfg, &opts()).unwrap();
    assert!(points.windows(2).all(|p| p[1].running_min <= p[0].running_min));
    assert!(points[2].energy < points[0].energy);
}

#[test]
fn richardson_is_exact_on_linear_data() {
    let e = |x: f64| 2.0 + 3.0 * x;
    assert!((richardson(0.1, e(0.1), 0.05, e(0.05)) - 2.0).abs() < 1e-12);
}

#[test]
fn homogeneous_quadratic_paths_agree() {
    let w = Density::homogeneous(BaseKind::Stvk, 2);
    let q = w.quadratic_term().unwrap();
    let l = q.base_tensor().clone();
    let mesh = DomainMesh::unit(2, 8).unwrap();
    let load = Load::default_lift(2);
    let lin = minimize_functional(Functional::LinEps { eps: 0.5 }, Integrand::Quadratic(&q), &mesh, &load, &opts()).unwrap();
    let hom = minimize_functional(Functional::Hom0, Integrand::HomTensor(&l), &mesh, &load, &opts()).unwrap();
    assert!((lin.energy - hom.energy).abs() < 1e-9 * hom.energy.abs().max(1e-12));
}

#[test]
fn nonlinear_energy_approaches_linearization() {
    let w = Density::layered(BaseKind::Stvk, 0.5, 2).unwrap();
    let q = w.quadratic_term().unwrap();
    let mesh = DomainMesh::unit(2, 8).unwrap();
    let load = Load::default_lift(2);
    let lin = minimize_functional(Functional::LinEps { eps: 0.5 }, Integrand::Quadratic(&q), &mesh, &load, &opts()).unwrap();
    let non = minimize_functional(Functional::EpsH { eps: 0.5, h: 0.01 }, Integrand::Density(&w), &mesh, &load, &opts()).unwrap();
    assert!((non.energy - lin.energy).abs() <= 0.05 * lin.energy.abs(), "{} vs {}", non.energy, lin.energy);
}

#[test]
fn mismatched_integrand_is_rejected() {
    let mesh = DomainMesh::unit(2, 4).unwrap();
    let l = SymTensor4::sym_projector(2);
    let r = minimize_functional(Functional::HomH { h: 0.1 }, Integrand::HomTensor(&l), &mesh, &Load::None, &opts());
    assert!(r.is_err());
    let w = Density::homogeneous(BaseKind::Dist2, 2);
    let r = minimize_functional(Functional::EpsH { eps: 0.3, h: 0.1 }, Integrand::Density(&w), &mesh, &Load::None, &opts());
    assert!(r.is_err());
}

#[test]
fn quad_value_matches_symmetric_part_for_projector() {
    let g = Mat::from_rows([[0.4, -1.0], [2.0, 0.1]]);
    assert!((quad_value(&SymTensor4::sym_projector(2), &g) - g.sym().norm_sq()).abs() < 1e-12);
}
