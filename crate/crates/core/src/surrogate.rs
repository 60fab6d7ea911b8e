//! Callable stand-ins for the homogenized density W_hom(F) near the identity,
//! built from one-cell solves.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::assembly::PointEnergy;
use crate::cell::{solve_nonlinear_cell, SolverOptions, StartSet};
use crate::density::{Density, Phase};
use crate::error::Result;
use crate::grid::PeriodicGrid;
use crate::linalg::least_squares;
use crate::tensor::{quad_value, Mat, SymTensor4};

/// Monomials in the n² entries of H = F − Id, each a sorted list of entry indices.
fn monomials(m: usize, degree: usize) -> Vec<Vec<usize>> {
    fn rec(m: usize, degree: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == degree {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(m, degree, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, degree, 0, &mut Vec::new(), &mut out);
    out
}

/// W_hom(Id + H) ≈ Q_hom(H) + Σ c_α H^α, or a full polynomial when no
/// quadratic part is known.
#[derive(Clone, Debug, Serialize)]
pub struct PolySurrogate {
    pub dim: usize,
    pub quadratic: Option<SymTensor4>,
    pub monomials: Vec<Vec<usize>>,
    pub coefficients: Vec<f64>,
    /// Largest |H| among the fitting samples.
    pub radius: f64,
    pub sample_count: usize,
    pub fit_residual: f64,
}

impl PolySurrogate {
    pub fn value_and_grad(&self, f: &Mat) -> (f64, Mat) {
        let n = self.dim;
        let h = *f - Mat::identity(n);
        let mut value = 0.0;
        let mut grad = Mat::zeros(n);
        if let Some(l) = &self.quadratic {
            value += quad_value(l, &h);
            grad += l.apply(&h) * 2.0;
        }
        let flat: Vec<f64> = (0..n * n).map(|a| h.flat(a)).collect();
        for (mono, &c) in self.monomials.iter().zip(&self.coefficients) {
            if c == 0.0 {
                continue;
            }
            value += c * mono.iter().map(|&i| flat[i]).product::<f64>();
            for (pos, &j) in mono.iter().enumerate() {
                let mut d = c;
                for (p2, &i) in mono.iter().enumerate() {
                    if p2 != pos {
                        d *= flat[i];
                    }
                }
                grad.set_flat(j, grad.flat(j) + d);
            }
        }
        (value, grad)
    }
}

/// The integrand used for the homogenized functionals.
#[derive(Clone, Debug)]
pub enum HomSurrogate {
    /// W_hom = W for densities without microstructure.
    Exact(Density),
    Polynomial(PolySurrogate),
}

impl HomSurrogate {
    pub fn eval(&self, f: &Mat) -> f64 {
        self.value_and_grad(Phase::Scaled(1.0), f).0
    }

    pub fn radius(&self) -> f64 {
        match self {
            HomSurrogate::Exact(_) => f64::INFINITY,
            HomSurrogate::Polynomial(p) => p.radius,
        }
    }
}

impl PointEnergy for HomSurrogate {
    fn phase_at(&self, _y: &[f64]) -> Phase {
        Phase::Scaled(1.0)
    }

    fn value_and_grad(&self, _phase: Phase, f: &Mat) -> (f64, Mat) {
        match self {
            HomSurrogate::Exact(d) => d.base.energy_and_gradient(f),
            HomSurrogate::Polynomial(p) => p.value_and_grad(f),
        }
    }

    fn needs_orientation(&self) -> bool {
        match self {
            HomSurrogate::Exact(d) => d.needs_orientation(),
            HomSurrogate::Polynomial(_) => false,
        }
    }
}

/// Fits a polynomial surrogate of W¹_hom on the ball |H| ≤ `radius` from
/// one-cell solves at resolution `res`. `quadratic` is the homogenized tensor
/// when the density has a quadratic expansion at the identity.
pub fn fit_surrogate(
    w: &Density,
    quadratic: Option<&SymTensor4>,
    radius: f64,
    res: usize,
    opts: &SolverOptions,
    seed: u64,
) -> Result<PolySurrogate> {
    let n = w.dim;
    let m = n * n;
    let degrees: Vec<usize> = match (quadratic.is_some(), n) {
        (true, 2) => vec![3, 4],
        (true, _) => vec![3],
        (false, _) => vec![0, 1, 2],
    };
    let monos: Vec<Vec<usize>> = degrees.iter().flat_map(|&d| monomials(m, d)).collect();
    let fractions = [0.25, 0.5, 0.75, 1.0];
    // Along a ray the degrees separate, so each homogeneous part needs its own
    // set of directions in general position.
    let widest = degrees.iter().map(|&d| monomials(m, d).len()).max().unwrap_or(1);
    let directions = (3 * widest).div_ceil(2).max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = PeriodicGrid::new(n, 1, res)?;
    let starts = StartSet::zero(grid);
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for _ in 0..directions {
        let mut d = Mat::zeros(n);
        for a in 0..m {
            d.set_flat(a, StandardNormal.sample(&mut rng));
        }
        d = d * (1.0 / d.norm());
        for &fr in &fractions {
            let h = d * (fr * radius);
            let f = Mat::identity(n) + h;
            let cell = solve_nonlinear_cell(w, &f, grid, &starts, opts)?;
            let base = quadratic.map_or(0.0, |l| quad_value(l, &h));
            let flat: Vec<f64> = (0..m).map(|a| h.flat(a)).collect();
            rows.push(monos.iter().map(|mono| mono.iter().map(|&i| flat[i]).product::<f64>()).collect::<Vec<f64>>());
            targets.push(cell.energy - base);
        }
    }
    let fit = least_squares(&rows, &targets)?;
    Ok(PolySurrogate {
        dim: n,
        quadratic: quadratic.cloned(),
        monomials: monos,
        coefficients: fit.coefficients,
        radius,
        sample_count: targets.len(),
        fit_residual: fit.residual_norm,
    })
}
