//! Element-loop assembly of nonlinear energies and quadratic forms on Q1
//! meshes, and the preconditioned conjugate-gradient solver.

use crate::density::{Density, Phase, PhaseMask, QuadraticField};
use crate::error::{Error, Result};
use crate::grid::Q1Mesh;
use crate::lbfgs::{dot, minimize, LbfgsOptions, LbfgsResult, Objective};
use crate::tensor::{quad_value, Mat, SymTensor4};

/// Rejection threshold on det F at quadrature points for dist²-based densities.
pub const DET_FLOOR: f64 = 1e-8;

/// Constraint applied to the unknowns of a minimization.
#[derive(Clone, Debug)]
pub enum Constraint {
    /// Periodic problem: each displacement component has zero mean.
    MeanZero,
    /// Dirichlet problem: listed dofs keep their initial values.
    Fixed(Vec<bool>),
}

impl Constraint {
    pub fn apply(&self, v: &mut [f64], dim: usize) {
        match self {
            Constraint::MeanZero => crate::grid::project_mean_zero_in_place(v, dim),
            Constraint::Fixed(mask) => {
                for (x, &fixed) in v.iter_mut().zip(mask) {
                    if fixed {
                        *x = 0.0;
                    }
                }
            }
        }
    }

    fn free_count(&self, total: usize) -> usize {
        match self {
            Constraint::MeanZero => total,
            Constraint::Fixed(mask) => mask.iter().filter(|f| !**f).count(),
        }
    }
}

/// Per-quadrature-point phase lookup, deduplicated.
#[derive(Clone, Debug)]
pub struct PhaseMap {
    pub phases: Vec<Phase>,
    pub index: Vec<u8>,
}

impl PhaseMap {
    /// Phases at y = position/ε for every quadrature point of `mesh`.
    pub fn build(mesh: &Q1Mesh, eps: f64, phase_of: impl Fn(&[f64]) -> Phase) -> Self {
        let mut phases: Vec<Phase> = Vec::new();
        let mut index = Vec::with_capacity(mesh.quad_count());
        for e in 0..mesh.element_count() {
            for q in 0..mesh.npe {
                let x = mesh.quad_position(e, q);
                let y = [x[0] / eps, x[1] / eps, x[2] / eps];
                let ph = phase_of(&y[..mesh.dim]);
                let id = match phases.iter().position(|p| *p == ph) {
                    Some(i) => i,
                    None => {
                        phases.push(ph);
                        phases.len() - 1
                    }
                };
                index.push(id as u8);
            }
        }
        PhaseMap { phases, index }
    }

    #[inline]
    pub fn at(&self, e: usize, q: usize, npe: usize) -> Phase {
        self.phases[self.index[e * npe + q] as usize]
    }
}

/// A pointwise stored-energy function with a phase lookup.
pub trait PointEnergy: Sync {
    fn phase_at(&self, y: &[f64]) -> Phase;
    fn value_and_grad(&self, phase: Phase, f: &Mat) -> (f64, Mat);
    /// True if states with det F ≤ [`DET_FLOOR`] must be rejected.
    fn needs_orientation(&self) -> bool;
}

impl PointEnergy for Density {
    fn phase_at(&self, y: &[f64]) -> Phase {
        self.phase(y)
    }

    #[inline]
    fn value_and_grad(&self, phase: Phase, f: &Mat) -> (f64, Mat) {
        self.eval_and_grad_phase(phase, f)
    }

    fn needs_orientation(&self) -> bool {
        Density::needs_orientation(self)
    }
}

/// E(u) = c·Σ_q w_q W(y_q, F₀ + s∇u(x_q)) − ℓ·u restricted to the phases admitted by `mask`.
pub struct NonlinearEnergy<'a, D: PointEnergy + ?Sized = Density> {
    pub density: &'a D,
    pub mesh: &'a Q1Mesh,
    pub phases: PhaseMap,
    pub base: Mat,
    pub displacement_scale: f64,
    pub energy_scale: f64,
    pub mask: PhaseMask,
    pub constraint: Constraint,
    /// Treats states with det F ≤ [`DET_FLOOR`] at an admitted quadrature point as infeasible.
    pub enforce_orientation: bool,
    /// Nodal load vector ℓ of a body force.
    pub load: Option<Vec<f64>>,
    active: Vec<u32>,
}

impl<'a, D: PointEnergy + ?Sized> NonlinearEnergy<'a, D> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        density: &'a D,
        mesh: &'a Q1Mesh,
        phases: PhaseMap,
        base: Mat,
        displacement_scale: f64,
        energy_scale: f64,
        mask: PhaseMask,
        constraint: Constraint,
    ) -> Self {
        let npe = mesh.npe;
        let active = (0..mesh.element_count())
            .filter(|&e| (0..npe).any(|q| mask.admits(phases.at(e, q, npe))))
            .map(|e| e as u32)
            .collect();
        let enforce_orientation = density.needs_orientation();
        NonlinearEnergy {
            density,
            mesh,
            phases,
            base,
            displacement_scale,
            energy_scale,
            mask,
            constraint,
            enforce_orientation,
            load: None,
            active,
        }
    }

    pub fn value(&self, u: &[f64]) -> Option<f64> {
        let mut g = vec![0.0; u.len()];
        self.eval(u, &mut g)
    }

    /// Energy and unprojected gradient; `None` if `check_det` and some
    /// admitted quadrature point has det F ≤ [`DET_FLOOR`].
    fn eval_raw(&self, u: &[f64], grad: &mut [f64], check_det: bool) -> Option<f64> {
        grad.iter_mut().for_each(|v| *v = 0.0);
        let mesh = self.mesh;
        let npe = mesh.npe;
        let w = mesh.quad_weight();
        let s = self.displacement_scale;
        let mut total = 0.0;
        for &e in &self.active {
            let e = e as usize;
            let mut elem = 0.0;
            for q in 0..npe {
                let phase = self.phases.at(e, q, npe);
                if !self.mask.admits(phase) {
                    continue;
                }
                let f = self.base + mesh.grad_at(u, e, q) * s;
                if check_det && f.det() <= DET_FLOOR {
                    return None;
                }
                let (val, p) = self.density.value_and_grad(phase, &f);
                elem += val;
                mesh.scatter(grad, e, q, &p, self.energy_scale * w * s);
            }
            total += elem;
        }
        let mut value = self.energy_scale * w * total;
        if let Some(load) = &self.load {
            value -= dot(load, u);
            for (g, l) in grad.iter_mut().zip(load) {
                *g -= l;
            }
        }
        Some(value)
    }

    /// Smallest det F over admitted quadrature points.
    pub fn min_det(&self, u: &[f64]) -> f64 {
        let npe = self.mesh.npe;
        let mut m = f64::INFINITY;
        for &e in &self.active {
            let e = e as usize;
            for q in 0..npe {
                if self.mask.admits(self.phases.at(e, q, npe)) {
                    let f = self.base + self.mesh.grad_at(u, e, q) * self.displacement_scale;
                    m = m.min(f.det());
                }
            }
        }
        m
    }

    fn grad_normalizer(&self) -> f64 {
        let h = self.mesh.element_size;
        let free_nodes = self.constraint.free_count(self.mesh.node_count * self.mesh.dim) as f64 / self.mesh.dim as f64;
        self.energy_scale * self.displacement_scale * h.powi(self.mesh.dim as i32) * free_nodes.max(1.0).sqrt()
    }
}

impl<D: PointEnergy + ?Sized> Objective for NonlinearEnergy<'_, D> {
    fn dim(&self) -> usize {
        self.mesh.node_count * self.mesh.dim
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        self.eval_raw(x, grad, self.enforce_orientation)
    }

    fn grad_norm(&self, grad: &[f64]) -> f64 {
        dot(grad, grad).sqrt() / self.grad_normalizer()
    }

    fn project(&self, v: &mut [f64]) {
        self.constraint.apply(v, self.mesh.dim);
    }
}

/// The same energy without the orientation test.
struct Unfenced<'b, 'a, D: PointEnergy + ?Sized>(&'b NonlinearEnergy<'a, D>);

impl<D: PointEnergy + ?Sized> Objective for Unfenced<'_, '_, D> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        self.0.eval_raw(x, grad, false)
    }

    fn grad_norm(&self, grad: &[f64]) -> f64 {
        self.0.grad_norm(grad)
    }

    fn project(&self, v: &mut [f64]) {
        self.0.project(v)
    }
}

/// Minimizes a nonlinear energy. With the orientation test active, the
/// minimizer first relaxes without it; if that state is orientation
/// preserving it is polished under the test, otherwise the constrained run
/// restarts from `x0`. Only states passing the test are returned.
pub fn minimize_energy<D: PointEnergy + ?Sized>(energy: &NonlinearEnergy<D>, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsResult {
    if !energy.enforce_orientation {
        return minimize(energy, x0, opts);
    }
    let free = minimize(&Unfenced(energy), x0.clone(), opts);
    if free.value.is_finite() && energy.min_det(&free.x) > DET_FLOOR {
        let used = free.iterations;
        let mut polished = minimize(energy, free.x, opts);
        polished.iterations += used;
        polished.evaluations += free.evaluations;
        return polished;
    }
    let mut fenced = minimize(energy, x0, opts);
    fenced.iterations += free.iterations;
    fenced.evaluations += free.evaluations;
    fenced
}

/// The quadratic form u ↦ Σ_q w_q ⟨𝕃(y_q)(A + ∇u), A + ∇u⟩ and its
/// matrix-free stiffness operator.
pub struct QuadraticOperator<'a> {
    pub mesh: &'a Q1Mesh,
    pub tensors: Vec<SymTensor4>,
    pub index: Vec<u8>,
    pub weight: f64,
}

impl<'a> QuadraticOperator<'a> {
    /// Samples `field` at y = position/ε; `weight` multiplies every quadrature weight.
    pub fn new(mesh: &'a Q1Mesh, field: &QuadraticField, eps: f64, weight: f64) -> Self {
        let micro = field.microstructure();
        let map = PhaseMap::build(mesh, eps, |y| micro.phase(y));
        let tensors = map.phases.iter().map(|&p| field.tensor_for_phase(p)).collect();
        QuadraticOperator { mesh, tensors, index: map.index, weight: weight * mesh.quad_weight() }
    }

    pub fn uniform(mesh: &'a Q1Mesh, l: SymTensor4, weight: f64) -> Self {
        QuadraticOperator { mesh, tensors: vec![l], index: vec![0; mesh.quad_count()], weight: weight * mesh.quad_weight() }
    }

    #[inline]
    fn tensor(&self, e: usize, q: usize) -> &SymTensor4 {
        &self.tensors[self.index[e * self.mesh.npe + q] as usize]
    }

    /// K u.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let npe = self.mesh.npe;
        for e in 0..self.mesh.element_count() {
            for q in 0..npe {
                let sigma = self.tensor(e, q).apply(&self.mesh.grad_at(u, e, q));
                self.mesh.scatter(out, e, q, &sigma, 2.0 * self.weight);
            }
        }
    }

    /// −∂/∂u of the form at u = 0 with constant affine part A.
    pub fn rhs_affine(&self, a: &Mat) -> Vec<f64> {
        let mut b = vec![0.0; self.mesh.node_count * self.mesh.dim];
        let npe = self.mesh.npe;
        for e in 0..self.mesh.element_count() {
            for q in 0..npe {
                let sigma = self.tensor(e, q).apply(a);
                self.mesh.scatter(&mut b, e, q, &sigma, -2.0 * self.weight);
            }
        }
        b
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.mesh.dim;
        let mut d = vec![0.0; self.mesh.node_count * n];
        let npe = self.mesh.npe;
        for e in 0..self.mesh.element_count() {
            let nodes = self.mesh.nodes(e);
            for q in 0..npe {
                let l = self.tensor(e, q);
                for (c, &node) in nodes.iter().enumerate() {
                    let b = self.mesh.shape.grad(q, c);
                    for i in 0..n {
                        let mut s = 0.0;
                        for j in 0..n {
                            for m in 0..n {
                                s += l.entry(i * n + j, i * n + m) * b[j] * b[m];
                            }
                        }
                        d[node as usize * n + i] += 2.0 * self.weight * s;
                    }
                }
            }
        }
        d
    }

    /// Σ_q w ⟨𝕃(A + ∇u), A + ∇u⟩.
    pub fn energy(&self, u: &[f64], a: &Mat) -> f64 {
        let npe = self.mesh.npe;
        let mut total = 0.0;
        for e in 0..self.mesh.element_count() {
            for q in 0..npe {
                total += quad_value(self.tensor(e, q), &(*a + self.mesh.grad_at(u, e, q)));
            }
        }
        self.weight * total
    }
}

#[derive(Clone, Debug)]
pub struct PcgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
    /// Value of ½xᵀKx − bᵀx after each iteration.
    pub energy_trace: Vec<f64>,
}

/// Jacobi-preconditioned CG for K x = b on the subspace selected by `constraint`.
pub fn pcg(
    op: &QuadraticOperator,
    b: &[f64],
    x0: Vec<f64>,
    constraint: &Constraint,
    tol: f64,
    max_iter: usize,
) -> Result<PcgOutcome> {
    let n = b.len();
    let dim = op.mesh.dim;
    let diag = op.diagonal();
    let dmax = diag.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let inv: Vec<f64> = diag.iter().map(|&d| if d > 1e-14 * dmax { 1.0 / d } else { 0.0 }).collect();
    let mut b = b.to_vec();
    constraint.apply(&mut b, dim);
    let bnorm = dot(&b, &b).sqrt();
    let mut x = x0;
    let mut kx = vec![0.0; n];
    op.apply(&x, &mut kx);
    let mut r: Vec<f64> = b.iter().zip(&kx).map(|(bi, ki)| bi - ki).collect();
    constraint.apply(&mut r, dim);
    let quad = |x: &[f64], r: &[f64]| -0.5 * b.iter().zip(r).zip(x).map(|((bi, ri), xi)| (bi + ri) * xi).sum::<f64>();
    let mut trace = vec![quad(&x, &r)];
    if bnorm == 0.0 {
        return Ok(PcgOutcome { x, iterations: 0, relative_residual: 0.0, converged: true, energy_trace: trace });
    }
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    let precondition = |r: &[f64]| {
        let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
        constraint.apply(&mut z, dim);
        z
    };
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut kp = vec![0.0; n];
    let mut iterations = 0;
    while rel > tol && iterations < max_iter {
        op.apply(&p, &mut kp);
        constraint.apply(&mut kp, dim);
        let pkp = dot(&p, &kp);
        let pp = dot(&p, &p);
        if pkp < -1e-12 * dmax * pp {
            return Err(Error::IndefiniteForm(pkp / pp));
        }
        if pkp <= 0.0 {
            break;
        }
        let alpha = rz / pkp;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        iterations += 1;
        rel = dot(&r, &r).sqrt() / bnorm;
        trace.push(quad(&x, &r));
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(PcgOutcome { x, iterations, relative_residual: rel, converged: rel <= tol, energy_trace: trace })
}
