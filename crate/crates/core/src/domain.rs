//! Boundary-value problems on a box Ω with g = 0 on γ: the four energies
//! I^{ε,h}, I^ε_lin, I^h_hom and I⁰, their diagram, the boundary seminorm
//! |F|_γ, and equi-coercivity probing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::{minimize_energy, pcg, Constraint, NonlinearEnergy, PhaseMap, PointEnergy, QuadraticOperator};
use crate::cell::{homogenized_tensor, SolverOptions};
use crate::density::{Density, PhaseMask, QuadraticField};
use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, Q1Mesh};
use crate::lbfgs::{dot, LbfgsOptions, Objective};
use crate::surrogate::{fit_surrogate, HomSurrogate};
use crate::tensor::{Mat, SymTensor4};

/// One face {x_axis = 0} or {x_axis = L_axis} of the box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Facet {
    pub axis: usize,
    pub at_end: bool,
}

/// Uniform Q1 mesh of the box Ω = Π[0, L_d] with `res` elements per unit length.
#[derive(Clone, Debug, Serialize)]
pub struct DomainMesh {
    pub dim: usize,
    pub lengths: [usize; 3],
    pub res: usize,
    pub gamma: Vec<Facet>,
}

impl DomainMesh {
    /// Unit square or cube with γ the face x₁ = 0.
    pub fn unit(dim: usize, res: usize) -> Result<Self> {
        DomainMesh::new(dim, [1, 1, 1], res, vec![Facet { axis: 0, at_end: false }])
    }

    pub fn new(dim: usize, lengths: [usize; 3], res: usize, gamma: Vec<Facet>) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidParameter(format!("dimension must be 2 or 3, got {dim}")));
        }
        if res == 0 || lengths.iter().take(dim).any(|&l| l == 0) {
            return Err(Error::InvalidParameter("box lengths and resolution must be positive".into()));
        }
        if gamma.is_empty() || gamma.iter().any(|f| f.axis >= dim) {
            return Err(Error::InvalidParameter("gamma must be a nonempty set of faces of the box".into()));
        }
        Ok(DomainMesh { dim, lengths, res, gamma })
    }

    pub fn nodes_along(&self, d: usize) -> usize {
        if d < self.dim {
            self.lengths[d] * self.res + 1
        } else {
            1
        }
    }

    pub fn node_count(&self) -> usize {
        (0..self.dim).map(|d| self.nodes_along(d)).product()
    }

    pub fn node_index(&self, idx: [usize; 3]) -> usize {
        let mut out = 0;
        for (d, &v) in idx.iter().enumerate().take(self.dim) {
            out = out * self.nodes_along(d) + v;
        }
        out
    }

    pub fn node_coords(&self, node: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        let mut rest = node;
        for d in (0..self.dim).rev() {
            let m = self.nodes_along(d);
            idx[d] = rest % m;
            rest /= m;
        }
        idx
    }

    pub fn node_position(&self, node: usize) -> [f64; 3] {
        let idx = self.node_coords(node);
        let h = 1.0 / self.res as f64;
        [idx[0] as f64 * h, idx[1] as f64 * h, idx[2] as f64 * h]
    }

    pub fn q1(&self) -> Q1Mesh {
        let elems = [self.lengths[0] * self.res, self.lengths[1] * self.res, self.lengths[2] * self.res];
        Q1Mesh::structured(self.dim, elems, 1.0 / self.res as f64, self.node_count(), |idx| self.node_index(idx))
    }

    pub fn on_gamma(&self, node: usize) -> bool {
        let idx = self.node_coords(node);
        self.gamma.iter().any(|f| {
            let last = self.nodes_along(f.axis) - 1;
            idx[f.axis] == if f.at_end { last } else { 0 }
        })
    }

    pub fn on_boundary(&self, node: usize) -> bool {
        let idx = self.node_coords(node);
        (0..self.dim).any(|d| idx[d] == 0 || idx[d] == self.nodes_along(d) - 1)
    }

    pub fn dof_count(&self) -> usize {
        self.node_count() * self.dim
    }
}

/// Loading that makes the minimal energies non-trivial.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Load {
    None,
    /// g(x) = Gx on ∂Ω∖γ; requires Gx = 0 on γ.
    AffineLift { g: Mat },
    /// Constant body force f entering as −∫ f·g.
    BodyForce { f: [f64; 3] },
}

impl Load {
    /// The default shear lift g(x) = 0.05·x₁e₂.
    pub fn default_lift(dim: usize) -> Self {
        Load::AffineLift { g: Mat::unit(dim, 1, 0) * 0.05 }
    }
}

/// Fixed-dof mask, initial field (boundary values filled in) and nodal load vector.
struct BoundarySetup {
    fixed: Vec<bool>,
    initial: Vec<f64>,
    load: Option<Vec<f64>>,
}

fn boundary_setup(mesh: &DomainMesh, load: &Load) -> Result<BoundarySetup> {
    let n = mesh.dim;
    let mut fixed = vec![false; mesh.dof_count()];
    let mut initial = vec![0.0; mesh.dof_count()];
    let mut nodal_load = None;
    match load {
        Load::None => {}
        Load::AffineLift { g } => {
            if g.dim() != n {
                return Err(Error::UnsupportedLoad("lift matrix has the wrong dimension".into()));
            }
            for node in 0..mesh.node_count() {
                if mesh.on_gamma(node) {
                    let x = mesh.node_position(node);
                    let gx = (0..n).map(|i| (0..n).map(|j| g.get(i, j) * x[j]).sum::<f64>()).fold(0.0f64, |a, v| a.max(v.abs()));
                    if gx > 1e-12 {
                        return Err(Error::UnsupportedLoad("the affine lift does not vanish on gamma".into()));
                    }
                }
            }
            for node in 0..mesh.node_count() {
                let x = mesh.node_position(node);
                for i in 0..n {
                    initial[node * n + i] = (0..n).map(|j| g.get(i, j) * x[j]).sum();
                }
            }
        }
        Load::BodyForce { f } => {
            let mut l = vec![0.0; mesh.dof_count()];
            let q = mesh.q1();
            let share = q.element_size.powi(n as i32) / q.npe as f64;
            for e in 0..q.element_count() {
                for &node in q.nodes(e) {
                    for i in 0..n {
                        l[node as usize * n + i] += share * f[i];
                    }
                }
            }
            nodal_load = Some(l);
        }
    }
    for node in 0..mesh.node_count() {
        let lifted = matches!(load, Load::AffineLift { .. }) && mesh.on_boundary(node);
        if mesh.on_gamma(node) || lifted {
            for i in 0..n {
                fixed[node * n + i] = true;
                if mesh.on_gamma(node) {
                    initial[node * n + i] = 0.0;
                }
            }
        }
    }
    if let Some(l) = nodal_load.as_mut() {
        for (v, &f) in l.iter_mut().zip(&fixed) {
            if f {
                *v = 0.0;
            }
        }
    }
    Ok(BoundarySetup { fixed, initial, load: nodal_load })
}

/// The four energies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Functional {
    /// (1/h²)∫ W(x/ε, Id + h∇g).
    EpsH { eps: f64, h: f64 },
    /// ∫ Q(x/ε, ∇g).
    LinEps { eps: f64 },
    /// (1/h²)∫ W_hom(Id + h∇g).
    HomH { h: f64 },
    /// ∫ Q_hom(∇g).
    Hom0,
}

/// The integrand matching a [`Functional`].
pub enum Integrand<'a> {
    Density(&'a Density),
    Quadratic(&'a QuadraticField),
    Surrogate(&'a HomSurrogate),
    HomTensor(&'a SymTensor4),
}

#[derive(Clone, Debug, Serialize)]
pub struct DomainSolution {
    pub energy: f64,
    #[serde(skip)]
    pub field: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest |h∇g| at quadrature points (nonlinear functionals only).
    pub max_strain: f64,
}

fn check_eps(mesh: &DomainMesh, eps: f64) -> Result<()> {
    let m = (1.0 / eps).round();
    if !(eps > 0.0) || ((1.0 / eps) - m).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("eps must be 1/m for an integer m, got {eps}")));
    }
    if mesh.res % (m as usize) != 0 {
        return Err(Error::InvalidParameter(format!("mesh resolution {} is not a multiple of 1/eps = {m}", mesh.res)));
    }
    Ok(())
}

fn max_grad(q: &Q1Mesh, u: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for e in 0..q.element_count() {
        for qp in 0..q.npe {
            m = m.max(q.grad_at(u, e, qp).norm());
        }
    }
    m
}

fn nonlinear<D: PointEnergy + ?Sized>(
    w: &D,
    eps: f64,
    h: f64,
    mesh: &DomainMesh,
    setup: BoundarySetup,
    opts: &SolverOptions,
) -> Result<DomainSolution> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("h must be positive, got {h}")));
    }
    let q = mesh.q1();
    let phases = PhaseMap::build(&q, eps, |y| w.phase_at(y));
    let mut energy = NonlinearEnergy::new(
        w,
        &q,
        phases,
        Mat::identity(mesh.dim),
        h,
        1.0 / (h * h),
        PhaseMask::All,
        Constraint::Fixed(setup.fixed),
    );
    energy.load = setup.load;
    let mut g = vec![0.0; mesh.dof_count()];
    let gtol = match energy.eval(&setup.initial, &mut g) {
        Some(_) => {
            energy.project(&mut g);
            opts.tol * energy.grad_norm(&g).max(1.0)
        }
        None => opts.tol,
    };
    let lopts = LbfgsOptions { memory: opts.memory, max_iter: opts.max_iter, gtol, ..Default::default() };
    let r = minimize_energy(&energy, setup.initial, &lopts);
    if !r.value.is_finite() {
        return Err(Error::NotConverged { max_iter: opts.max_iter, residual: r.grad_norm });
    }
    let max_strain = h * max_grad(&q, &r.x);
    let converged = r.converged();
    Ok(DomainSolution { energy: r.value, max_strain, field: r.x, converged, iterations: r.iterations })
}

fn quadratic(op: &QuadraticOperator, mesh: &DomainMesh, setup: BoundarySetup, opts: &SolverOptions) -> Result<DomainSolution> {
    let n = mesh.dim;
    let lift = setup.initial;
    let mut k_lift = vec![0.0; lift.len()];
    op.apply(&lift, &mut k_lift);
    let mut b: Vec<f64> = k_lift.iter().map(|v| -v).collect();
    if let Some(l) = &setup.load {
        for (bi, li) in b.iter_mut().zip(l) {
            *bi += li;
        }
    }
    let constraint = Constraint::Fixed(setup.fixed);
    let max_iter = opts.max_iter.max(10 * lift.len());
    let out = pcg(op, &b, vec![0.0; lift.len()], &constraint, opts.tol, max_iter)?;
    let field: Vec<f64> = lift.iter().zip(&out.x).map(|(a, b)| a + b).collect();
    let mut energy = op.energy(&field, &Mat::zeros(n));
    if let Some(l) = &setup.load {
        energy -= dot(l, &field);
    }
    Ok(DomainSolution { energy, field, converged: out.converged, iterations: out.iterations, max_strain: 0.0 })
}

/// Minimizes one of the four energies over fields vanishing on γ.
pub fn minimize_functional(
    which: Functional,
    integrand: Integrand,
    mesh: &DomainMesh,
    load: &Load,
    opts: &SolverOptions,
) -> Result<DomainSolution> {
    let setup = boundary_setup(mesh, load)?;
    let q = mesh.q1();
    match (which, integrand) {
        (Functional::EpsH { eps, h }, Integrand::Density(w)) => {
            check_eps(mesh, eps)?;
            nonlinear(w, eps, h, mesh, setup, opts)
        }
        (Functional::HomH { h }, Integrand::Surrogate(s)) => nonlinear(s, 1.0, h, mesh, setup, opts),
        (Functional::HomH { h }, Integrand::Density(w)) if w.microstructure.is_homogeneous() => {
            nonlinear(w, 1.0, h, mesh, setup, opts)
        }
        (Functional::LinEps { eps }, Integrand::Quadratic(field)) => {
            check_eps(mesh, eps)?;
            let op = QuadraticOperator::new(&q, field, eps, 1.0);
            quadratic(&op, mesh, setup, opts)
        }
        (Functional::Hom0, Integrand::HomTensor(l)) => {
            let op = QuadraticOperator::uniform(&q, l.clone(), 1.0);
            quadratic(&op, mesh, setup, opts)
        }
        _ => Err(Error::InvalidParameter("integrand does not match the requested functional".into())),
    }
}

/// Richardson extrapolation to parameter 0 assuming a first-order error.
pub fn richardson(x_prev: f64, e_prev: f64, x_last: f64, e_last: f64) -> f64 {
    e_last + (e_last - e_prev) * x_last / (x_prev - x_last)
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagramRow {
    pub path: String,
    pub eps: f64,
    pub h: f64,
    pub energy: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagramReport {
    pub rows: Vec<DiagramRow>,
    /// Limit along h → 0 then ε → 0 (from I^ε_lin).
    pub limit_13: f64,
    /// Limit along ε → 0 then h → 0 (from I^h_hom).
    pub limit_24: f64,
    /// Directly computed I⁰.
    pub i0: f64,
    pub defect: f64,
    pub relative_defect: f64,
    pub in_class: bool,
    pub surrogate: String,
}

impl DiagramReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,eps,h,energy,converged\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{:e},{}\n", r.path, r.eps, r.h, r.energy, r.converged));
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct DiagramSettings {
    pub eps_list: Vec<f64>,
    pub h_list: Vec<f64>,
    /// Elements per period ε of the microstructure.
    pub cell_res: usize,
    pub seed: u64,
}

/// Evaluates both paths of the linearization/homogenization diagram.
pub fn diagram_probe(
    w: &Density,
    load: &Load,
    settings: &DiagramSettings,
    opts: &SolverOptions,
) -> Result<DiagramReport> {
    if settings.eps_list.len() < 2 || settings.h_list.len() < 2 {
        return Err(Error::InvalidParameter("the diagram needs at least two values of eps and of h".into()));
    }
    let n = w.dim;
    let m_max = settings.eps_list.iter().map(|e| (1.0 / e).round() as usize).max().unwrap_or(1);
    let lcm = settings.eps_list.iter().map(|e| (1.0 / e).round() as usize).fold(1, lcm);
    let res = lcm.max(m_max) * settings.cell_res;
    let mesh = DomainMesh::unit(n, res)?;
    let (qfield, in_class) = match w.quadratic_term() {
        Ok(q) => (q, true),
        Err(_) => (w.hessian_field_at_identity(), false),
    };
    let cell_grid = PeriodicGrid::new(n, 1, settings.cell_res)?;
    let l_hom = homogenized_tensor(&qfield, cell_grid, opts)?.l_hom;
    let mut rows = Vec::new();

    let i0 = minimize_functional(Functional::Hom0, Integrand::HomTensor(&l_hom), &mesh, load, opts)?;
    rows.push(DiagramRow { path: "I0".into(), eps: 0.0, h: 0.0, energy: i0.energy, converged: i0.converged });

    let mut lin = Vec::new();
    for &eps in &settings.eps_list {
        let s = minimize_functional(Functional::LinEps { eps }, Integrand::Quadratic(&qfield), &mesh, load, opts)?;
        rows.push(DiagramRow { path: "I_lin_eps".into(), eps, h: 0.0, energy: s.energy, converged: s.converged });
        lin.push(s.energy);
    }
    for &eps in &settings.eps_list {
        for &h in &settings.h_list {
            let s = minimize_functional(Functional::EpsH { eps, h }, Integrand::Density(w), &mesh, load, opts)?;
            rows.push(DiagramRow { path: "I_eps_h".into(), eps, h, energy: s.energy, converged: s.converged });
        }
    }

    let surrogate = if w.microstructure.is_homogeneous() {
        HomSurrogate::Exact(w.clone())
    } else {
        let h_max = settings.h_list.iter().cloned().fold(0.0, f64::max);
        let radius = 3.0 * h_max * max_grad(&mesh.q1(), &i0.field).max(1e-3);
        HomSurrogate::Polynomial(fit_surrogate(w, in_class.then_some(&l_hom), radius, settings.cell_res, opts, settings.seed)?)
    };
    let mut hom = Vec::new();
    for &h in &settings.h_list {
        let mut s = minimize_functional(Functional::HomH { h }, Integrand::Surrogate(&surrogate), &mesh, load, opts)?;
        if s.max_strain > surrogate.radius() {
            let wider = fit_surrogate(w, in_class.then_some(&l_hom), 2.0 * s.max_strain, settings.cell_res, opts, settings.seed)?;
            s = minimize_functional(
                Functional::HomH { h },
                Integrand::Surrogate(&HomSurrogate::Polynomial(wider)),
                &mesh,
                load,
                opts,
            )?;
        }
        rows.push(DiagramRow { path: "I_h_hom".into(), eps: 0.0, h, energy: s.energy, converged: s.converged });
        hom.push(s.energy);
    }

    let ne = settings.eps_list.len();
    let nh = settings.h_list.len();
    let limit_13 = richardson(settings.eps_list[ne - 2], lin[ne - 2], settings.eps_list[ne - 1], lin[ne - 1]);
    let limit_24 = richardson(settings.h_list[nh - 2], hom[nh - 2], settings.h_list[nh - 1], hom[nh - 1]);
    let defect = (limit_13 - limit_24).abs();
    let scale = i0.energy.abs().max(limit_13.abs()).max(1e-300);
    let surrogate_label = match &surrogate {
        HomSurrogate::Exact(_) => "exact density".to_string(),
        HomSurrogate::Polynomial(p) => format!("polynomial fit from {} one-cell solves", p.sample_count),
    };
    Ok(DiagramReport {
        rows,
        limit_13,
        limit_24,
        i0: i0.energy,
        defect,
        relative_defect: defect / scale,
        in_class,
        surrogate: surrogate_label,
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// min_b ∫_γ |Fx − b|² by two-point Gauss quadrature on the facets of γ.
pub fn gamma_seminorm(f: &Mat, mesh: &DomainMesh) -> f64 {
    let n = mesh.dim;
    let g = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
    let h = 1.0 / mesh.res as f64;
    let mut points: Vec<([f64; 3], f64)> = Vec::new();
    for facet in &mesh.gamma {
        let others: Vec<usize> = (0..n).filter(|&d| d != facet.axis).collect();
        let fixed = if facet.at_end { mesh.lengths[facet.axis] as f64 } else { 0.0 };
        let counts: Vec<usize> = others.iter().map(|&d| mesh.lengths[d] * mesh.res).collect();
        let cells: usize = counts.iter().product();
        let w = h.powi(n as i32 - 1) / (1 << (n - 1)) as f64;
        for c in 0..cells {
            let mut rest = c;
            let mut cell_idx = vec![0; others.len()];
            for (slot, &cnt) in cell_idx.iter_mut().zip(&counts) {
                *slot = rest % cnt;
                rest /= cnt;
            }
            for gp in 0..(1 << (n - 1)) {
                let mut x = [0.0; 3];
                x[facet.axis] = fixed;
                for (j, &d) in others.iter().enumerate() {
                    x[d] = (cell_idx[j] as f64 + g[(gp >> j) & 1]) * h;
                }
                points.push((x, w));
            }
        }
    }
    let image = |x: &[f64; 3]| {
        let mut y = [0.0; 3];
        for i in 0..n {
            y[i] = (0..n).map(|j| f.get(i, j) * x[j]).sum();
        }
        y
    };
    let total: f64 = points.iter().map(|p| p.1).sum();
    let mut mean = [0.0; 3];
    for (x, w) in &points {
        let y = image(x);
        for i in 0..n {
            mean[i] += w * y[i] / total;
        }
    }
    points
        .iter()
        .map(|(x, w)| {
            let y = image(x);
            w * (0..n).map(|i| (y[i] - mean[i]).powi(2)).sum::<f64>()
        })
        .sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct CoercivityReport {
    pub h_list: Vec<f64>,
    /// inf over samples of I^{ε,h}(g)/‖g‖²_{W^{1,2}}, per h.
    pub ratios: Vec<f64>,
    pub c1: f64,
}

/// Samples smooth g with g = 0 on γ and reports inf I^{ε,h}(g)/‖g‖²_{W^{1,2}} for each h.
pub fn equicoercivity_probe(
    w: &Density,
    mesh: &DomainMesh,
    eps: f64,
    h_list: &[f64],
    sample_fields: usize,
    seed: u64,
) -> Result<CoercivityReport> {
    check_eps(mesh, eps)?;
    let n = mesh.dim;
    let q = mesh.q1();
    let phases = PhaseMap::build(&q, eps, |y| w.phase(y));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lengths = mesh.lengths;
    let axis = mesh.gamma[0].axis;
    let fields: Vec<Vec<f64>> = (0..sample_fields.max(1))
        .map(|_| {
            let modes: Vec<([f64; 3], usize, f64)> = (0..4)
                .map(|_| {
                    let mut wave = [0.0; 3];
                    for v in wave.iter_mut().take(n) {
                        *v = rng.gen_range(0..3) as f64;
                    }
                    (wave, rng.gen_range(0..n), rng.gen_range(-1.0..1.0))
                })
                .collect();
            let mut u = vec![0.0; mesh.dof_count()];
            for node in 0..mesh.node_count() {
                if mesh.on_gamma(node) {
                    continue;
                }
                let x = mesh.node_position(node);
                let mut dist: f64 = f64::INFINITY;
                for f in &mesh.gamma {
                    let d = if f.at_end { lengths[f.axis] as f64 - x[f.axis] } else { x[f.axis] };
                    dist = dist.min(d);
                }
                for &(wave, comp, c) in &modes {
                    let arg: f64 = (0..n).map(|d| wave[d] * x[d] * std::f64::consts::PI).sum();
                    u[node * n + comp] += c * dist * arg.cos();
                }
            }
            let _ = axis;
            u
        })
        .collect();
    let mut ratios = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let energy = NonlinearEnergy::new(
            w,
            &q,
            phases.clone(),
            Mat::identity(n),
            h,
            1.0 / (h * h),
            PhaseMask::All,
            Constraint::MeanZero,
        );
        let mut worst = f64::INFINITY;
        for u in &fields {
            let e = energy.value(u).unwrap_or(f64::INFINITY);
            let grads = crate::grid::gradient_on_mesh(&q, u);
            let wq = q.quad_weight();
            let grad_sq: f64 = grads.iter().map(|m| m.norm_sq()).sum::<f64>() * wq;
            let mut val_sq = 0.0;
            for e in 0..q.element_count() {
                for qp in 0..q.npe {
                    let xi = q.shape.point(qp);
                    let mut v = [0.0; 3];
                    for (c, &node) in q.nodes(e).iter().enumerate() {
                        let s = q.shape.value_at(c, xi);
                        for i in 0..n {
                            v[i] += s * u[node as usize * n + i];
                        }
                    }
                    val_sq += wq * v.iter().map(|x| x * x).sum::<f64>();
                }
            }
            let norm = grad_sq + val_sq;
            if norm > 0.0 {
                worst = worst.min(e / norm);
            }
        }
        ratios.push(worst);
    }
    let c1 = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(CoercivityReport { h_list: h_list.to_vec(), ratios, c1 })
}
