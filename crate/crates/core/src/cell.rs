//! Cell problems: the nonlinear k-cell relaxation W^(k)_hom(F), the linear
//! cell problem for Q¹_hom, and the bending ansatz used to seed buckled branches.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::{minimize_energy, pcg, Constraint, NonlinearEnergy, PhaseMap, QuadraticOperator};
use crate::density::{Density, PhaseMask, QuadraticField};
use crate::error::{Error, Result};
use crate::grid::{PeriodicField, PeriodicGrid, Q1Mesh};
use crate::lbfgs::{LbfgsOptions, Status};
use crate::tensor::{Mat, SymTensor4};

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Stopping tolerance: relative residual for CG, gradient norm (in units of
    /// max(1, initial gradient norm)) for the quasi-Newton solver.
    pub tol: f64,
    pub max_iter: usize,
    pub memory: usize,
    /// Worker threads for independent starts; results do not depend on it.
    pub threads: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol: 1e-8, max_iter: 5000, memory: 10, threads: 1 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CellResult {
    /// Cell-average energy (1/kⁿ)∫_{kY}.
    pub energy: f64,
    #[serde(skip)]
    pub corrector: PeriodicField,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub start_label: String,
    pub k: usize,
    pub res: usize,
    pub status: Status,
    /// Energy after every CG iteration (linear cell problems only).
    #[serde(skip)]
    pub energy_trace: Vec<f64>,
}

fn linear_cell_on_mesh(
    op: &QuadraticOperator,
    grid: PeriodicGrid,
    g: &Mat,
    opts: &SolverOptions,
) -> Result<CellResult> {
    let b = op.rhs_affine(g);
    let max_iter = opts.max_iter.max(10 * grid.dof_count());
    let out = pcg(op, &b, vec![0.0; grid.dof_count()], &Constraint::MeanZero, opts.tol, max_iter)?;
    if !out.converged {
        return Err(Error::NotConverged { max_iter, residual: out.relative_residual });
    }
    let energy = op.energy(&out.x, g);
    let e0 = op.energy(&vec![0.0; grid.dof_count()], g);
    let trace = out.energy_trace.iter().map(|v| e0 + v).collect();
    Ok(CellResult {
        energy,
        corrector: PeriodicField { grid, values: out.x },
        converged: true,
        iterations: out.iterations,
        grad_norm: out.relative_residual,
        start_label: "zero".into(),
        k: grid.k,
        res: grid.res,
        status: Status::Converged,
        energy_trace: trace,
    })
}

/// Minimizes (1/kⁿ)∫_{kY} Q(y, G + ∇φ) over mean-zero periodic φ by preconditioned CG.
pub fn solve_linear_cell(q: &QuadraticField, g: &Mat, grid: PeriodicGrid, opts: &SolverOptions) -> Result<CellResult> {
    check_dims(q.dim(), g, grid)?;
    let mesh = grid.mesh();
    let op = QuadraticOperator::new(&mesh, q, 1.0, 1.0 / grid.measure());
    linear_cell_on_mesh(&op, grid, g, opts)
}

fn check_dims(dim: usize, g: &Mat, grid: PeriodicGrid) -> Result<()> {
    if g.dim() != dim || grid.dim != dim {
        return Err(Error::InvalidParameter(format!(
            "dimension mismatch: field {dim}, matrix {}, grid {}",
            g.dim(),
            grid.dim
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct HomTensor {
    pub l_hom: SymTensor4,
    #[serde(skip)]
    pub correctors: Vec<PeriodicField>,
    /// Cell energies of the basis directions e_i⊗e_j, row-major.
    pub direction_energies: Vec<f64>,
}

impl HomTensor {
    pub fn value(&self, g: &Mat) -> f64 {
        crate::tensor::quad_value(&self.l_hom, g)
    }
}

/// 𝕃_hom with ⟨𝕃_hom A, B⟩ = avg ⟨𝕃(A + ∇φ_A), B + ∇φ_B⟩ over the n² basis directions.
pub fn homogenized_tensor(q: &QuadraticField, grid: PeriodicGrid, opts: &SolverOptions) -> Result<HomTensor> {
    let n = q.dim();
    let m = n * n;
    let mesh = grid.mesh();
    let op = QuadraticOperator::new(&mesh, q, 1.0, 1.0 / grid.measure());
    let basis: Vec<Mat> = (0..m).map(|a| Mat::unit(n, a / n, a % n)).collect();
    let mut results = Vec::with_capacity(m);
    for e in &basis {
        results.push(linear_cell_on_mesh(&op, grid, e, opts)?);
    }
    let grads: Vec<Vec<Mat>> = results.iter().map(|r| crate::grid::gradient_on_mesh(&mesh, &r.corrector.values)).collect();
    let mut rows = vec![vec![0.0; m]; m];
    let npe = mesh.npe;
    for a in 0..m {
        for b in a..m {
            let mut s = 0.0;
            for e in 0..mesh.element_count() {
                for qp in 0..npe {
                    let idx = e * npe + qp;
                    let l = &op.tensors[op.index[idx] as usize];
                    s += l.bilinear(&(basis[a] + grads[a][idx]), &(basis[b] + grads[b][idx]));
                }
            }
            let v = op.weight * s;
            rows[a][b] = v;
            rows[b][a] = v;
        }
    }
    for (a, r) in results.iter().enumerate() {
        rows[a][a] = r.energy;
    }
    let l_hom = SymTensor4::from_rows(n, &rows)?;
    Ok(HomTensor {
        l_hom,
        direction_energies: results.iter().map(|r| r.energy).collect(),
        correctors: results.into_iter().map(|r| r.corrector).collect(),
    })
}

/// A labeled initial corrector for the nonlinear cell problem.
#[derive(Clone, Debug)]
pub struct Start {
    pub label: String,
    pub field: PeriodicField,
}

#[derive(Clone, Debug, Default)]
pub struct StartSet {
    pub starts: Vec<Start>,
}

/// Which starts [`StartSet::standard`] generates.
#[derive(Clone, Debug)]
pub struct StartConfig {
    pub zero: bool,
    /// Adds the bending ansatz and its ± perturbations when F is a compression diag(1−δ, 1).
    pub bending: bool,
    pub random_fields: usize,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for StartConfig {
    fn default() -> Self {
        StartConfig { zero: true, bending: true, random_fields: 3, amplitude: 0.01, seed: 0 }
    }
}

/// δ with F = diag(1−δ, 1), if F has that form with 0 < δ < ½.
pub fn compression_delta(f: &Mat) -> Option<f64> {
    if f.dim() != 2 {
        return None;
    }
    let delta = 1.0 - f.get(0, 0);
    let offdiag = f.get(0, 1).abs() + f.get(1, 0).abs() + (f.get(1, 1) - 1.0).abs();
    (offdiag < 1e-14 && delta > 0.0 && delta < 0.5).then_some(delta)
}

/// Smooth kY-periodic random field: a few low Fourier modes scaled to max-norm `amplitude`.
pub fn random_smooth_field(grid: PeriodicGrid, amplitude: f64, rng: &mut ChaCha8Rng) -> PeriodicField {
    let n = grid.dim;
    let k = grid.k as f64;
    let mut modes = Vec::new();
    for comp in 0..n {
        for _ in 0..4 {
            let mut wave = [0.0; 3];
            loop {
                for w in wave.iter_mut().take(n) {
                    *w = rng.gen_range(-2i32..=2) as f64;
                }
                if wave.iter().any(|w| *w != 0.0) {
                    break;
                }
            }
            let coef: f64 = rng.gen_range(-1.0..1.0);
            let phase: f64 = rng.gen_range(0.0..2.0 * PI);
            modes.push((comp, wave, coef, phase));
        }
    }
    let mut f = PeriodicField::from_fn(grid, |y| {
        let mut v = [0.0; 3];
        for &(comp, wave, coef, phase) in &modes {
            let arg: f64 = (0..n).map(|d| wave[d] * y[d]).sum::<f64>() * 2.0 * PI / k + phase;
            v[comp] += coef * arg.sin();
        }
        v
    });
    let peak = f.max_abs();
    if peak > 0.0 {
        f.values.iter_mut().for_each(|v| *v *= amplitude / peak);
    }
    crate::grid::project_mean_zero(&f)
}

impl StartSet {
    pub fn zero(grid: PeriodicGrid) -> Self {
        StartSet { starts: vec![Start { label: "zero".into(), field: PeriodicField::zeros(grid) }] }
    }

    pub fn standard(grid: PeriodicGrid, f: &Mat, cfg: &StartConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (grid.k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut set = StartSet::default();
        if cfg.zero {
            set.push("zero", PeriodicField::zeros(grid));
        }
        if cfg.bending {
            if let Some(delta) = compression_delta(f) {
                let bend = bending_ansatz(delta, grid.k, grid)?;
                let noise = random_smooth_field(grid, cfg.amplitude, &mut rng);
                let mut plus = bend.clone();
                let mut minus = bend.clone();
                for ((p, m), r) in plus.values.iter_mut().zip(minus.values.iter_mut()).zip(&noise.values) {
                    *p += r;
                    *m -= r;
                }
                set.push("bending", bend);
                set.push("bending+noise", plus);
                set.push("bending-noise", minus);
            }
        }
        for i in 0..cfg.random_fields {
            let field = random_smooth_field(grid, cfg.amplitude, &mut rng);
            set.push(&format!("random{i}"), field);
        }
        Ok(set)
    }

    pub fn push(&mut self, label: &str, field: PeriodicField) {
        self.starts.push(Start { label: label.to_string(), field });
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }
}

/// The nonlinear cell energy φ ↦ (1/kⁿ)∫_{kY} W(y, F + ∇φ) restricted to `mask`.
pub fn cell_energy<'a>(density: &'a Density, f: &Mat, mesh: &'a Q1Mesh, grid: PeriodicGrid, mask: PhaseMask) -> NonlinearEnergy<'a> {
    let phases = PhaseMap::build(mesh, 1.0, |y| density.phase(y));
    NonlinearEnergy::new(density, mesh, phases, *f, 1.0, 1.0 / grid.measure(), mask, Constraint::MeanZero)
}

struct Attempt {
    energy: f64,
    x: Vec<f64>,
    iterations: usize,
    grad_norm: f64,
    status: Status,
}

fn run_start(energy: &NonlinearEnergy, x0: &[f64], opts: &SolverOptions, gtol: f64) -> Attempt {
    let lopts = LbfgsOptions { memory: opts.memory, max_iter: opts.max_iter, gtol, ..Default::default() };
    let mut x = x0.to_vec();
    energy.constraint.apply(&mut x, energy.mesh.dim);
    let r = minimize_energy(energy, x, &lopts);
    Attempt { energy: r.value, x: r.x, iterations: r.iterations, grad_norm: r.grad_norm, status: r.status }
}

/// Runs the quasi-Newton minimizer from every start and keeps the lowest energy.
pub fn solve_nonlinear_cell(
    w: &Density,
    f: &Mat,
    grid: PeriodicGrid,
    starts: &StartSet,
    opts: &SolverOptions,
) -> Result<CellResult> {
    solve_nonlinear_cell_masked(w, f, grid, starts, opts, PhaseMask::All)
}

pub fn solve_nonlinear_cell_masked(
    w: &Density,
    f: &Mat,
    grid: PeriodicGrid,
    starts: &StartSet,
    opts: &SolverOptions,
    mask: PhaseMask,
) -> Result<CellResult> {
    check_dims(w.dim, f, grid)?;
    if starts.is_empty() {
        return Err(Error::InvalidParameter("the start set is empty".into()));
    }
    for s in &starts.starts {
        if s.field.grid != grid {
            return Err(Error::InvalidParameter(format!("start '{}' lives on a different grid", s.label)));
        }
    }
    let mesh = grid.mesh();
    let energy = cell_energy(w, f, &mesh, grid, mask);
    let gtol = {
        let mut g = vec![0.0; grid.dof_count()];
        let zero = vec![0.0; grid.dof_count()];
        let g0 = match crate::lbfgs::Objective::eval(&energy, &zero, &mut g) {
            Some(_) => {
                energy.constraint.apply(&mut g, grid.dim);
                crate::lbfgs::Objective::grad_norm(&energy, &g)
            }
            None => 1.0,
        };
        opts.tol * g0.max(1.0)
    };
    let attempts = run_all(&energy, starts, opts, gtol);
    let mut best: Option<usize> = None;
    for (i, a) in attempts.iter().enumerate() {
        if !a.energy.is_finite() {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(b) if a.energy < attempts[b].energy - 1e-12 => best = Some(i),
            _ => {}
        }
    }
    let Some(i) = best else {
        return Err(Error::AllStartsFailed);
    };
    let a = &attempts[i];
    Ok(CellResult {
        energy: a.energy,
        corrector: PeriodicField { grid, values: a.x.clone() },
        converged: a.status == Status::Converged,
        iterations: a.iterations,
        grad_norm: a.grad_norm,
        start_label: starts.starts[i].label.clone(),
        k: grid.k,
        res: grid.res,
        status: a.status,
        energy_trace: Vec::new(),
    })
}

#[cfg(not(target_arch = "wasm32"))]
fn run_all(energy: &NonlinearEnergy, starts: &StartSet, opts: &SolverOptions, gtol: f64) -> Vec<Attempt> {
    let threads = opts.threads.max(1).min(starts.len());
    if threads <= 1 {
        return starts.starts.iter().map(|s| run_start(energy, &s.field.values, opts, gtol)).collect();
    }
    let mut slots: Vec<Option<Attempt>> = (0..starts.len()).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let done = std::sync::Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= starts.len() {
                    break;
                }
                let a = run_start(energy, &starts.starts[i].field.values, opts, gtol);
                done.lock().expect("worker panicked").push((i, a));
            });
        }
    });
    for (i, a) in done.into_inner().expect("worker panicked") {
        slots[i] = Some(a);
    }
    slots.into_iter().map(|s| s.expect("every start ran")).collect()
}

#[cfg(target_arch = "wasm32")]
fn run_all(energy: &NonlinearEnergy, starts: &StartSet, opts: &SolverOptions, gtol: f64) -> Vec<Attempt> {
    starts.starts.iter().map(|s| run_start(energy, &s.field.values, opts, gtol)).collect()
}

/// Amplitude A with ∫₀¹ cos(A sin 2πs) ds = 1 − δ.
fn bending_amplitude(delta: f64) -> f64 {
    let mean_cos = |a: f64| {
        let m = 256;
        (0..m).map(|i| (a * (2.0 * PI * i as f64 / m as f64).sin()).cos()).sum::<f64>() / m as f64
    };
    let (mut lo, mut hi) = (0.0, 2.404_825_557_695_773);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_cos(mid) > 1.0 - delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Inextensible unit-length curve v with tangent angle θ(s) = A sin(2πs),
/// v(0) = 0, v(1) = (1 − δ, 0).
pub struct BendingCurve {
    pub amplitude: f64,
}

impl BendingCurve {
    pub fn new(delta: f64) -> Self {
        BendingCurve { amplitude: bending_amplitude(delta) }
    }

    pub fn angle(&self, s: f64) -> f64 {
        self.amplitude * (2.0 * PI * s).sin()
    }

    /// Maximal curvature |θ′| of the curve.
    pub fn max_curvature(&self) -> f64 {
        2.0 * PI * self.amplitude
    }

    /// v(s) for s ∈ [0, 1] by composite Simpson quadrature.
    pub fn point(&self, s: f64) -> [f64; 2] {
        let m = 64;
        let h = s / m as f64;
        let mut acc = [0.0; 2];
        for i in 0..=m {
            let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let th = self.angle(i as f64 * h);
            acc[0] += w * th.cos();
            acc[1] += w * th.sin();
        }
        [acc[0] * h / 3.0, acc[1] * h / 3.0]
    }
}

/// Periodic corrector of the buckled deformation
/// u(y) = y₂e₂ + k v(y₁/k) + τ(y₂)(n(y₁/k) − e₂), with τ the distance of y₂ to
/// the nearest integer, so that F_δ y + φ(y) = u(y) on kY.
pub fn bending_ansatz(delta: f64, k: usize, grid: PeriodicGrid) -> Result<PeriodicField> {
    if grid.dim != 2 || !(0.0..0.5).contains(&delta) {
        return Err(Error::InvalidDelta(delta));
    }
    if grid.k != k {
        return Err(Error::InvalidParameter(format!("grid spans k={} but k={k} was requested", grid.k)));
    }
    if delta == 0.0 {
        return Ok(PeriodicField::zeros(grid));
    }
    let curve = BendingCurve::new(delta);
    let kf = k as f64;
    let field = PeriodicField::from_fn(grid, |y| {
        let s = y[0] / kf;
        let v = curve.point(s);
        let th = curve.angle(s);
        let normal = [-th.sin(), th.cos()];
        let frac = y[1] - y[1].floor();
        let tau = if frac < 0.5 { frac } else { 1.0 - frac };
        [
            kf * v[0] + tau * normal[0] - (1.0 - delta) * y[0],
            kf * v[1] + tau * (normal[1] - 1.0),
            0.0,
        ]
    });
    Ok(crate::grid::project_mean_zero(&field))
}

#[derive(Clone, Debug, Serialize)]
pub struct KhomPoint {
    pub k: usize,
    pub energy: f64,
    pub running_min: f64,
    pub converged: bool,
    pub start_label: String,
}

/// W^(k)_hom(F) over `k_list`; each k is additionally seeded with the periodic
/// extension of the best result at its divisors, so energies never increase
/// under refinement of the cell family.
pub fn khom_curve(
    w: &Density,
    f: &Mat,
    k_list: &[usize],
    res: usize,
    cfg: &StartConfig,
    opts: &SolverOptions,
) -> Result<(Vec<KhomPoint>, Vec<CellResult>)> {
    let mut points = Vec::new();
    let mut results: Vec<CellResult> = Vec::new();
    let mut running = f64::INFINITY;
    for &k in k_list {
        let grid = PeriodicGrid::new(w.dim, k, res)?;
        let mut starts = StartSet::standard(grid, f, cfg)?;
        for prev in &results {
            if k % prev.k == 0 && prev.k != k {
                starts.push(&format!("extended(k={})", prev.k), prev.corrector.tile_to(grid)?);
            }
        }
        let r = solve_nonlinear_cell(w, f, grid, &starts, opts)?;
        running = running.min(r.energy);
        points.push(KhomPoint { k, energy: r.energy, running_min: running, converged: r.converged, start_label: r.start_label.clone() });
        results.push(r);
    }
    Ok((points, results))
}
