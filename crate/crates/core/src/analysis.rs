//! Expansion residuals at the identity, the commutativity condition (C_G),
//! the layered-composite counterexample and the splitting identity of the
//! prestressed composite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assembly::PhaseMap;
use crate::cell::{homogenized_tensor, khom_curve, solve_nonlinear_cell, solve_nonlinear_cell_masked, KhomPoint, SolverOptions, StartConfig, StartSet};
use crate::density::{BaseKind, Density, Microstructure, Phase, PhaseMask, QuadraticField};
use crate::error::{Error, Result};
use crate::grid::PeriodicGrid;
use crate::linalg::least_squares;
use crate::tensor::Mat;

const VALIDATION_SAMPLES: usize = 200;

fn check_h_list(h_list: &[f64]) -> Result<()> {
    if h_list.is_empty() || h_list.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::InvalidParameter("perturbation sizes must be positive".into()));
    }
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("perturbation sizes must be strictly decreasing".into()));
    }
    Ok(())
}

/// ½D²W(·, Id), or for densities outside the quadratic class the same Hessian
/// taken as a formal stand-in.
fn expansion_field(w: &Density) -> (QuadraticField, bool) {
    match w.quadratic_term() {
        Ok(q) => (q, true),
        Err(_) => (w.hessian_field_at_identity(), false),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpansionReport {
    pub density: String,
    pub g: Mat,
    pub k: usize,
    pub res: usize,
    pub h_list: Vec<f64>,
    pub khom_values: Vec<f64>,
    pub converged: Vec<bool>,
    pub qhom_value: f64,
    pub residuals: Vec<f64>,
    /// R(h_{i+1}) / R(h_i).
    pub decay_ratios: Vec<f64>,
    /// W^(k)_hom(Id + hG)/h² − Q¹_hom(G).
    pub upper_slack: Vec<f64>,
    pub in_class: bool,
}

impl ExpansionReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,k,energy,residual\n");
        for i in 0..self.h_list.len() {
            s.push_str(&format!("{},{},{:e},{:e}\n", self.h_list[i], self.k, self.khom_values[i], self.residuals[i]));
        }
        s
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.residuals.windows(2).all(|w| w[1] < w[0])
    }
}

/// R(h) = |W^(k)_hom(Id + hG) − h²Q¹_hom(G)|/h² for each h. G is rescaled to unit norm.
pub fn expansion_residuals(
    w: &Density,
    g: &Mat,
    k: usize,
    h_list: &[f64],
    res: usize,
    opts: &SolverOptions,
) -> Result<ExpansionReport> {
    check_h_list(h_list)?;
    let norm = g.norm();
    if !(norm > 0.0) || g.dim() != w.dim {
        return Err(Error::InvalidParameter("the direction G must be a nonzero matrix of the density's dimension".into()));
    }
    let g = *g * (1.0 / norm);
    let in_class = validate_class_quiet(w);
    let (qfield, _) = expansion_field(w);
    let l_hom = homogenized_tensor(&qfield, PeriodicGrid::new(w.dim, 1, res)?, opts)?;
    let qhom_value = l_hom.value(&g);
    let grid = PeriodicGrid::new(w.dim, k, res)?;
    let mut khom_values = Vec::new();
    let mut converged = Vec::new();
    let mut previous: Option<crate::grid::PeriodicField> = None;
    for &h in h_list {
        let f = Mat::identity(w.dim) + g * h;
        let mut starts = StartSet::zero(grid);
        if let Some(prev) = &previous {
            starts.push("continued", prev.clone());
        }
        let r = solve_nonlinear_cell(w, &f, grid, &starts, opts)?;
        khom_values.push(r.energy);
        converged.push(r.converged);
        previous = Some(r.corrector);
    }
    let residuals: Vec<f64> = h_list.iter().zip(&khom_values).map(|(h, e)| (e - h * h * qhom_value).abs() / (h * h)).collect();
    let decay_ratios = residuals.windows(2).map(|w| w[1] / w[0]).collect();
    let upper_slack = h_list.iter().zip(&khom_values).map(|(h, e)| e / (h * h) - qhom_value).collect();
    Ok(ExpansionReport {
        density: w.label(),
        g,
        k,
        res,
        h_list: h_list.to_vec(),
        khom_values,
        converged,
        qhom_value,
        residuals,
        decay_ratios,
        upper_slack,
        in_class,
    })
}

fn validate_class_quiet(w: &Density) -> bool {
    crate::density::validate_class(w, VALIDATION_SAMPLES, 0).all_passed()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Commutes,
    Fails,
    Inconclusive,
}

/// Fit W(Id + hG) − W(Id) ≈ σh + qh² for one energy curve.
#[derive(Clone, Debug, Serialize)]
pub struct ExpansionFit {
    /// Cell size k, or 0 for the running-minimum curve.
    pub k: usize,
    pub at_identity: f64,
    pub energies: Vec<f64>,
    pub sigma: f64,
    pub q: f64,
    pub q_std_error: f64,
    pub residual_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CommutativityVerdict {
    pub density: String,
    pub g: Mat,
    pub h_list: Vec<f64>,
    pub per_k: Vec<ExpansionFit>,
    pub multi_cell: Option<ExpansionFit>,
    /// Largest q^(k) − q_mc over k.
    pub max_excess: f64,
    /// 3·(u_k + u_mc) at the k attaining `max_excess`.
    pub margin: f64,
    pub verdict: Verdict,
    pub in_class: bool,
}

impl CommutativityVerdict {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,k,energy,residual\n");
        for fit in self.per_k.iter().chain(self.multi_cell.iter()) {
            for (h, e) in self.h_list.iter().zip(&fit.energies) {
                let model = fit.at_identity + fit.sigma * h + fit.q * h * h;
                s.push_str(&format!("{},{},{:e},{:e}\n", h, fit.k, e, e - model));
            }
        }
        s
    }
}

fn fit_expansion(k: usize, h_list: &[f64], at_identity: f64, energies: Vec<f64>) -> Result<ExpansionFit> {
    let rows: Vec<Vec<f64>> = h_list.iter().map(|&h| vec![h, h * h]).collect();
    let rhs: Vec<f64> = energies.iter().map(|e| e - at_identity).collect();
    let fit = least_squares(&rows, &rhs)?;
    Ok(ExpansionFit {
        k,
        at_identity,
        energies,
        sigma: fit.coefficients[0],
        q: fit.coefficients[1],
        q_std_error: fit.std_errors[1],
        residual_norm: fit.residual_norm,
    })
}

/// Fits σ^(k) and q^(k) for each k and for the running minimum over k, then
/// decides (C_G): fails if some q^(k) exceeds q_mc by more than 3(u_k + u_mc),
/// where u is the standard error of the fitted quadratic coefficient.
pub fn commutativity_probe(
    w: &Density,
    g: &Mat,
    k_list: &[usize],
    h_list: &[f64],
    res: usize,
    cfg: &StartConfig,
    opts: &SolverOptions,
) -> Result<CommutativityVerdict> {
    if h_list.len() < 3 {
        return Err(Error::FitIllConditioned(h_list.len()));
    }
    check_h_list(h_list)?;
    if k_list.is_empty() || k_list.contains(&0) {
        return Err(Error::InvalidParameter("k values must be positive".into()));
    }
    let in_class = validate_class_quiet(w);
    if g.norm() == 0.0 {
        return Ok(CommutativityVerdict {
            density: w.label(),
            g: *g,
            h_list: h_list.to_vec(),
            per_k: Vec::new(),
            multi_cell: None,
            max_excess: 0.0,
            margin: 0.0,
            verdict: Verdict::Inconclusive,
            in_class,
        });
    }
    let n = w.dim;
    let mut curves: Vec<(usize, f64, Vec<f64>)> = Vec::new();
    for &k in k_list {
        let grid = PeriodicGrid::new(n, k, res)?;
        let id = Mat::identity(n);
        let natural = solve_nonlinear_cell(w, &id, grid, &StartSet::standard(grid, &id, cfg)?, opts)?;
        let mut energies = Vec::new();
        for &h in h_list {
            let f = id + *g * h;
            let mut starts = StartSet::standard(grid, &f, cfg)?;
            starts.push("natural", natural.corrector.clone());
            energies.push(solve_nonlinear_cell(w, &f, grid, &starts, opts)?.energy);
        }
        curves.push((k, natural.energy, energies));
    }
    let mut per_k = Vec::new();
    for (k, e0, energies) in &curves {
        per_k.push(fit_expansion(*k, h_list, *e0, energies.clone())?);
    }
    let mc_identity = curves.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let mc_energies: Vec<f64> =
        (0..h_list.len()).map(|i| curves.iter().map(|c| c.2[i]).fold(f64::INFINITY, f64::min)).collect();
    let mc = fit_expansion(0, h_list, mc_identity, mc_energies)?;
    let mut max_excess = f64::NEG_INFINITY;
    let mut margin = 0.0;
    let mut agree = true;
    for fit in &per_k {
        let excess = fit.q - mc.q;
        let m = 3.0 * (fit.q_std_error + mc.q_std_error);
        let floor = 10.0 * opts.tol * mc.q.abs().max(1.0);
        if excess.abs() > m + floor {
            agree = false;
        }
        if excess > max_excess {
            max_excess = excess;
            margin = m;
        }
    }
    let floor = 10.0 * opts.tol * mc.q.abs().max(1.0);
    let verdict = if max_excess > margin + floor {
        Verdict::Fails
    } else if agree {
        Verdict::Commutes
    } else {
        Verdict::Inconclusive
    };
    Ok(CommutativityVerdict {
        density: w.label(),
        g: *g,
        h_list: h_list.to_vec(),
        per_k,
        multi_cell: Some(mc),
        max_excess,
        margin,
        verdict,
        in_class,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StiffnessCheck {
    pub alpha: f64,
    pub q: f64,
    pub q_scaled_alpha: f64,
    /// |q(10α) − q(α)| / q(α).
    pub relative_change: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompressionRow {
    pub delta: f64,
    /// q·δ², the one-cell quadratic prediction.
    pub quadratic_prediction: f64,
    pub curve: Vec<KhomPoint>,
    /// Running minimum over the k values (labelled upper bound on W^mc_hom).
    pub multi_cell_bound: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Counterexample1Report {
    pub alpha: f64,
    pub res: usize,
    pub stiffness: StiffnessCheck,
    pub rows: Vec<CompressionRow>,
    /// Fit of W^(k)_hom(F_δ) ≈ a + C/k² at the largest δ; a plays the role of c₀α.
    pub fitted_offset: Option<f64>,
    pub fitted_bending_constant: Option<f64>,
    /// f(δ) = multi-cell bound is nondecreasing in δ.
    pub monotone_in_delta: bool,
}

impl Counterexample1Report {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("delta,k,energy,running_min,quadratic_prediction,start\n");
        for r in &self.rows {
            for p in &r.curve {
                s.push_str(&format!(
                    "{},{},{:e},{:e},{:e},{}\n",
                    r.delta, p.k, p.energy, p.running_min, r.quadratic_prediction, p.start_label
                ));
            }
        }
        s
    }
}

/// Homogenized quadratic stiffness at e₁⊗e₁ of the layered laminate with soft phase α.
pub fn laminate_stiffness(alpha: f64, res: usize, opts: &SolverOptions) -> Result<f64> {
    let w = Density::layered(BaseKind::Dist2, alpha, 2)?;
    let q = w.quadratic_term()?;
    let hom = homogenized_tensor(&q, PeriodicGrid::new(2, 1, res)?, opts)?;
    Ok(hom.value(&Mat::unit(2, 0, 0)))
}

/// Compressions F_δ = diag(1 − δ, 1) of the 2D dist² laminate with soft phase α.
pub fn counterexample1_pipeline(
    alpha: f64,
    delta_list: &[f64],
    k_list: &[usize],
    res: usize,
    cfg: &StartConfig,
    opts: &SolverOptions,
) -> Result<Counterexample1Report> {
    if delta_list.iter().any(|d| !(*d > 0.0 && *d <= 0.3)) {
        return Err(Error::InvalidParameter("compressions must lie in (0, 0.3]".into()));
    }
    let w = Density::layered(BaseKind::Dist2, alpha, 2)?;
    let q = laminate_stiffness(alpha, res, opts)?;
    let q10 = laminate_stiffness(alpha * 10.0, res, opts)?;
    let stiffness = StiffnessCheck { alpha, q, q_scaled_alpha: q10, relative_change: (q10 - q).abs() / q };
    let mut rows = Vec::new();
    for &delta in delta_list {
        let f = Mat::diag(&[1.0 - delta, 1.0]);
        let (curve, _) = khom_curve(&w, &f, k_list, res, cfg, opts)?;
        let best = curve.last().map_or(f64::INFINITY, |p| p.running_min);
        let pred = q * delta * delta;
        rows.push(CompressionRow { delta, quadratic_prediction: pred, curve, multi_cell_bound: best, ratio: best / pred });
    }
    let (mut fitted_offset, mut fitted_bending_constant) = (None, None);
    if let Some(last) = rows.iter().max_by(|a, b| a.delta.total_cmp(&b.delta)) {
        if last.curve.len() >= 2 {
            let a: Vec<Vec<f64>> = last.curve.iter().map(|p| vec![1.0, 1.0 / (p.k * p.k) as f64]).collect();
            let b: Vec<f64> = last.curve.iter().map(|p| p.energy).collect();
            let fit = least_squares(&a, &b)?;
            fitted_offset = Some(fit.coefficients[0]);
            fitted_bending_constant = Some(fit.coefficients[1]);
        }
    }
    let mut sorted: Vec<&CompressionRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    let monotone_in_delta = sorted.windows(2).all(|w| w[1].multi_cell_bound >= w[0].multi_cell_bound - 1e-12);
    Ok(Counterexample1Report { alpha, res, stiffness, rows, fitted_offset, fitted_bending_constant, monotone_in_delta })
}

#[derive(Clone, Debug, Serialize)]
pub struct SplitRow {
    pub f: Mat,
    pub full: f64,
    pub slab: f64,
    pub rod: f64,
    pub defect: f64,
    pub bound: f64,
    pub passed: bool,
    pub converged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SplittingReport {
    pub s: f64,
    pub rho: f64,
    pub k: usize,
    pub res: usize,
    pub rows: Vec<SplitRow>,
}

impl SplittingReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("f,full,slab,rod,defect,bound,passed\n");
        for r in &self.rows {
            let f: Vec<String> = r.f.to_row_major().iter().map(|v| v.to_string()).collect();
            s.push_str(&format!(
                "\"{}\",{:e},{:e},{:e},{:e},{:e},{}\n",
                f.join(" "),
                r.full,
                r.slab,
                r.rod,
                r.defect,
                r.bound,
                r.passed
            ));
        }
        s
    }
}

/// Checks that the grid separates the slab from the cylinder: no node may be
/// shared by quadrature points of both components, and the cylinder must be hit.
pub fn check_separation(w: &Density, grid: PeriodicGrid) -> Result<()> {
    let mesh = grid.mesh();
    let phases = PhaseMap::build(&mesh, 1.0, |y| w.phase(y));
    let mut touched = vec![0u8; grid.node_count()];
    let mut rod_points = 0usize;
    for e in 0..mesh.element_count() {
        for q in 0..mesh.npe {
            let bit = match phases.at(e, q, mesh.npe) {
                Phase::Scaled(_) => 1,
                Phase::Prestressed => {
                    rod_points += 1;
                    2
                }
                Phase::Void => 0,
            };
            for &node in mesh.nodes(e) {
                touched[node as usize] |= bit;
            }
        }
    }
    if rod_points == 0 {
        return Err(Error::UnresolvedGeometry("no quadrature point lies in the cylinder".into()));
    }
    if touched.iter().any(|t| *t == 3) {
        return Err(Error::UnresolvedGeometry("slab and cylinder share grid nodes".into()));
    }
    Ok(())
}

/// Random matrices Id + 0.05·X with X standard normal entries.
pub fn sample_near_identity(dim: usize, count: usize, seed: u64) -> Vec<Mat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut f = Mat::identity(dim);
            for i in 0..dim {
                for j in 0..dim {
                    f.add_to(i, j, 0.05 * rng.gen_range(-1.0..1.0));
                }
            }
            f
        })
        .collect()
}

/// inf I^(k) against inf I^(k)₀ + inf I^(k)_ρ for each F.
pub fn splitting_check(
    base: BaseKind,
    s: f64,
    rho: f64,
    k: usize,
    res: usize,
    f_list: &[Mat],
    cfg: &StartConfig,
    opts: &SolverOptions,
) -> Result<SplittingReport> {
    let w = Density::prestressed(base, s, rho)?;
    let grid = PeriodicGrid::new(3, k, res)?;
    check_separation(&w, grid)?;
    debug_assert!(matches!(w.microstructure, Microstructure::PrestressedPerforated { .. }));
    let mut rows = Vec::new();
    for f in f_list {
        if f.dim() != 3 {
            return Err(Error::InvalidParameter("splitting matrices must be 3×3".into()));
        }
        let starts = StartSet::standard(grid, f, cfg)?;
        let full = solve_nonlinear_cell(&w, f, grid, &starts, opts)?;
        let slab = solve_nonlinear_cell_masked(&w, f, grid, &starts, opts, PhaseMask::Unprestressed)?;
        let rod = solve_nonlinear_cell_masked(&w, f, grid, &starts, opts, PhaseMask::Prestressed)?;
        let defect = (full.energy - (slab.energy + rod.energy)).abs();
        let bound = 10.0 * (3.0 * opts.tol) * full.energy.abs().max(1.0);
        rows.push(SplitRow {
            f: *f,
            full: full.energy,
            slab: slab.energy,
            rod: rod.energy,
            defect,
            bound,
            passed: defect <= bound,
            converged: full.converged && slab.converged && rod.converged,
        });
    }
    Ok(SplittingReport { s, rho, k, res, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_direction_is_inconclusive() {
        let w = Density::homogeneous(BaseKind::Stvk, 2);
        let v = commutativity_probe(&w, &Mat::zeros(2), &[1], &[0.1, 0.05, 0.025], 4, &StartConfig::default(), &SolverOptions::default())
            .unwrap();
        assert_eq!(v.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn two_sizes_are_ill_conditioned() {
        let w = Density::homogeneous(BaseKind::Stvk, 2);
        let r = commutativity_probe(&w, &Mat::unit(2, 0, 0), &[1], &[0.1, 0.05], 4, &StartConfig::default(), &SolverOptions::default());
        assert!(matches!(r, Err(Error::FitIllConditioned(2))));
    }

    #[test]
    fn coarse_grid_merging_components_is_rejected() {
        let w = Density::prestressed(BaseKind::Stvk, 0.1, 0.15).unwrap();
        assert!(check_separation(&w, PeriodicGrid::new(3, 1, 2).unwrap()).is_err());
        assert!(check_separation(&w, PeriodicGrid::new(3, 1, 10).unwrap()).is_ok());
    }

    #[test]
    fn expansion_fit_recovers_coefficients() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|h| 0.5 + 0.2 * h + 3.0 * h * h).collect();
        let fit = fit_expansion(1, &h, 0.5, e).unwrap();
        assert!((fit.sigma - 0.2).abs() < 1e-10 && (fit.q - 3.0).abs() < 1e-9);
    }
}
