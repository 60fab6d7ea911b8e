//! Stored-energy densities W(y, F), their composite microstructures, the
//! quadratic term at the identity, and empirical class-membership checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dist2_so, polar_rotation, quad_value, Mat, SymTensor4};

/// Step of the central differences used to extract Hessians.
pub const HESSIAN_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    /// W₀(F) = dist²(F, SO(n)).
    Dist2,
    /// W₀(F) = ¼|FᵀF − Id|².
    Stvk,
}

impl BaseKind {
    pub fn growth_exponent(self) -> f64 {
        match self {
            BaseKind::Dist2 => 2.0,
            BaseKind::Stvk => 4.0,
        }
    }

    #[inline]
    pub fn energy(self, f: &Mat) -> f64 {
        match self {
            BaseKind::Dist2 => dist2_so(f),
            BaseKind::Stvk => {
                let c = f.transpose() * *f - Mat::identity(f.dim());
                0.25 * c.norm_sq()
            }
        }
    }

    /// dW₀/dF; the flag is false where W₀ is not differentiable (det F ≤ 0 for dist²).
    #[inline]
    pub fn gradient(self, f: &Mat) -> (Mat, bool) {
        match self {
            BaseKind::Dist2 => ((*f - polar_rotation(f)) * 2.0, f.det() > 0.0),
            BaseKind::Stvk => {
                let c = f.transpose() * *f - Mat::identity(f.dim());
                (*f * c, true)
            }
        }
    }

    #[inline]
    pub fn energy_and_gradient(self, f: &Mat) -> (f64, Mat) {
        match self {
            BaseKind::Dist2 => {
                let r = polar_rotation(f);
                let d = *f - r;
                (d.norm_sq(), d * 2.0)
            }
            BaseKind::Stvk => {
                let c = f.transpose() * *f - Mat::identity(f.dim());
                (0.25 * c.norm_sq(), *f * c)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Microstructure {
    Homogeneous,
    /// Stiff layers where y₂ mod 1 ∈ [0, ½), soft matrix of stiffness α elsewhere.
    Layered { alpha: f64 },
    /// Slab Y₀ = {y₃ mod 1 < ½}, prestressed cylinder of radius ρ along e₁
    /// centred at (·, ½, ¾), void elsewhere.
    PrestressedPerforated { s: f64, rho: f64 },
}

/// Material phase occupying a point of the cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Phase {
    /// W(y, F) = weight·W₀(F).
    Scaled(f64),
    /// W(y, F) = W₀(F·S).
    Prestressed,
    Void,
}

/// Selects which phases contribute to an energy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMask {
    All,
    /// Only the unprestressed phases (the slab Y₀ of the perforated composite).
    Unprestressed,
    /// Only the prestressed cylinder.
    Prestressed,
}

impl PhaseMask {
    #[inline]
    pub fn admits(self, phase: Phase) -> bool {
        match (self, phase) {
            (_, Phase::Void) => false,
            (PhaseMask::All, _) => true,
            (PhaseMask::Unprestressed, Phase::Scaled(_)) => true,
            (PhaseMask::Prestressed, Phase::Prestressed) => true,
            _ => false,
        }
    }
}

#[inline]
fn frac(x: f64) -> f64 {
    x - x.floor()
}

impl Microstructure {
    pub fn phase(&self, y: &[f64]) -> Phase {
        match *self {
            Microstructure::Homogeneous => Phase::Scaled(1.0),
            Microstructure::Layered { alpha } => {
                if frac(y[1]) < 0.5 {
                    Phase::Scaled(1.0)
                } else {
                    Phase::Scaled(alpha)
                }
            }
            Microstructure::PrestressedPerforated { rho, .. } => {
                let y2 = frac(y[1]);
                let y3 = frac(y[2]);
                if y3 < 0.5 {
                    Phase::Scaled(1.0)
                } else if (y2 - 0.5).powi(2) + (y3 - 0.75).powi(2) <= rho * rho {
                    Phase::Prestressed
                } else {
                    Phase::Void
                }
            }
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        matches!(self, Microstructure::Homogeneous) || matches!(self, Microstructure::Layered { alpha } if *alpha == 1.0)
    }
}

/// A stored-energy density W(y, F) on the unit cell Y = [0,1)ⁿ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub base: BaseKind,
    pub microstructure: Microstructure,
    pub dim: usize,
    pub growth_p: f64,
    /// Nominal non-degeneracy constant; infinite for densities outside the class.
    pub coercivity_a: f64,
}

/// Gradient of a density with a smoothness flag.
#[derive(Clone, Copy, Debug)]
pub struct GradF {
    pub value: Mat,
    /// False at points where W is not differentiable; `value` is then a subgradient element.
    pub smooth: bool,
}

impl Density {
    pub fn new(base: BaseKind, microstructure: Microstructure, dim: usize) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidParameter(format!("dimension must be 2 or 3, got {dim}")));
        }
        let min_weight = match microstructure {
            Microstructure::Homogeneous => 1.0,
            Microstructure::Layered { alpha } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
                }
                alpha.min(1.0)
            }
            Microstructure::PrestressedPerforated { s, rho } => {
                if dim != 3 {
                    return Err(Error::InvalidParameter("the prestressed perforated composite is three-dimensional".into()));
                }
                if !(s > 0.0 && s < 0.5) {
                    return Err(Error::InvalidParameter(format!("s must lie in (0, 1/2), got {s}")));
                }
                if !(rho > 0.0 && rho < 0.25) {
                    return Err(Error::InvalidParameter(format!("rho must lie in (0, 1/4), got {rho}")));
                }
                0.0
            }
        };
        let base_a = match base {
            BaseKind::Dist2 => 1.0,
            BaseKind::Stvk => 4.0,
        };
        let coercivity_a = if min_weight > 0.0 { base_a / min_weight } else { f64::INFINITY };
        Ok(Density { base, microstructure, dim, growth_p: base.growth_exponent(), coercivity_a })
    }

    pub fn homogeneous(base: BaseKind, dim: usize) -> Self {
        Density::new(base, Microstructure::Homogeneous, dim).expect("homogeneous density is always valid")
    }

    pub fn layered(base: BaseKind, alpha: f64, dim: usize) -> Result<Self> {
        Density::new(base, Microstructure::Layered { alpha }, dim)
    }

    pub fn prestressed(base: BaseKind, s: f64, rho: f64) -> Result<Self> {
        Density::new(base, Microstructure::PrestressedPerforated { s, rho }, 3)
    }

    /// S = (Id + s e₁⊗e₁)⁻¹ of the prestressed phase (identity otherwise).
    pub fn prestrain(&self) -> Mat {
        let mut s_mat = Mat::identity(self.dim);
        if let Microstructure::PrestressedPerforated { s, .. } = self.microstructure {
            s_mat.set(0, 0, 1.0 / (1.0 + s));
        }
        s_mat
    }

    pub fn phase(&self, y: &[f64]) -> Phase {
        self.microstructure.phase(y)
    }

    #[inline]
    pub fn eval_phase(&self, phase: Phase, f: &Mat) -> f64 {
        match phase {
            Phase::Scaled(w) => w * self.base.energy(f),
            Phase::Prestressed => self.base.energy(&(*f * self.prestrain())),
            Phase::Void => 0.0,
        }
    }

    #[inline]
    pub fn eval_and_grad_phase(&self, phase: Phase, f: &Mat) -> (f64, Mat) {
        match phase {
            Phase::Scaled(w) => {
                let (e, g) = self.base.energy_and_gradient(f);
                (w * e, g * w)
            }
            Phase::Prestressed => {
                let s = self.prestrain();
                let (e, g) = self.base.energy_and_gradient(&(*f * s));
                (e, g * s.transpose())
            }
            Phase::Void => (0.0, Mat::zeros(f.dim())),
        }
    }

    pub fn eval(&self, y: &[f64], f: &Mat) -> f64 {
        self.eval_phase(self.phase(y), f)
    }

    pub fn grad_f(&self, y: &[f64], f: &Mat) -> GradF {
        match self.phase(y) {
            Phase::Scaled(w) => {
                let (g, smooth) = self.base.gradient(f);
                GradF { value: g * w, smooth }
            }
            Phase::Prestressed => {
                let s = self.prestrain();
                let (g, smooth) = self.base.gradient(&(*f * s));
                GradF { value: g * s.transpose(), smooth }
            }
            Phase::Void => GradF { value: Mat::zeros(self.dim), smooth: true },
        }
    }

    /// True when det(F) must stay positive for the energy to be smooth.
    pub fn needs_orientation(&self) -> bool {
        self.base == BaseKind::Dist2
    }

    /// ½D²W₀ at `f` for the base energy.
    pub fn base_hessian_at(&self, f: &Mat) -> SymTensor4 {
        let n = self.dim;
        if self.base == BaseKind::Stvk && f.max_abs_diff(&Mat::identity(n)) == 0.0 {
            return SymTensor4::sym_projector(n);
        }
        hessian_by_differences(n, |m| self.base.gradient(m).0, f)
    }

    /// The field y ↦ ½D²W(y, Id).
    pub fn quadratic_term(&self) -> Result<QuadraticField> {
        if let Microstructure::PrestressedPerforated { .. } = self.microstructure {
            return Err(Error::NotExpandable(
                "the prestressed phase is not stress free at the identity".into(),
            ));
        }
        let base = self.base_hessian_at(&Mat::identity(self.dim));
        Ok(QuadraticField::from_base(self.microstructure, base))
    }

    /// ½D²W(y, Id) for any microstructure, without checking that Id is a natural state.
    pub fn hessian_field_at_identity(&self) -> QuadraticField {
        let n = self.dim;
        let base = self.base_hessian_at(&Mat::identity(n));
        let pre = hessian_by_differences(n, |m| self.grad_f_phase(Phase::Prestressed, m), &Mat::identity(n));
        QuadraticField { dim: n, microstructure: self.microstructure, base, prestressed: Some(pre) }
    }

    fn grad_f_phase(&self, phase: Phase, f: &Mat) -> Mat {
        self.eval_and_grad_phase(phase, f).1
    }

    pub fn label(&self) -> String {
        let base = match self.base {
            BaseKind::Dist2 => "dist2",
            BaseKind::Stvk => "stvk",
        };
        match self.microstructure {
            Microstructure::Homogeneous => format!("{base} homogeneous"),
            Microstructure::Layered { alpha } => format!("{base} layered(alpha={alpha})"),
            Microstructure::PrestressedPerforated { s, rho } => format!("{base} prestressed(s={s}, rho={rho})"),
        }
    }
}

/// ½ of the Hessian of a function with gradient `grad`, by central
/// differences of the gradient, symmetrized.
fn hessian_by_differences(n: usize, grad: impl Fn(&Mat) -> Mat, at: &Mat) -> SymTensor4 {
    let m = n * n;
    let h = HESSIAN_STEP;
    let mut t = SymTensor4::zeros(n);
    for b in 0..m {
        let e = Mat::unit(n, b / n, b % n) * h;
        let gp = grad(&(*at + e));
        let gm = grad(&(*at - e));
        for a in 0..m {
            let v = 0.5 * (gp.flat(a) - gm.flat(a)) / (2.0 * h);
            t.set_entry(a, b, v);
        }
    }
    let rows = t.to_rows();
    SymTensor4::from_rows(n, &rows).expect("square by construction")
}

/// A Y-periodic field of quadratic forms Q(y, G) = ⟨𝕃(y)G, G⟩.
#[derive(Clone, Debug)]
pub struct QuadraticField {
    dim: usize,
    microstructure: Microstructure,
    base: SymTensor4,
    prestressed: Option<SymTensor4>,
}

impl QuadraticField {
    pub fn uniform(l: SymTensor4) -> Self {
        QuadraticField { dim: l.dim(), microstructure: Microstructure::Homogeneous, base: l, prestressed: None }
    }

    /// Q(y, G) = μ(y)·⟨𝕃G, G⟩ with μ the phase weight of `microstructure`.
    pub fn from_base(microstructure: Microstructure, base: SymTensor4) -> Self {
        QuadraticField { dim: base.dim(), microstructure, base, prestressed: None }
    }

    /// Q(y, G) = μ(y)|sym G|² on layers normal to e₂, μ ∈ {1, α}.
    pub fn layered_sym(alpha: f64, dim: usize) -> Self {
        QuadraticField::from_base(Microstructure::Layered { alpha }, SymTensor4::sym_projector(dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn microstructure(&self) -> Microstructure {
        self.microstructure
    }

    pub fn base_tensor(&self) -> &SymTensor4 {
        &self.base
    }

    pub fn tensor_for_phase(&self, phase: Phase) -> SymTensor4 {
        match phase {
            Phase::Scaled(w) => self.base.scaled(w),
            Phase::Prestressed => self.prestressed.clone().unwrap_or_else(|| SymTensor4::zeros(self.dim)),
            Phase::Void => SymTensor4::zeros(self.dim),
        }
    }

    pub fn sampler(&self, y: &[f64]) -> SymTensor4 {
        self.tensor_for_phase(self.microstructure.phase(y))
    }

    pub fn value(&self, y: &[f64], g: &Mat) -> f64 {
        quad_value(&self.sampler(y), g)
    }

    /// The essential-sup constant c with Q(y, G) ≤ c|G|².
    pub fn bound_c(&self) -> f64 {
        let top = |t: &SymTensor4| t.eigenvalues().last().copied().unwrap_or(0.0);
        let w_max = match self.microstructure {
            Microstructure::Layered { alpha } => alpha.max(1.0),
            _ => 1.0,
        };
        let mut c = w_max * top(&self.base);
        if let Some(p) = &self.prestressed {
            c = c.max(top(p));
        }
        c
    }

    pub fn is_homogeneous(&self) -> bool {
        self.microstructure.is_homogeneous()
    }
}

/// Result of one (W1)–(W4) condition.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionResult {
    pub name: String,
    pub passed: bool,
    pub fitted_constant: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub density: String,
    pub sample_count: usize,
    pub seed: u64,
    pub conditions: Vec<ConditionResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

/// Largest fitted constant accepted as finite.
const FIT_CEILING: f64 = 1e8;

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Mat {
    let mut m = Mat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let v: f64 = rng.sample(StandardNormal);
            m.set(i, j, scale * v);
        }
    }
    m
}

/// Orientation-preserving sample F = Id + r·X with X Gaussian.
fn sample_deformation(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Mat {
    loop {
        let r = rng.gen_range(0.0..radius);
        let f = Mat::identity(n) + random_matrix(rng, n, r);
        if f.det() > 1e-3 {
            return f;
        }
    }
}

fn sample_point(rng: &mut ChaCha8Rng, n: usize) -> [f64; 3] {
    let mut y = [0.0; 3];
    for v in y.iter_mut().take(n) {
        *v = rng.gen_range(0.0..1.0);
    }
    y
}

/// Checks (W1)–(W4) on randomized samples (y, F) with det F > 0.
pub fn validate_class(w: &Density, sample_count: usize, seed: u64) -> ValidationReport {
    let n = w.dim;
    let p = w.growth_p;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<([f64; 3], Mat)> = (0..sample_count.max(1))
        .map(|i| {
            let radius = if i % 4 == 3 { 6.0 } else { 2.0 };
            (sample_point(&mut rng, n), sample_deformation(&mut rng, n, radius))
        })
        .collect();

    // (W1): fitted sandwich constant and local Lipschitz constant.
    let mut a_growth: f64 = 0.0;
    let mut a_lip: f64 = 0.0;
    for (y, f) in &samples {
        let wv = w.eval(y, f);
        let fp = f.norm().powf(p);
        a_growth = a_growth.max(wv / (1.0 + fp));
        a_growth = a_growth.max(0.5 * (-wv + (wv * wv + 4.0 * fp).sqrt()));
        let g = sample_deformation(&mut rng, n, 2.0);
        let diff = (*f - g).norm();
        if diff > 1e-12 {
            let ratio = (wv - w.eval(y, &g)).abs()
                / ((1.0 + f.norm().powf(p - 1.0) + g.norm().powf(p - 1.0)) * diff);
            a_lip = a_lip.max(ratio);
        }
    }
    let w1_pass = a_growth.is_finite() && a_lip.is_finite() && a_growth < FIT_CEILING;
    let w1 = ConditionResult {
        name: "W1".into(),
        passed: w1_pass,
        fitted_constant: Some(a_growth.max(a_lip)),
        detail: format!("growth constant {a_growth:.4e}, Lipschitz constant {a_lip:.4e}, p = {p}"),
    };

    // (W2): W(y, Id) = 0.
    let id = Mat::identity(n);
    let w2_max = samples.iter().map(|(y, _)| w.eval(y, &id).abs()).fold(0.0, f64::max);
    let w2 = ConditionResult {
        name: "W2".into(),
        passed: w2_max <= 1e-12,
        fitted_constant: None,
        detail: format!("max |W(y, Id)| = {w2_max:.3e}"),
    };

    // (W3): W ≥ dist²/a.
    let mut a3: f64 = 0.0;
    for (y, f) in &samples {
        let d = dist2_so(f);
        let wv = w.eval(y, f);
        if d > 0.0 {
            a3 = a3.max(if wv > 0.0 { d / wv } else { f64::INFINITY });
        }
    }
    let w3 = ConditionResult {
        name: "W3".into(),
        passed: a3.is_finite() && a3 < FIT_CEILING,
        fitted_constant: Some(a3),
        detail: format!("sup dist^2/W = {a3:.4e}"),
    };

    // (W4): residual of the quadratic expansion.
    let w4 = match w.quadratic_term() {
        Err(e) => ConditionResult { name: "W4".into(), passed: false, fitted_constant: None, detail: e.to_string() },
        Ok(q) => {
            let scales = [1e-1, 1e-2, 1e-3];
            let mut worst = [0.0f64; 3];
            for (y, _) in &samples {
                let mut g = random_matrix(&mut rng, n, 1.0);
                g = g * (1.0 / g.norm());
                for (slot, &t) in worst.iter_mut().zip(scales.iter()) {
                    let gt = g * t;
                    let r = (w.eval(y, &(id + gt)) - q.value(y, &gt)).abs() / (t * t);
                    *slot = slot.max(r);
                }
            }
            let passed = worst[2] < 0.05 * worst[0] + 1e-8 && worst[1] <= worst[0] + 1e-8;
            ConditionResult {
                name: "W4".into(),
                passed,
                fitted_constant: Some(q.bound_c()),
                detail: format!(
                    "max residual at |G| = 1e-1, 1e-2, 1e-3: {:.3e}, {:.3e}, {:.3e}",
                    worst[0], worst[1], worst[2]
                ),
            }
        }
    };

    ValidationReport { density: w.label(), sample_count: samples.len(), seed, conditions: vec![w1, w2, w3, w4] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_is_natural_state() {
        for base in [BaseKind::Dist2, BaseKind::Stvk] {
            let w = Density::homogeneous(base, 2);
            assert_eq!(w.eval(&[0.3, 0.7], &Mat::identity(2)), 0.0);
            let g = w.grad_f(&[0.3, 0.7], &Mat::identity(2));
            assert!(g.value.norm() < 1e-15 && g.smooth);
        }
    }

    #[test]
    fn soft_phase_scales_energy() {
        let w = Density::layered(BaseKind::Dist2, 0.1, 2).unwrap();
        let f = Mat::diag(&[2.0, 1.0]);
        assert_relative_eq!(w.eval(&[0.2, 0.75], &f), 0.1, epsilon = 1e-14);
        assert_relative_eq!(w.eval(&[0.2, 0.25], &f), 1.0, epsilon = 1e-14);
        // Interface at y₂ = ½ belongs to the soft phase.
        assert_relative_eq!(w.eval(&[0.0, 0.5], &f), 0.1, epsilon = 1e-14);
    }

    #[test]
    fn void_region_carries_no_energy() {
        let w = Density::prestressed(BaseKind::Dist2, 0.2, 0.15).unwrap();
        let f = Mat::diag(&[3.0, -1.0, 0.2]);
        assert_eq!(w.eval(&[0.5, 0.1, 0.8], &f), 0.0);
        assert_eq!(w.phase(&[0.5, 0.5, 0.75]), Phase::Prestressed);
        assert!(w.eval(&[0.5, 0.5, 0.75], &Mat::identity(3)) > 0.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Density::layered(BaseKind::Dist2, 0.0, 2).is_err());
        assert!(Density::prestressed(BaseKind::Dist2, 0.6, 0.1).is_err());
        assert!(Density::prestressed(BaseKind::Dist2, 0.2, 0.3).is_err());
        assert!(Density::new(BaseKind::Stvk, Microstructure::PrestressedPerforated { s: 0.2, rho: 0.1 }, 2).is_err());
    }

    #[test]
    fn dist2_gradient_flags_reflections() {
        let w = Density::homogeneous(BaseKind::Dist2, 2);
        assert!(!w.grad_f(&[0.0, 0.0], &Mat::diag(&[1.0, -0.5])).smooth);
    }

    #[test]
    fn stvk_quadratic_term_is_sym_norm() {
        let q = Density::homogeneous(BaseKind::Stvk, 3).quadratic_term().unwrap();
        let g = Mat::from_rows([[0.1, 0.7, -0.2], [0.3, -0.4, 0.9], [1.1, 0.0, 0.5]]);
        assert_relative_eq!(q.value(&[0.0; 3], &g), g.sym().norm_sq(), epsilon = 1e-14);
    }

    #[test]
    fn dist2_quadratic_term_matches_sym_norm() {
        let q = Density::homogeneous(BaseKind::Dist2, 2).quadratic_term().unwrap();
        let sp = SymTensor4::sym_projector(2);
        for a in 0..4 {
            for b in 0..4 {
                assert!((q.base_tensor().entry(a, b) - sp.entry(a, b)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn prestressed_is_not_expandable() {
        let w = Density::prestressed(BaseKind::Stvk, 0.2, 0.1).unwrap();
        assert!(matches!(w.quadratic_term(), Err(Error::NotExpandable(_))));
    }
}
