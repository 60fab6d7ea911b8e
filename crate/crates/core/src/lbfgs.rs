//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

/// A smooth objective. `eval` writes the gradient into `grad` and returns the
/// value, or `None` when `x` lies outside the admissible region.
pub trait Objective {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> Option<f64>;

    /// Scale-free measure of the gradient used for the stopping test.
    fn grad_norm(&self, grad: &[f64]) -> f64 {
        dot(grad, grad).sqrt()
    }

    /// Removes components the minimizer must not move along (fixed or gauge directions).
    fn project(&self, _v: &mut [f64]) {}
}

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Absolute tolerance on [`Objective::grad_norm`].
    pub gtol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_evals: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { memory: 10, max_iter: 5000, gtol: 1e-8, c1: 1e-4, c2: 0.9, max_line_evals: 40 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIterations,
    LineSearchStall,
    InfeasibleStart,
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
}

impl LbfgsResult {
    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

struct Probe {
    x: Vec<f64>,
    g: Vec<f64>,
    f: f64,
    slope: f64,
}

struct LineSearch<'a, O: Objective> {
    obj: &'a O,
    x0: &'a [f64],
    dir: &'a [f64],
    f0: f64,
    slope0: f64,
    opts: &'a LbfgsOptions,
    evals: usize,
}

impl<'a, O: Objective> LineSearch<'a, O> {
    fn probe(&mut self, t: f64) -> Option<Probe> {
        self.evals += 1;
        let mut x = self.x0.to_vec();
        axpy(t, self.dir, &mut x);
        let mut g = vec![0.0; x.len()];
        let f = self.obj.eval(&x, &mut g)?;
        if !f.is_finite() {
            return None;
        }
        self.obj.project(&mut g);
        let slope = dot(&g, self.dir);
        Some(Probe { x, g, f, slope })
    }

    fn armijo(&self, t: f64, f: f64) -> bool {
        f <= self.f0 + self.opts.c1 * t * self.slope0
    }

    fn curvature(&self, slope: f64) -> bool {
        slope.abs() <= -self.opts.c2 * self.slope0
    }

    /// Approximate Wolfe conditions (Hager–Zhang), which stay usable once
    /// value differences drop to rounding level.
    fn approximate_wolfe(&self, f: f64, slope: f64) -> bool {
        f <= self.f0 + 1e-12 * self.f0.abs()
            && slope >= self.opts.c2 * self.slope0
            && slope <= (2.0 * self.opts.c1 - 1.0) * self.slope0
    }

    /// Nocedal–Wright Algorithm 3.5 with infeasible points treated as
    /// overshoots (the step is halved towards the last feasible point).
    fn run(&mut self, t_init: f64) -> Option<(f64, Probe)> {
        let mut t_prev = 0.0;
        let mut f_prev = self.f0;
        let mut slope_prev = self.slope0;
        let mut t = t_init;
        let mut best: Option<(f64, Probe)> = None;
        for i in 0..self.opts.max_line_evals {
            let p = match self.probe(t) {
                Some(p) => p,
                None => {
                    t = 0.5 * (t_prev + t);
                    if t - t_prev < 1e-16 * t_init.max(1.0) {
                        break;
                    }
                    continue;
                }
            };
            if self.approximate_wolfe(p.f, p.slope) && !self.armijo(t, p.f) {
                return Some((t, p));
            }
            if !self.armijo(t, p.f) || (i > 0 && p.f >= f_prev) {
                return self.zoom(t_prev, f_prev, slope_prev, t, p.f, p.slope).or(best);
            }
            if self.curvature(p.slope) {
                return Some((t, p));
            }
            if p.slope >= 0.0 {
                return self.zoom(t, p.f, p.slope, t_prev, f_prev, slope_prev).or(Some((t, p)));
            }
            t_prev = t;
            f_prev = p.f;
            slope_prev = p.slope;
            best = Some((t, p));
            t *= 2.0;
        }
        best
    }

    fn zoom(
        &mut self,
        mut lo: f64,
        mut f_lo: f64,
        mut s_lo: f64,
        mut hi: f64,
        mut f_hi: f64,
        mut s_hi: f64,
    ) -> Option<(f64, Probe)> {
        let mut best: Option<(f64, Probe)> = None;
        while self.evals < 2 * self.opts.max_line_evals {
            let t = cubic_min(lo, f_lo, s_lo, hi, f_hi, s_hi);
            if (hi - lo).abs() < 1e-16 * lo.abs().max(hi.abs()).max(1e-300) {
                break;
            }
            let p = match self.probe(t) {
                Some(p) => p,
                None => {
                    hi = t;
                    f_hi = f64::INFINITY;
                    s_hi = f64::NAN;
                    continue;
                }
            };
            if self.approximate_wolfe(p.f, p.slope) && !self.armijo(t, p.f) {
                return Some((t, p));
            }
            if !self.armijo(t, p.f) || p.f >= f_lo {
                hi = t;
                f_hi = p.f;
                s_hi = p.slope;
            } else {
                if self.curvature(p.slope) {
                    return Some((t, p));
                }
                if p.slope * (hi - lo) >= 0.0 {
                    hi = lo;
                    f_hi = f_lo;
                    s_hi = s_lo;
                }
                lo = t;
                f_lo = p.f;
                s_lo = p.slope;
                best = Some((t, p));
            }
        }
        best
    }
}

/// Minimizer of the cubic interpolant on [a, b], safeguarded towards the interior.
fn cubic_min(a: f64, fa: f64, sa: f64, b: f64, fb: f64, sb: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let width = hi - lo;
    let mid = 0.5 * (a + b);
    if !(fb.is_finite() && sb.is_finite()) {
        return a + 0.5 * (b - a);
    }
    let d1 = sa + sb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - sa * sb;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (sb + d2 - d1) / (sb - sa + 2.0 * d2);
    if !t.is_finite() || t < lo + 0.1 * width || t > hi - 0.1 * width {
        mid
    } else {
        t
    }
}

pub fn minimize<O: Objective>(obj: &O, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsResult {
    let n = obj.dim();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut evaluations = 1;
    let mut f = match obj.eval(&x, &mut g) {
        Some(f) if f.is_finite() => f,
        _ => {
            return LbfgsResult {
                x,
                value: f64::INFINITY,
                grad_norm: f64::INFINITY,
                iterations: 0,
                evaluations,
                status: Status::InfeasibleStart,
            }
        }
    };
    obj.project(&mut g);
    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::with_capacity(opts.memory);
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::with_capacity(opts.memory);
    let mut rho_hist: VecDeque<f64> = VecDeque::with_capacity(opts.memory);
    let mut gnorm = obj.grad_norm(&g);
    let mut iterations = 0;
    let mut status = Status::MaxIterations;
    let mut restarted = false;

    while iterations < opts.max_iter {
        if gnorm <= opts.gtol {
            status = Status::Converged;
            break;
        }
        // Two-loop recursion.
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let m = s_hist.len();
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            alpha[i] = rho_hist[i] * dot(&s_hist[i], &d);
            axpy(-alpha[i], &y_hist[i], &mut d);
        }
        let gamma = if m > 0 { dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1]) } else { 1.0 };
        for v in d.iter_mut() {
            *v *= gamma;
        }
        for i in 0..m {
            let beta = rho_hist[i] * dot(&y_hist[i], &d);
            axpy(alpha[i] - beta, &s_hist[i], &mut d);
        }
        obj.project(&mut d);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            d = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }
        let t_init = if m == 0 { (1.0 / dot(&d, &d).sqrt()).min(1.0) } else { 1.0 };
        let mut ls = LineSearch { obj, x0: &x, dir: &d, f0: f, slope0: slope, opts, evals: 0 };
        let found = ls.run(t_init);
        evaluations += ls.evals;
        let Some((t, p)) = found else {
            if restarted || m == 0 {
                status = Status::LineSearchStall;
                break;
            }
            restarted = true;
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            continue;
        };
        restarted = false;
        iterations += 1;
        let s: Vec<f64> = d.iter().map(|v| t * v).collect();
        let y: Vec<f64> = p.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 && sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if s_hist.len() == opts.memory {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
        }
        let f_old = f;
        x = p.x;
        g = p.g;
        f = p.f;
        gnorm = obj.grad_norm(&g);
        if f_old == f && gnorm > opts.gtol {
            status = Status::LineSearchStall;
            break;
        }
    }
    if gnorm <= opts.gtol {
        status = Status::Converged;
    }
    LbfgsResult { x, value: f, grad_norm: gnorm, iterations, evaluations, status }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, x: &[f64], g: &mut [f64]) -> Option<f64> {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            Some((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
        }
    }

    struct Quadratic(Vec<f64>);

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn eval(&self, x: &[f64], g: &mut [f64]) -> Option<f64> {
            let mut f = 0.0;
            for i in 0..x.len() {
                g[i] = self.0[i] * (x[i] - 1.0);
                f += 0.5 * self.0[i] * (x[i] - 1.0).powi(2);
            }
            Some(f)
        }
    }

    /// Quadratic bowl that rejects x₀ ≤ 0.5 as infeasible.
    struct Fenced;

    impl Objective for Fenced {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, x: &[f64], g: &mut [f64]) -> Option<f64> {
            if x[0] <= 0.5 {
                return None;
            }
            g[0] = 2.0 * x[0];
            Some(x[0] * x[0])
        }
    }

    #[test]
    fn rosenbrock_converges() {
        let r = minimize(&Rosenbrock, vec![-1.2, 1.0], &LbfgsOptions { gtol: 1e-10, ..Default::default() });
        assert!(r.converged(), "{:?}", r.status);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn ill_conditioned_quadratic() {
        let diag: Vec<f64> = (0..200).map(|i| 10f64.powf(i as f64 / 50.0)).collect();
        let r = minimize(&Quadratic(diag), vec![0.0; 200], &LbfgsOptions { gtol: 1e-9, ..Default::default() });
        assert!(r.converged());
        assert!(r.value < 1e-15);
    }

    #[test]
    fn infeasible_steps_are_backtracked() {
        let r = minimize(&Fenced, vec![3.0], &LbfgsOptions::default());
        assert!(r.x[0] > 0.5);
        assert!(r.value < 9.0);
    }

    #[test]
    fn infeasible_start_reported() {
        let r = minimize(&Fenced, vec![0.0], &LbfgsOptions::default());
        assert_eq!(r.status, Status::InfeasibleStart);
    }
}
