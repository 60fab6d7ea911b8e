//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use elhom_core::analysis::{
    commutativity_probe, counterexample1_pipeline, expansion_residuals, laminate_stiffness, sample_near_identity,
    splitting_check, Verdict,
};
use elhom_core::cell::{homogenized_tensor, khom_curve, solve_nonlinear_cell};
use elhom_core::density::validate_class;
use elhom_core::domain::{diagram_probe, DiagramSettings, Load};
use elhom_core::tensor::{dist2_so, polar};
use elhom_core::{BaseKind, Density, Mat, PeriodicGrid, QuadraticField, SolverOptions, StartConfig, StartSet};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn min_over_angles(f: &Mat) -> (f64, f64) {
    let dist = |t: f64| (*f - Mat::rotation2(t)).norm_sq();
    let m = 3600;
    let mut best = (0.0, f64::INFINITY);
    for i in 0..m {
        let t = 2.0 * PI * i as f64 / m as f64;
        let d = dist(t);
        if d < best.1 {
            best = (t, d);
        }
    }
    let (mut lo, mut hi) = (best.0 - 2.0 * PI / m as f64, best.0 + 2.0 * PI / m as f64);
    for _ in 0..200 {
        let a = lo + (hi - lo) / 3.0;
        let b = hi - (hi - lo) / 3.0;
        if dist(a) < dist(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let t = 0.5 * (lo + hi);
    (t, dist(t))
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_dist: f64 = 0.0;
    let mut worst_rot: f64 = 0.0;
    for _ in 0..500 {
        let f = Mat::from_rows([[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)], [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]]);
        let (_, oracle) = min_over_angles(&f);
        let d = dist2_so(&f);
        worst_dist = worst_dist.max((d - oracle).abs() / oracle.max(1e-12));
        let r = polar(&f).rotation;
        let orthogonal = (r.transpose() * r - Mat::identity(2)).norm() < 1e-10 && (r.det() - 1.0).abs() < 1e-10;
        let via_r = if orthogonal { (f - r).norm_sq() } else { f64::INFINITY };
        worst_rot = worst_rot.max((via_r - oracle).abs() / oracle.max(1e-12));
    }
    outcome(worst_dist < 1e-6 && worst_rot < 1e-6, format!("max rel. error dist2 {worst_dist:.2e}, rotation {worst_rot:.2e}"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for base in [BaseKind::Dist2, BaseKind::Stvk] {
        let w = Density::homogeneous(base, 3);
        let mut n = 0;
        while n < 200 {
            let mut f = Mat::identity(3);
            for i in 0..3 {
                for j in 0..3 {
                    f.add_to(i, j, 0.5 * rng.gen_range(-1.0..1.0));
                }
            }
            if f.det() < 0.1 {
                continue;
            }
            let y = [0.3, 0.3, 0.3];
            let g = w.grad_f(&y, &f);
            if !g.smooth {
                continue;
            }
            let step = 1e-5;
            let mut fd = Mat::zeros(3);
            for a in 0..9 {
                let e = Mat::unit(3, a / 3, a % 3) * step;
                fd.set_flat(a, (w.eval(&y, &(f + e)) - w.eval(&y, &(f - e))) / (2.0 * step));
            }
            worst = worst.max((fd - g.value).norm() / g.value.norm().max(1e-8));
            n += 1;
            checked += 1;
        }
    }
    outcome(worst < 1e-6, format!("{checked} points, max rel. error {worst:.2e}"))
}

/// Independent periodic P1 solve in y₂ of the laminate cell problem for the
/// direction S = e₁⊗e₂ + e₂⊗e₁, minimized by conjugate gradients.
fn laminate_1d(alpha: f64, elements: usize) -> f64 {
    let h = 1.0 / elements as f64;
    let mu: Vec<f64> = (0..elements).map(|e| if (e as f64 + 0.5) * h < 0.5 { 1.0 } else { alpha }).collect();
    // Only the shear slope p = φ₁′ couples to S: density 2μ(1 + p/2)².
    // Energy E(u) = Σ h·2μ_e(1 + (u_{e+1} − u_e)/(2h))², periodic nodes.
    let n = elements;
    let grad = |u: &[f64]| {
        let mut g = vec![0.0; n];
        for e in 0..n {
            let p = (u[(e + 1) % n] - u[e]) / h;
            let d = h * 2.0 * mu[e] * (1.0 + p / 2.0) / h;
            g[(e + 1) % n] += d;
            g[e] -= d;
        }
        g
    };
    let energy = |u: &[f64]| (0..n).map(|e| h * 2.0 * mu[e] * (1.0 + (u[(e + 1) % n] - u[e]) / (2.0 * h)).powi(2)).sum::<f64>();
    let mut u = vec![0.0; n];
    let g0 = grad(&u);
    let mut r: Vec<f64> = g0.iter().map(|v| -v).collect();
    let mut d = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    for _ in 0..10 * n {
        if rr.sqrt() < 1e-14 {
            break;
        }
        let zero = vec![0.0; n];
        let ad: Vec<f64> = {
            let ga = grad(&d);
            let gz = grad(&zero);
            ga.iter().zip(&gz).map(|(a, b)| a - b).collect()
        };
        let dad: f64 = d.iter().zip(&ad).map(|(a, b)| a * b).sum();
        let step = rr / dad;
        for i in 0..n {
            u[i] += step * d[i];
            r[i] -= step * ad[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        for i in 0..n {
            d[i] = r[i] + rr_new / rr * d[i];
        }
        rr = rr_new;
    }
    energy(&u)
}

fn criterion_3() -> Outcome {
    let alpha = 0.5;
    let q = QuadraticField::layered_sym(alpha, 2);
    let hom = homogenized_tensor(&q, PeriodicGrid::new(2, 1, 32).unwrap(), &SolverOptions::default()).unwrap();
    let s = Mat::unit(2, 0, 1) + Mat::unit(2, 1, 0);
    let grid_value = hom.value(&s);
    let oracle = laminate_1d(alpha, 320);
    let rel = (grid_value - oracle).abs() / oracle;
    outcome(rel < 1e-3, format!("grid {grid_value:.8}, 1D oracle {oracle:.8}, rel. error {rel:.2e}"))
}

fn criterion_4() -> Outcome {
    let opts = SolverOptions::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for w in [Density::homogeneous(BaseKind::Stvk, 2), Density::layered(BaseKind::Stvk, 0.5, 2).unwrap()] {
        let r = expansion_residuals(&w, &Mat::unit(2, 0, 0), 1, &[0.1, 0.05, 0.025], 16, &opts).unwrap();
        let last = *r.residuals.last().unwrap();
        let pass = r.strictly_decreasing() && last <= 0.1 * r.qhom_value;
        ok &= pass;
        parts.push(format!("{}: R = {:.4e}/{:.4e}/{:.4e}, Q = {:.4}", r.density, r.residuals[0], r.residuals[1], last, r.qhom_value));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let opts = SolverOptions::default();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..10 {
        let base = if i % 2 == 0 { BaseKind::Stvk } else { BaseKind::Dist2 };
        let w = if i % 3 == 0 {
            Density::homogeneous(base, 2)
        } else {
            Density::layered(base, rng.gen_range(0.01..1.0), 2).unwrap()
        };
        let f = if i % 4 == 3 {
            Mat::diag(&[1.0 - rng.gen_range(0.05..0.25), 1.0])
        } else {
            loop {
                let mut f = Mat::identity(2);
                for a in 0..4 {
                    f.set_flat(a, f.flat(a) + 0.3 * rng.gen_range(-1.0..1.0));
                }
                if f.det() > 0.3 {
                    break f;
                }
            }
        };
        let cfg = StartConfig { seed: i, ..Default::default() };
        let (points, _) = khom_curve(&w, &f, &[1, 2], 8, &cfg, &opts).unwrap();
        worst = worst.max(points[1].energy - points[0].energy);
    }
    outcome(worst <= 1e-8, format!("max energy(k=2) - energy(k=1) = {worst:.3e}"))
}

fn criterion_6() -> Outcome {
    let opts = SolverOptions::default();
    let alpha = 1e-3;
    let delta = 0.2;
    let q = laminate_stiffness(alpha, 16, &opts).unwrap();
    let q10 = laminate_stiffness(10.0 * alpha, 16, &opts).unwrap();
    let w = Density::layered(BaseKind::Dist2, alpha, 2).unwrap();
    let f = Mat::diag(&[1.0 - delta, 1.0]);
    let grid = PeriodicGrid::new(2, 8, 16).unwrap();
    let cfg = StartConfig { zero: false, bending: true, random_fields: 0, ..Default::default() };
    let r = solve_nonlinear_cell(&w, &f, grid, &StartSet::standard(grid, &f, &cfg).unwrap(), &opts).unwrap();
    let threshold = 0.1 * q * delta * delta;
    let change = (q10 - q).abs() / q;
    outcome(
        r.energy < threshold && change < 0.1,
        format!(
            "W(8) = {:.5e} ({}, converged {}), 0.1 q delta^2 = {threshold:.5e}, ratio to q delta^2 = {:.3}; q = {q:.5}, q(10 alpha) change {change:.2e}",
            r.energy,
            r.start_label,
            r.converged,
            r.energy / (q * delta * delta)
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut f_list = vec![Mat::identity(3)];
    f_list.extend(sample_near_identity(3, 2, 7));
    let cfg = StartConfig { random_fields: 0, ..Default::default() };
    let r = splitting_check(BaseKind::Stvk, 0.1, 0.15, 1, 10, &f_list, &cfg, &SolverOptions::default()).unwrap();
    let worst = r.rows.iter().map(|row| row.defect / row.bound).fold(0.0, f64::max);
    let rod_id = r.rows[0].rod;
    let slab_id = r.rows[0].slab;
    outcome(r.all_passed(), format!("max defect/bound {worst:.2e}; at Id: slab {slab_id:.2e}, cylinder {rod_id:.4e}"))
}

fn criterion_8() -> Outcome {
    let opts = SolverOptions::default();
    let h = [0.1, 0.05, 0.025];
    let layered = Density::layered(BaseKind::Stvk, 0.5, 2).unwrap();
    let class = commutativity_probe(&layered, &Mat::unit(2, 0, 0), &[1, 2], &h, 16, &StartConfig::default(), &opts).unwrap();
    let pre = Density::prestressed(BaseKind::Stvk, 0.1, 0.15).unwrap();
    let cfg = StartConfig { random_fields: 1, ..Default::default() };
    let v = commutativity_probe(&pre, &(Mat::unit(3, 1, 1) * -1.0), &[1, 2], &h, 10, &cfg, &opts).unwrap();
    let qs: Vec<String> = v.per_k.iter().map(|f| format!("q({})={:.4}", f.k, f.q)).collect();
    outcome(
        class.verdict == Verdict::Commutes && v.verdict == Verdict::Fails,
        format!(
            "layered stvk: {:?}; prestressed: {:?} ({}, q_mc={:.4}, excess {:.2e} vs margin {:.2e})",
            class.verdict,
            v.verdict,
            qs.join(", "),
            v.multi_cell.as_ref().map_or(f64::NAN, |m| m.q),
            v.max_excess,
            v.margin
        ),
    )
}

fn criterion_9() -> Outcome {
    let opts = SolverOptions::default();
    let settings = DiagramSettings { eps_list: vec![0.5, 0.25], h_list: vec![0.1, 0.05], cell_res: 16, seed: 0 };
    let load = Load::default_lift(2);
    let plain = diagram_probe(&Density::homogeneous(BaseKind::Stvk, 2), &load, &settings, &opts).unwrap();
    let layered = diagram_probe(&Density::layered(BaseKind::Stvk, 0.5, 2).unwrap(), &load, &settings, &opts).unwrap();
    outcome(
        plain.relative_defect <= 1e-3 && layered.relative_defect <= 0.05,
        format!(
            "homogeneous defect {:.2e} (limits {:.6e} / {:.6e}); layered defect {:.2e} (limits {:.6e} / {:.6e}, I0 {:.6e})",
            plain.relative_defect,
            plain.limit_13,
            plain.limit_24,
            layered.relative_defect,
            layered.limit_13,
            layered.limit_24,
            layered.i0
        ),
    )
}

fn criterion_10() -> Outcome {
    let run = || {
        let opts = SolverOptions::default();
        let w = Density::layered(BaseKind::Dist2, 0.1, 2).unwrap();
        let f = Mat::diag(&[0.9, 1.0]);
        let cfg = StartConfig { seed: 42, ..Default::default() };
        let (points, cells) = khom_curve(&w, &f, &[1, 2], 8, &cfg, &opts).unwrap();
        let validation = validate_class(&w, 50, 42);
        let split = splitting_check(
            BaseKind::Stvk,
            0.1,
            0.15,
            1,
            8,
            &sample_near_identity(3, 1, 42),
            &StartConfig { random_fields: 1, seed: 42, ..Default::default() },
            &opts,
        )
        .unwrap();
        let ce = counterexample1_pipeline(0.1, &[0.1], &[1, 2], 8, &cfg, &opts).unwrap();
        serde_json::to_string(&(points, cells, validation, split, ce)).unwrap()
    };
    let a = run();
    let b = run();
    outcome(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 10] = [
        ("tensor oracle", criterion_1, Duration::from_secs(5)),
        ("gradient checks", criterion_2, Duration::from_secs(5)),
        ("laminate vs 1D oracle", criterion_3, Duration::from_secs(30)),
        ("expansion residuals", criterion_4, Duration::from_secs(120)),
        ("multi-cell monotonicity", criterion_5, Duration::from_secs(300)),
        ("layered compression gap", criterion_6, Duration::from_secs(600)),
        ("splitting identity", criterion_7, Duration::from_secs(600)),
        ("commutativity verdicts", criterion_8, Duration::from_secs(900)),
        ("diagram probe", criterion_9, Duration::from_secs(900)),
        ("determinism", criterion_10, Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        let elapsed = t.elapsed();
        let in_time = elapsed <= *budget;
        let pass = o.passed && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<26} {}  {} [{:.1}s of {}s]",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
