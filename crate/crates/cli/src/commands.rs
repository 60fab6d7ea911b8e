use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use elhom_core::analysis::{
    commutativity_probe, counterexample1_pipeline, expansion_residuals, sample_near_identity, splitting_check, Verdict,
};
use elhom_core::cell::{homogenized_tensor, khom_curve};
use elhom_core::density::validate_class;
use elhom_core::domain::{diagram_probe, DiagramSettings, Load};
use elhom_core::{BaseKind, Density, Mat, Microstructure, PeriodicGrid, SolverOptions, StartConfig};

use crate::config::Resolved;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    ValidationFailed,
    NotConverged,
}

pub struct Outcome {
    pub report: Value,
    pub csv: String,
    pub extra: Vec<(String, Vec<u8>)>,
    pub status: RunStatus,
}

pub struct Globals {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub opts: SolverOptions,
}

pub fn globals(cfg: &Resolved) -> Result<Globals, CliError> {
    let threads = cfg.usize("threads")?;
    let tol = cfg.f64("tol")?;
    let max_iter = cfg.usize("max_iter")?;
    if threads == 0 || !(tol > 0.0) || max_iter == 0 {
        return Err(CliError::Config("threads, tol and max_iter must be positive".into()));
    }
    Ok(Globals {
        output_dir: PathBuf::from(cfg.str("output_dir")),
        seed: cfg.u64("seed")?,
        opts: SolverOptions { tol, max_iter, threads, ..Default::default() },
    })
}

fn config_error(e: elhom_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn base_kind(cfg: &Resolved) -> Result<BaseKind, CliError> {
    match cfg.str("base") {
        "dist2" => Ok(BaseKind::Dist2),
        "stvk" => Ok(BaseKind::Stvk),
        other => Err(CliError::Config(format!("base = '{other}': expected dist2 or stvk"))),
    }
}

fn density(cfg: &Resolved) -> Result<Density, CliError> {
    let base = base_kind(cfg)?;
    let micro = match cfg.str("microstructure") {
        "homogeneous" => Microstructure::Homogeneous,
        "layered" => Microstructure::Layered { alpha: cfg.f64("alpha")? },
        "prestressed" => Microstructure::PrestressedPerforated { s: cfg.f64("s")?, rho: cfg.f64("rho")? },
        other => return Err(CliError::Config(format!("microstructure = '{other}': expected homogeneous, layered or prestressed"))),
    };
    let dim = match cfg.str("dim") {
        "auto" if matches!(micro, Microstructure::PrestressedPerforated { .. }) => 3,
        "auto" => 2,
        _ => cfg.usize("dim")?,
    };
    Density::new(base, micro, dim).map_err(config_error)
}

fn grid(dim: usize, k: usize, res: usize) -> Result<PeriodicGrid, CliError> {
    PeriodicGrid::new(dim, k, res).map_err(config_error)
}

fn starts(cfg: &Resolved, seed: u64, bending: bool) -> Result<StartConfig, CliError> {
    let amplitude = cfg.f64("amplitude")?;
    if !(amplitude > 0.0) {
        return Err(CliError::Config("amplitude must be positive".into()));
    }
    Ok(StartConfig { zero: true, bending, random_fields: cfg.usize("random_starts")?, amplitude, seed })
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

pub fn execute(cfg: &Resolved, g: &Globals) -> Result<Outcome, CliError> {
    match cfg.command.as_str() {
        "validate" => validate(cfg, g),
        "homogenize" => homogenize(cfg, g),
        "quad-homogenize" => quad_homogenize(cfg, g),
        "expand" => expand(cfg, g),
        "diagram" => diagram(cfg, g),
        "counterexample1" => counterexample1(cfg, g),
        "counterexample2" => counterexample2(cfg, g),
        "splitting" => splitting(cfg, g),
        other => Err(CliError::Usage(format!("unknown subcommand '{other}'"))),
    }
}

fn validate(cfg: &Resolved, g: &Globals) -> Result<Outcome, CliError> {
    let w = density(cfg)?;
    let samples = cfg.usize("samples")?;
    if samples == 0 {
        return Err(CliError::Config("samples must be positive".into()));
    }
    let report = validate_class(&w, samples, g.seed);
    let mut csv = String::from("condition,passed,fitted_constant,detail\n");
    for c in &report.conditions {
        let fitted = c.fitted_constant.map(|v| format!("{v:e}")).unwrap_or_default();
        csv.push_str(&format!("{},{},{},\"{}\"\n", c.name, c.passed, fitted, c.detail.replace('"', "'")));
    }
    let status = if report.all_passed() { RunStatus::Ok } else { RunStatus::ValidationFailed };
    Ok(Outcome { report: to_value(&report), csv, extra: Vec::new(), status })
}

fn homogenize(cfg: &Resolved, g: &Globals) -> Result<Outcome, CliError> {
    let w = density(cfg)?;
    let f = cfg.mat("F", w.dim)?;
    let k_list = cfg.usize_list("k")?;
    let res = cfg.usize("res")?;
    for &k in &k_list {
        grid(w.dim, k, res)?;
    }
    let sc = starts(cfg, g.seed, cfg.bool("bending")?)?;
    let (points, results) = khom_curve(&w, &f, &k_list, res, &sc, &g.opts)?;
    let mut csv = String::from("k,energy,running_min,converged,start\n");
    for p in &points {
        csv.push_str(&format!("{},{:e},{:e},{},{}\n", p.k, p.energy, p.running_min, p.converged, p.start_label));
    }
    let mut extra = Vec::new();
    if let Some(best) = results.iter().min_by(|a, b| a.energy.total_cmp(&b.energy)) {
        let mut buf = Vec::new();
        best.corrector.write_csv(&mut buf)?;
        extra.push(("homogenize_corrector.csv".to_string(), buf));
    }
    let status = if results.iter().all(|r| r.converged) { RunStatus::Ok } else { RunStatus::NotConverged };
    let report = json!({ "density": w.label(), "f": to_value(&f), "curve": to_value(&points), "cells": to_value(&results) });
    Ok(Outcome { report, csv, extra, status })
}

fn quad_homogenize(cfg: &Resolved, g: &Globals) -> Result<Outcome, CliError> {
    let w = density(cfg)?;
    let q = w.quadratic_term().map_err(config_error)?;
    let res = cfg.usize("res")?;
    let hom = homogenized_tensor(&q, grid(w.dim, 1, res)?, &g.opts)?;
    let rows = hom.l_hom.to_rows();
    let mut csv = String::new();
    for r in &rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    let report = json!({
        "density": w.label(),
        "res": res,
        "l_hom": rows,
        "direction_energies": hom.direction_energies,
        "positive_semidefinite": hom.l_hom.is_positive_semidefinite(1e-10),
    });
    Ok(Outcome { report, csv, extra: Vec::new(), status: RunStatus::Ok })
}

fn expand(cfg: &Resolved, g: &Globals) -> Result<Outcome, CliError> {
    let w = density(cfg)?;
    let dir = cfg.mat("G", w.dim)?;
    let k = cfg.usize("k")?;
    let res = cfg.usize("res")?;
    let h = cfg.f64_list("h")?;
    grid(w.dim, k, res)?;
    let r = expansion_residuals(&w, &dir, k, &h, res, &g.opts)?;
    let status = if r.converged.iter().all(|c| *c) { RunStatus::Ok } else { RunStatus::NotConverged };
    Ok(Outcome { csv: r.to_csv(), report: to_value(&r), extra: Vec::new(), status })
}

fn diagram(cfg: &Resolved, g: &Globals) -> Result<Outcome, CliError> {
    let w = density(cfg)?;
    let scale = cfg.f64("load_scale")?;
    let load = match cfg.str("load") {
        "lift" => Load::AffineLift { g: Mat::unit(w.dim, 1, 0) * scale },
        "body" => {
            let mut f = [0.0; 3];
            f[1] = scale;
            Load::BodyForce { f }
        }
        "none" => Load::None,
        other => return Err(CliError::Config(format!("load = '{other}': expected lift, body or none"))),
    };
    let settings = DiagramSettings {
        eps_list: cfg.f64_list("eps")?,
        h_list: cfg.f64_list("h")?,
        cell_res: cfg.usize("cell_res")?,
        seed: g.seed,
    };
    let r = diagram_probe(&w, &load, &settings, &g.opts)?;
    let status = if r.rows.iter().all(|row| row.converged) { RunStatus::Ok } else { RunStatus::NotConverged };
    Ok(Outcome { csv: r.to_csv(), report: to_value(&r), extra: Vec::new(), status })
}

fn counterexample1(cfg: &Resolved, g: &Globals) -> Result<Outcome, CliError> {
    let alpha = cfg.f64("alpha")?;
    let deltas = cfg.f64_list("delta")?;
    let k_list = cfg.usize_list("k")?;
    let res = cfg.usize("res")?;
    Density::layered(BaseKind::Dist2, alpha, 2).map_err(config_error)?;
    for &k in &k_list {
        grid(2, k, res)?;
    }
    let sc = starts(cfg, g.seed, true)?;
    let r = counterexample1_pipeline(alpha, &deltas, &k_list, res, &sc, &g.opts)?;
    let status = if r.rows.iter().all(|row| row.curve.iter().all(|p| p.converged)) {
        RunStatus::Ok
    } else {
        RunStatus::NotConverged
    };
    Ok(Outcome { csv: r.to_csv(), report: to_value(&r), extra: Vec::new(), status })
}

fn counterexample2(cfg: &Resolved, g: &Globals) -> Result<Outcome, CliError> {
    let w = Density::prestressed(base_kind(cfg)?, cfg.f64("s")?, cfg.f64("rho")?).map_err(config_error)?;
    let dir = cfg.mat("G", 3)?;
    let k_list = cfg.usize_list("k")?;
    let h = cfg.f64_list("h")?;
    let res = cfg.usize("res")?;
    for &k in &k_list {
        grid(3, k, res)?;
    }
    let sc = starts(cfg, g.seed, false)?;
    let v = commutativity_probe(&w, &dir, &k_list, &h, res, &sc, &g.opts)?;
    let mut report = to_value(&v);
    report["expected_verdict"] = json!(Verdict::Fails);
    Ok(Outcome { csv: v.to_csv(), report, extra: Vec::new(), status: RunStatus::Ok })
}

fn splitting(cfg: &Resolved, g: &Globals) -> Result<Outcome, CliError> {
    let base = base_kind(cfg)?;
    let (s, rho) = (cfg.f64("s")?, cfg.f64("rho")?);
    Density::prestressed(base, s, rho).map_err(config_error)?;
    let k = cfg.usize("k")?;
    let res = cfg.usize("res")?;
    grid(3, k, res)?;
    let mut f_list = vec![Mat::identity(3)];
    f_list.extend(sample_near_identity(3, cfg.usize("samples")?, g.seed));
    let sc = starts(cfg, g.seed, false)?;
    let r = splitting_check(base, s, rho, k, res, &f_list, &sc, &g.opts)?;
    let status = if !r.all_passed() {
        RunStatus::ValidationFailed
    } else if r.rows.iter().all(|row| row.converged) {
        RunStatus::Ok
    } else {
        RunStatus::NotConverged
    };
    Ok(Outcome { csv: r.to_csv(), report: to_value(&r), extra: Vec::new(), status })
}
