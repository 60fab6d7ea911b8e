//! wasm-bindgen exports used by the static page in `www/`.

use elhom_core::analysis::laminate_stiffness;
use elhom_core::cell::{bending_ansatz, cell_energy};
use elhom_core::tensor::{dist2_so, polar_rotation};
use elhom_core::{BaseKind, Density, Mat, PeriodicGrid, PhaseMask, SolverOptions};
use wasm_bindgen::prelude::*;

fn js_err(e: elhom_core::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Squared distance of [[a, b], [c, d]] to SO(2) and the angle of its polar rotation.
#[wasm_bindgen]
pub fn distance_to_rotations(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let f = Mat::from_rows([[a, b], [c, d]]);
    let r = polar_rotation(&f);
    vec![dist2_so(&f), r.get(1, 0).atan2(r.get(0, 0))]
}

/// Homogenized stiffness at e₁⊗e₁ of the stiff/soft laminate for each soft-phase
/// stiffness in `alphas`.
#[wasm_bindgen]
pub fn laminate_curve(alphas: &[f64], res: usize) -> Result<Vec<f64>, JsValue> {
    let opts = SolverOptions::default();
    alphas.iter().map(|&a| laminate_stiffness(a, res, &opts).map_err(js_err)).collect()
}

/// Cell energy of the bending ansatz for F = diag(1 − δ, 1) under the dist²
/// laminate with soft phase α, next to the quadratic prediction qδ².
/// Returns [ansatz energy, qδ², minimal det].
#[wasm_bindgen]
pub fn bending_energy(delta: f64, k: usize, alpha: f64, res: usize) -> Result<Vec<f64>, JsValue> {
    let w = Density::layered(BaseKind::Dist2, alpha, 2).map_err(js_err)?;
    let grid = PeriodicGrid::new(2, k, res).map_err(js_err)?;
    let field = bending_ansatz(delta, k, grid).map_err(js_err)?;
    let mesh = grid.mesh();
    let f = Mat::diag(&[1.0 - delta, 1.0]);
    let energy = cell_energy(&w, &f, &mesh, grid, PhaseMask::All);
    let value = energy.value(&field.values).unwrap_or(f64::INFINITY);
    let q = laminate_stiffness(alpha, res, &SolverOptions::default()).map_err(js_err)?;
    Ok(vec![value, q * delta * delta, energy.min_det(&field.values)])
}
