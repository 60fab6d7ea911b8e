//! Q1 finite elements on uniform grids: the periodic multi-cell kY and the
//! shared element/quadrature machinery used by the domain solvers.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::tensor::Mat;

const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // 1/(2√3)

/// Shape-function gradients of the reference Q1 element at its 2ⁿ Gauss points.
#[derive(Clone, Debug)]
pub struct ShapeTable {
    dim: usize,
    npe: usize,
    /// Physical gradients, indexed by q·npe + c.
    grads: Vec<[f64; 3]>,
    /// Reference coordinates of the Gauss points in [0,1]ⁿ.
    points: Vec<[f64; 3]>,
}

impl ShapeTable {
    pub fn new(dim: usize, element_size: f64) -> Self {
        let npe = 1 << dim;
        let gauss = [0.5 - GAUSS_OFFSET, 0.5 + GAUSS_OFFSET];
        let mut points = Vec::with_capacity(npe);
        for q in 0..npe {
            let mut p = [0.0; 3];
            for (d, slot) in p.iter_mut().enumerate().take(dim) {
                *slot = gauss[(q >> d) & 1];
            }
            points.push(p);
        }
        let mut grads = Vec::with_capacity(npe * npe);
        for p in &points {
            for c in 0..npe {
                let mut g = [0.0; 3];
                for (d, slot) in g.iter_mut().enumerate().take(dim) {
                    let mut v = if (c >> d) & 1 == 1 { 1.0 } else { -1.0 };
                    for e in 0..dim {
                        if e != d {
                            v *= if (c >> e) & 1 == 1 { p[e] } else { 1.0 - p[e] };
                        }
                    }
                    *slot = v / element_size;
                }
                grads.push(g);
            }
        }
        ShapeTable { dim, npe, grads, points }
    }

    #[inline]
    pub fn grad(&self, q: usize, c: usize) -> &[f64; 3] {
        &self.grads[q * self.npe + c]
    }

    pub fn point(&self, q: usize) -> &[f64; 3] {
        &self.points[q]
    }

    /// Value of the shape function of corner `c` at reference point `xi`.
    pub fn value_at(&self, c: usize, xi: &[f64; 3]) -> f64 {
        let mut v = 1.0;
        for (d, &x) in xi.iter().enumerate().take(self.dim) {
            v *= if (c >> d) & 1 == 1 { x } else { 1.0 - x };
        }
        v
    }
}

/// Element connectivity and quadrature of a uniform Q1 mesh.
#[derive(Clone, Debug)]
pub struct Q1Mesh {
    pub dim: usize,
    pub element_size: f64,
    pub node_count: usize,
    pub npe: usize,
    conn: Vec<u32>,
    origins: Vec<[f64; 3]>,
    pub shape: ShapeTable,
}

impl Q1Mesh {
    /// Builds a mesh with `elems[d]` elements along axis d and corner nodes
    /// looked up through `node_of`.
    pub fn structured(
        dim: usize,
        elems: [usize; 3],
        element_size: f64,
        node_count: usize,
        node_of: impl Fn([usize; 3]) -> usize,
    ) -> Self {
        let npe = 1 << dim;
        let ne: usize = elems.iter().take(dim).product();
        let mut conn = Vec::with_capacity(ne * npe);
        let mut origins = Vec::with_capacity(ne);
        let e2 = if dim == 3 { elems[2] } else { 1 };
        for i0 in 0..elems[0] {
            for i1 in 0..elems[1] {
                for i2 in 0..e2 {
                    let base = [i0, i1, i2];
                    origins.push([
                        i0 as f64 * element_size,
                        i1 as f64 * element_size,
                        if dim == 3 { i2 as f64 * element_size } else { 0.0 },
                    ]);
                    for c in 0..npe {
                        let mut idx = base;
                        for (d, v) in idx.iter_mut().enumerate().take(dim) {
                            *v += (c >> d) & 1;
                        }
                        conn.push(node_of(idx) as u32);
                    }
                }
            }
        }
        Q1Mesh { dim, element_size, node_count, npe, conn, origins, shape: ShapeTable::new(dim, element_size) }
    }

    pub fn element_count(&self) -> usize {
        self.origins.len()
    }

    pub fn quad_count(&self) -> usize {
        self.element_count() * self.npe
    }

    /// Physical weight of one quadrature point.
    pub fn quad_weight(&self) -> f64 {
        self.element_size.powi(self.dim as i32) / self.npe as f64
    }

    #[inline]
    pub fn nodes(&self, e: usize) -> &[u32] {
        &self.conn[e * self.npe..(e + 1) * self.npe]
    }

    pub fn quad_position(&self, e: usize, q: usize) -> [f64; 3] {
        let o = &self.origins[e];
        let p = self.shape.point(q);
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = o[d] + self.element_size * p[d];
        }
        x
    }

    pub fn element_origin(&self, e: usize) -> [f64; 3] {
        self.origins[e]
    }

    /// ∇u at quadrature point q of element e, for a node-major vector field `u`.
    #[inline]
    pub fn grad_at(&self, u: &[f64], e: usize, q: usize) -> Mat {
        let n = self.dim;
        let mut m = Mat::zeros(n);
        for (c, &node) in self.nodes(e).iter().enumerate() {
            let b = self.shape.grad(q, c);
            let base = node as usize * n;
            for i in 0..n {
                let ui = u[base + i];
                for j in 0..n {
                    m.add_to(i, j, ui * b[j]);
                }
            }
        }
        m
    }

    /// Adds factor·P:∇N_c into the nodal vector `g` for every corner of element e.
    #[inline]
    pub fn scatter(&self, g: &mut [f64], e: usize, q: usize, p: &Mat, factor: f64) {
        let n = self.dim;
        for (c, &node) in self.nodes(e).iter().enumerate() {
            let b = self.shape.grad(q, c);
            let base = node as usize * n;
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += p.get(i, j) * b[j];
                }
                g[base + i] += factor * s;
            }
        }
    }
}

/// The multi-cell kY = [0,k)ⁿ discretized with `res` elements per unit length.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PeriodicGrid {
    pub dim: usize,
    pub k: usize,
    pub res: usize,
}

impl PeriodicGrid {
    pub fn new(dim: usize, k: usize, res: usize) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidParameter(format!("dimension must be 2 or 3, got {dim}")));
        }
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if res < 2 || res % 2 != 0 {
            return Err(Error::InvalidParameter(format!("res must be a positive even integer, got {res}")));
        }
        Ok(PeriodicGrid { dim, k, res })
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.k * self.res
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    pub fn element_count(&self) -> usize {
        self.node_count()
    }

    pub fn quad_count(&self) -> usize {
        self.element_count() << self.dim
    }

    pub fn dof_count(&self) -> usize {
        self.node_count() * self.dim
    }

    pub fn measure(&self) -> f64 {
        (self.k as f64).powi(self.dim as i32)
    }

    pub fn node_index(&self, idx: [usize; 3]) -> usize {
        let m = self.nodes_per_axis();
        let mut out = 0;
        for &v in idx.iter().take(self.dim) {
            out = out * m + v % m;
        }
        out
    }

    pub fn node_coords(&self, node: usize) -> [usize; 3] {
        let m = self.nodes_per_axis();
        let mut idx = [0; 3];
        let mut rest = node;
        for d in (0..self.dim).rev() {
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

    pub fn mesh(&self) -> Q1Mesh {
        let m = self.nodes_per_axis();
        Q1Mesh::structured(self.dim, [m, m, m], 1.0 / self.res as f64, self.node_count(), |idx| {
            self.node_index(idx)
        })
    }

    pub fn with_k(&self, k: usize) -> Result<Self> {
        PeriodicGrid::new(self.dim, k, self.res)
    }
}

/// Periodic vector field sampled at the identified grid nodes, node-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicField {
    pub grid: PeriodicGrid,
    pub values: Vec<f64>,
}

impl PeriodicField {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        PeriodicField { grid, values: vec![0.0; grid.dof_count()] }
    }

    pub fn from_values(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.dof_count() {
            return Err(Error::LengthMismatch { expected: grid.dof_count(), got: values.len() });
        }
        Ok(PeriodicField { grid, values })
    }

    /// Samples `f(y)` at every node.
    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(&[f64; 3]) -> [f64; 3]) -> Self {
        let n = grid.dim;
        let mut values = vec![0.0; grid.dof_count()];
        for node in 0..grid.node_count() {
            let v = f(&grid.node_position(node));
            values[node * n..node * n + n].copy_from_slice(&v[..n]);
        }
        PeriodicField { grid, values }
    }

    pub fn node_value(&self, node: usize) -> &[f64] {
        let n = self.grid.dim;
        &self.values[node * n..node * n + n]
    }

    pub fn mean(&self) -> [f64; 3] {
        let n = self.grid.dim;
        let mut m = [0.0; 3];
        for chunk in self.values.chunks_exact(n) {
            for d in 0..n {
                m[d] += chunk[d];
            }
        }
        let count = self.grid.node_count() as f64;
        for v in m.iter_mut() {
            *v /= count;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Extends a field on kY to the multi-cell k′Y by periodic tiling; k′ must be a multiple of k.
    pub fn tile_to(&self, target: PeriodicGrid) -> Result<Self> {
        let g = self.grid;
        if target.dim != g.dim || target.res != g.res || target.k % g.k != 0 {
            return Err(Error::InvalidParameter(format!(
                "cannot tile a k={} field onto k={} (res {} vs {})",
                g.k, target.k, g.res, target.res
            )));
        }
        let n = g.dim;
        let mut values = vec![0.0; target.dof_count()];
        for node in 0..target.node_count() {
            let src = g.node_index(target.node_coords(node));
            values[node * n..node * n + n].copy_from_slice(&self.values[src * n..src * n + n]);
        }
        Ok(PeriodicField { grid: target, values })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let g = self.grid;
        writeln!(out, "dim,k,res")?;
        writeln!(out, "{},{},{}", g.dim, g.k, g.res)?;
        let names: Vec<String> = (1..=g.dim).map(|i| format!("u{i}")).collect();
        writeln!(out, "{}", names.join(","))?;
        for chunk in self.values.chunks_exact(g.dim) {
            let row: Vec<String> = chunk.iter().map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let bad = |m: &str| Error::Format(m.to_string());
        if lines.next().map(str::trim) != Some("dim,k,res") {
            return Err(bad("missing dim,k,res header"));
        }
        let dims: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing header values"))?
            .split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|e| bad(&e.to_string())))
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(bad("header needs three values"));
        }
        let grid = PeriodicGrid::new(dims[0], dims[1], dims[2])?;
        lines.next().ok_or_else(|| bad("missing column names"))?;
        let mut values = Vec::with_capacity(grid.dof_count());
        for line in lines.filter(|l| !l.trim().is_empty()) {
            for s in line.split(',') {
                values.push(s.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?);
            }
        }
        PeriodicField::from_values(grid, values)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(b"ELHF")?;
        for v in [self.grid.dim, self.grid.k, self.grid.res] {
            out.write_all(&(v as u32).to_le_bytes())?;
        }
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != b"ELHF" {
            return Err(Error::Format("bad magic".into()));
        }
        let mut header = [0usize; 3];
        for slot in header.iter_mut() {
            let mut b = [0u8; 4];
            input.read_exact(&mut b)?;
            *slot = u32::from_le_bytes(b) as usize;
        }
        let grid = PeriodicGrid::new(header[0], header[1], header[2])?;
        let mut values = Vec::with_capacity(grid.dof_count());
        let mut b = [0u8; 8];
        for _ in 0..grid.dof_count() {
            input.read_exact(&mut b)?;
            values.push(f64::from_le_bytes(b));
        }
        Ok(PeriodicField { grid, values })
    }
}

/// ∇u of the Q1 interpolant at every quadrature point, element-major.
pub fn gradient_at_quadrature(field: &PeriodicField) -> Vec<Mat> {
    let mesh = field.grid.mesh();
    gradient_on_mesh(&mesh, &field.values)
}

pub fn gradient_on_mesh(mesh: &Q1Mesh, u: &[f64]) -> Vec<Mat> {
    let mut out = Vec::with_capacity(mesh.quad_count());
    for e in 0..mesh.element_count() {
        for q in 0..mesh.npe {
            out.push(mesh.grad_at(u, e, q));
        }
    }
    out
}

/// Positions of the quadrature points in the layout of [`gradient_at_quadrature`].
pub fn quadrature_points(grid: &PeriodicGrid) -> Vec<[f64; 3]> {
    let mesh = grid.mesh();
    let mut out = Vec::with_capacity(mesh.quad_count());
    for e in 0..mesh.element_count() {
        for q in 0..mesh.npe {
            out.push(mesh.quad_position(e, q));
        }
    }
    out
}

/// ∫_{kY} f with the tensor-product Gauss rule; all weights are equal, so the
/// sum is formed first and scaled by kⁿ/#points once.
pub fn integrate(values: &[f64], grid: &PeriodicGrid) -> Result<f64> {
    if values.len() != grid.quad_count() {
        return Err(Error::LengthMismatch { expected: grid.quad_count(), got: values.len() });
    }
    let sum: f64 = values.iter().sum();
    Ok(sum / values.len() as f64 * grid.measure())
}

pub fn project_mean_zero(field: &PeriodicField) -> PeriodicField {
    let mut out = field.clone();
    project_mean_zero_in_place(&mut out.values, field.grid.dim);
    out
}

pub fn project_mean_zero_in_place(values: &mut [f64], dim: usize) {
    let count = (values.len() / dim) as f64;
    let mut mean = [0.0; 3];
    for chunk in values.chunks_exact(dim) {
        for d in 0..dim {
            mean[d] += chunk[d];
        }
    }
    for m in mean.iter_mut() {
        *m /= count;
    }
    for chunk in values.chunks_exact_mut(dim) {
        for d in 0..dim {
            chunk[d] -= mean[d];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn weights_sum_to_measure() {
        for (dim, k, res) in [(2, 1, 4), (2, 3, 10), (3, 2, 6)] {
            let g = PeriodicGrid::new(dim, k, res).unwrap();
            let ones = vec![1.0; g.quad_count()];
            assert_eq!(integrate(&ones, &g).unwrap(), g.measure());
        }
    }

    #[test]
    fn odd_resolution_rejected() {
        assert!(PeriodicGrid::new(2, 1, 15).is_err());
        assert!(PeriodicGrid::new(2, 0, 16).is_err());
    }

    #[test]
    fn sine_gradient_converges() {
        let err = |res: usize| {
            let g = PeriodicGrid::new(2, 1, res).unwrap();
            let f = PeriodicField::from_fn(g, |y| [(2.0 * PI * y[0]).sin(), 0.0, 0.0]);
            // Q1 gradients are second-order accurate at element centroids;
            // at the Gauss points themselves the error is first order.
            let grads = gradient_at_quadrature(&f);
            let h = 1.0 / res as f64;
            let mesh = g.mesh();
            grads
                .chunks_exact(4)
                .enumerate()
                .map(|(e, ms)| {
                    let y0 = mesh.element_origin(e)[0] + 0.5 * h;
                    let exact = 2.0 * PI * (2.0 * PI * y0).cos();
                    ms.iter().map(|m| (m.get(0, 0) - exact).abs()).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max)
                / (2.0 * PI)
        };
        let e64 = err(64);
        assert!(e64 < 1e-3, "rel error {e64}");
        assert!(err(128) <= 0.5 * e64);
    }

    #[test]
    fn layered_indicator_integrates_to_half() {
        let g = PeriodicGrid::new(2, 1, 16).unwrap();
        let chi: Vec<f64> = quadrature_points(&g)
            .iter()
            .map(|y| if (y[1] - y[1].floor()) < 0.5 { 1.0 } else { 0.0 })
            .collect();
        assert_eq!(integrate(&chi, &g).unwrap(), 0.5);
    }

    #[test]
    fn tiling_preserves_values() {
        let g1 = PeriodicGrid::new(2, 1, 4).unwrap();
        let f = PeriodicField::from_fn(g1, |y| [y[0] * (1.0 - y[0]), y[1], 0.0]);
        let f2 = f.tile_to(g1.with_k(2).unwrap()).unwrap();
        let grads1 = gradient_at_quadrature(&f);
        let grads2 = gradient_at_quadrature(&f2);
        let e1: f64 = grads1.iter().map(|m| m.norm_sq()).sum::<f64>() / grads1.len() as f64;
        let e2: f64 = grads2.iter().map(|m| m.norm_sq()).sum::<f64>() / grads2.len() as f64;
        assert!((e1 - e2).abs() < 1e-14);
    }

    #[test]
    fn binary_and_csv_round_trip() {
        let g = PeriodicGrid::new(2, 2, 4).unwrap();
        let f = PeriodicField::from_fn(g, |y| [y[0].sin(), y[1].cos() / 3.0, 0.0]);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(PeriodicField::read_binary(&buf[..]).unwrap(), f);
        let mut csv = Vec::new();
        f.write_csv(&mut csv).unwrap();
        assert_eq!(PeriodicField::read_csv(std::str::from_utf8(&csv).unwrap()).unwrap(), f);
    }
}
