//! Small dense matrix algebra for n = 2, 3: deformation gradients, the
//! signed singular value decomposition, polar rotations, the distance to
//! SO(n), and symmetric fourth order tensors acting on n×n matrices.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Relative tolerance used to call a singular value zero.
pub const SINGULAR_TOL: f64 = 1e-12;

const JACOBI_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 60;

/// Dense n×n matrix with n ∈ {2, 3}.
///
/// Entries outside the leading n×n block are always zero.
#[derive(Clone, Copy, PartialEq)]
pub struct Mat {
    n: usize,
    e: [[f64; 3]; 3],
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        assert!(n == 2 || n == 3, "matrix dimension must be 2 or 3, got {n}");
        Mat { n, e: [[0.0; 3]; 3] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m.e[i][i] = 1.0;
        }
        m
    }

    /// The dyad e_i ⊗ e_j.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Mat::zeros(n);
        m.e[i][j] = 1.0;
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Mat::zeros(entries.len());
        for (i, v) in entries.iter().enumerate() {
            m.e[i][i] = *v;
        }
        m
    }

    /// Builds a matrix from n² row-major entries.
    pub fn from_row_major(n: usize, entries: &[f64]) -> Result<Self> {
        if !(n == 2 || n == 3) {
            return Err(Error::InvalidParameter(format!("matrix dimension {n} is not 2 or 3")));
        }
        if entries.len() != n * n {
            return Err(Error::LengthMismatch { expected: n * n, got: entries.len() });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("matrix entries must be finite".into()));
        }
        let mut m = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.e[i][j] = entries[i * n + j];
            }
        }
        Ok(m)
    }

    pub fn from_rows<const N: usize>(rows: [[f64; N]; N]) -> Self {
        let mut m = Mat::zeros(N);
        for i in 0..N {
            for j in 0..N {
                m.e[i][j] = rows[i][j];
            }
        }
        m
    }

    /// Rotation by angle `theta` in the plane.
    pub fn rotation2(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Mat::from_rows([[c, -s], [s, c]])
    }

    /// Rotation about the unit axis `axis` by `angle` (Rodrigues formula).
    pub fn rotation3(axis: [f64; 3], angle: f64) -> Self {
        let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let k = [axis[0] / norm, axis[1] / norm, axis[2] / norm];
        let kx = Mat::from_rows([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]]);
        Mat::identity(3) + kx * angle.sin() + (kx * kx) * (1.0 - angle.cos())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.e[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.e[i][j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.e[i][j] += v;
    }

    /// Row-major entries of the leading n×n block.
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                v.push(self.e[i][j]);
            }
        }
        v
    }

    /// Entry at flat row-major index `a = i·n + j`.
    #[inline]
    pub fn flat(&self, a: usize) -> f64 {
        self.e[a / self.n][a % self.n]
    }

    #[inline]
    pub fn set_flat(&mut self, a: usize, v: f64) {
        self.e[a / self.n][a % self.n] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Mat::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.e[j][i] = self.e[i][j];
            }
        }
        t
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.e[i][i]).sum()
    }

    pub fn det(&self) -> f64 {
        let e = &self.e;
        if self.n == 2 {
            e[0][0] * e[1][1] - e[0][1] * e[1][0]
        } else {
            e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1])
                - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0])
                + e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0])
        }
    }

    /// Frobenius inner product ⟨A, B⟩ = tr(AᵀB).
    #[inline]
    pub fn dot(&self, other: &Mat) -> f64 {
        debug_assert_eq!(self.n, other.n);
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.e[i][j] * other.e[i][j];
            }
        }
        s
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn sym(&self) -> Self {
        (*self + self.transpose()) * 0.5
    }

    pub fn skw(&self) -> Self {
        (*self - self.transpose()) * 0.5
    }

    pub fn is_finite(&self) -> bool {
        self.e.iter().flatten().all(|v| v.is_finite())
    }

    /// Column `j` as a 3-vector (trailing entries zero for n = 2).
    pub fn column(&self, j: usize) -> [f64; 3] {
        [self.e[0][j], self.e[1][j], self.e[2][j]]
    }

    pub fn set_column(&mut self, j: usize, c: [f64; 3]) {
        for i in 0..self.n {
            self.e[i][j] = c[i];
        }
    }

    /// Max-norm distance between two matrices.
    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max((self.e[i][j] - other.e[i][j]).abs());
            }
        }
        m
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<f64>> = (0..self.n).map(|i| self.e[i][..self.n].to_vec()).collect();
        write!(f, "Mat{rows:?}")
    }
}

impl Serialize for Mat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..self.n).map(|i| self.e[i][..self.n].to_vec()).collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("matrix rows must be square"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Mat::from_row_major(n, &flat).map_err(serde::de::Error::custom)
    }
}

impl Add for Mat {
    type Output = Mat;
    #[inline]
    fn add(mut self, rhs: Mat) -> Mat {
        self += rhs;
        self
    }
}

impl AddAssign for Mat {
    #[inline]
    fn add_assign(&mut self, rhs: Mat) {
        debug_assert_eq!(self.n, rhs.n);
        for i in 0..3 {
            for j in 0..3 {
                self.e[i][j] += rhs.e[i][j];
            }
        }
    }
}

impl Sub for Mat {
    type Output = Mat;
    #[inline]
    fn sub(mut self, rhs: Mat) -> Mat {
        self -= rhs;
        self
    }
}

impl SubAssign for Mat {
    #[inline]
    fn sub_assign(&mut self, rhs: Mat) {
        debug_assert_eq!(self.n, rhs.n);
        for i in 0..3 {
            for j in 0..3 {
                self.e[i][j] -= rhs.e[i][j];
            }
        }
    }
}

impl Neg for Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self * -1.0
    }
}

impl Mul<f64> for Mat {
    type Output = Mat;
    #[inline]
    fn mul(mut self, s: f64) -> Mat {
        for row in self.e.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        self
    }
}

impl Mul<Mat> for f64 {
    type Output = Mat;
    fn mul(self, m: Mat) -> Mat {
        m * self
    }
}

impl Mul for Mat {
    type Output = Mat;
    #[inline]
    fn mul(self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.n, rhs.n);
        let mut p = Mat::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let mut s = 0.0;
                for k in 0..self.n {
                    s += self.e[i][k] * rhs.e[k][j];
                }
                p.e[i][j] = s;
            }
        }
        p
    }
}

/// Outcome classification of a polar decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolarFlag {
    Regular,
    /// F has a zero singular value; the distance is still well defined.
    SingularInput,
    /// The nearest rotation is not unique; any minimizer was returned.
    DegenerateMinimizer,
}

/// Signed singular value decomposition F = U·diag(σ)·Vᵀ with U, V ∈ SO(n),
/// σ₁ ≥ σ₂ ≥ |σₙ| and σₙ < 0 exactly when det F < 0.
#[derive(Clone, Copy, Debug)]
pub struct SignedSvd {
    pub u: Mat,
    pub sigma: [f64; 3],
    pub v: Mat,
}

#[derive(Clone, Copy, Debug)]
pub struct Polar {
    pub rotation: Mat,
    pub signed_singular_values: [f64; 3],
    pub flag: PolarFlag,
}

fn classify(n: usize, sigma: &[f64; 3]) -> PolarFlag {
    let scale = sigma[0].abs().max(1.0);
    let last = sigma[n - 1];
    if last.abs() <= SINGULAR_TOL * scale {
        // A zero singular value only spoils uniqueness when the next one is zero too.
        if n == 2 && sigma[0] <= SINGULAR_TOL * scale {
            return PolarFlag::DegenerateMinimizer;
        }
        if n == 3 && sigma[1] <= SINGULAR_TOL * scale {
            return PolarFlag::DegenerateMinimizer;
        }
        return PolarFlag::SingularInput;
    }
    let pair = if n == 2 { sigma[0] + sigma[1] } else { sigma[1] + sigma[2] };
    if pair <= SINGULAR_TOL * scale {
        PolarFlag::DegenerateMinimizer
    } else {
        PolarFlag::Regular
    }
}

/// Closed-form data for n = 2: writing F = [[a, b], [c, d]], the conformal
/// part has modulus p = |(a+d, c−b)| and the anticonformal part q = |(a−d, b+c)|.
#[inline]
fn conformal_parts(f: &Mat) -> (f64, f64, f64, f64) {
    let (a, b, c, d) = (f.e[0][0], f.e[0][1], f.e[1][0], f.e[1][1]);
    let (x, y) = (a + d, c - b);
    let p = x.hypot(y);
    let q = (a - d).hypot(b + c);
    (p, q, x, y)
}

/// Signed SVD: closed form for n = 2, one-sided Jacobi for n = 3.
pub fn signed_svd(f: &Mat) -> SignedSvd {
    if f.n == 2 {
        svd2(f)
    } else {
        svd3(f)
    }
}

fn svd2(f: &Mat) -> SignedSvd {
    let (a, b, c, d) = (f.e[0][0], f.e[0][1], f.e[1][0], f.e[1][1]);
    let (p, q, _, _) = conformal_parts(f);
    let phi = (c - b).atan2(a + d);
    let chi = (b + c).atan2(a - d);
    let alpha = 0.5 * (phi + chi);
    let beta = 0.5 * (chi - phi);
    SignedSvd {
        u: Mat::rotation2(alpha),
        sigma: [0.5 * (p + q), 0.5 * (p - q), 0.0],
        v: Mat::rotation2(beta),
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Any unit vector orthogonal to the unit vector `a`.
fn orthogonal_unit(a: [f64; 3]) -> [f64; 3] {
    let trial = if a[0].abs() < 0.6 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let c = cross(a, trial);
    let n = dot3(c, c).sqrt();
    scale3(c, 1.0 / n)
}

fn svd3(f: &Mat) -> SignedSvd {
    // One-sided Jacobi: rotate columns of A = F·V until mutually orthogonal.
    let mut a = *f;
    let mut v = Mat::identity(3);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let ci = a.column(i);
            let cj = a.column(j);
            let alpha = dot3(ci, ci);
            let beta = dot3(cj, cj);
            let gamma = dot3(ci, cj);
            if gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() || gamma == 0.0 {
                continue;
            }
            rotated = true;
            let zeta = (beta - alpha) / (2.0 * gamma);
            let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
            let cs = 1.0 / (1.0 + t * t).sqrt();
            let sn = cs * t;
            for m in [&mut a, &mut v] {
                for r in 0..3 {
                    let x = m.e[r][i];
                    let y = m.e[r][j];
                    m.e[r][i] = cs * x - sn * y;
                    m.e[r][j] = sn * x + cs * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    // Sort columns by norm, descending.
    let mut order = [0usize, 1, 2];
    let norms = [0, 1, 2].map(|j| dot3(a.column(j), a.column(j)).sqrt());
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap_or(std::cmp::Ordering::Equal));
    let mut a_sorted = Mat::zeros(3);
    let mut v_sorted = Mat::zeros(3);
    for (dst, &src) in order.iter().enumerate() {
        a_sorted.set_column(dst, a.column(src));
        v_sorted.set_column(dst, v.column(src));
    }
    let mut a = a_sorted;
    let mut v = v_sorted;
    if v.det() < 0.0 {
        v.set_column(2, scale3(v.column(2), -1.0));
        a.set_column(2, scale3(a.column(2), -1.0));
    }
    let s0 = dot3(a.column(0), a.column(0)).sqrt();
    let scale = s0.max(f64::MIN_POSITIVE);
    let u0 = if s0 > SINGULAR_TOL * scale && s0 > 0.0 {
        scale3(a.column(0), 1.0 / s0)
    } else {
        [1.0, 0.0, 0.0]
    };
    let c1 = a.column(1);
    let s1_raw = dot3(c1, c1).sqrt();
    let u1 = if s1_raw > SINGULAR_TOL * s0.max(1.0) {
        // Re-orthogonalize against u0 to absorb Jacobi round-off.
        let proj = dot3(c1, u0);
        let w = [c1[0] - proj * u0[0], c1[1] - proj * u0[1], c1[2] - proj * u0[2]];
        scale3(w, 1.0 / dot3(w, w).sqrt())
    } else {
        orthogonal_unit(u0)
    };
    let u2 = cross(u0, u1);
    let mut u = Mat::zeros(3);
    u.set_column(0, u0);
    u.set_column(1, u1);
    u.set_column(2, u2);
    let sigma = [dot3(a.column(0), u0), dot3(a.column(1), u1), dot3(a.column(2), u2)];
    SignedSvd { u, sigma, v }
}

/// Nearest rotation to F in the Frobenius norm, with the signed singular values.
pub fn polar(f: &Mat) -> Polar {
    if f.n == 2 {
        let (p, q, x, y) = conformal_parts(f);
        let sigma = [0.5 * (p + q), 0.5 * (p - q), 0.0];
        let flag = classify(2, &sigma);
        let rotation = if p > SINGULAR_TOL * p.max(q).max(1.0) {
            Mat::from_rows([[x / p, -y / p], [y / p, x / p]])
        } else {
            Mat::identity(2)
        };
        return Polar { rotation, signed_singular_values: sigma, flag };
    }
    let svd = svd3(f);
    let rotation = svd.u * svd.v.transpose();
    Polar { rotation, signed_singular_values: svd.sigma, flag: classify(3, &svd.sigma) }
}

/// R ∈ SO(n) minimizing |F − R|.
pub fn polar_rotation(f: &Mat) -> Mat {
    polar(f).rotation
}

/// dist²(F, SO(n)) = Σᵢ (σᵢ − 1)² with signed singular values.
#[inline]
pub fn dist2_so(f: &Mat) -> f64 {
    if f.n == 2 {
        // max over SO(2) of tr(RᵀF) equals p.
        let (p, _, _, _) = conformal_parts(f);
        return (f.norm_sq() - 2.0 * p + 2.0).max(0.0);
    }
    let s = svd3(f).sigma;
    (s[0] - 1.0).powi(2) + (s[1] - 1.0).powi(2) + (s[2] - 1.0).powi(2)
}

pub fn sym(f: &Mat) -> Mat {
    f.sym()
}

pub fn skw(f: &Mat) -> Mat {
    f.skw()
}

/// Symmetric fourth order tensor, stored as an n²×n² array acting on
/// row-major flattened matrices.
#[derive(Clone, PartialEq)]
pub struct SymTensor4 {
    n: usize,
    c: [[f64; 9]; 9],
}

impl fmt::Debug for SymTensor4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymTensor4{:?}", self.to_rows())
    }
}

impl Serialize for SymTensor4 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl SymTensor4 {
    pub fn zeros(n: usize) -> Self {
        assert!(n == 2 || n == 3);
        SymTensor4 { n, c: [[0.0; 9]; 9] }
    }

    /// The identity map G ↦ G, so ⟨𝕃G, G⟩ = |G|².
    pub fn identity(n: usize) -> Self {
        let mut t = SymTensor4::zeros(n);
        for a in 0..n * n {
            t.c[a][a] = 1.0;
        }
        t
    }

    /// The projection G ↦ sym G, so ⟨𝕃G, G⟩ = |sym G|².
    pub fn sym_projector(n: usize) -> Self {
        let mut t = SymTensor4::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let a = i * n + j;
                let b = j * n + i;
                t.c[a][a] += 0.5;
                t.c[a][b] += 0.5;
            }
        }
        t
    }

    /// Builds the tensor from an n²×n² array; the array is symmetrized.
    pub fn from_rows(n: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let m = n * n;
        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
            return Err(Error::LengthMismatch { expected: m, got: rows.len() });
        }
        let mut t = SymTensor4::zeros(n);
        for a in 0..m {
            for b in 0..m {
                t.c[a][b] = 0.5 * (rows[a][b] + rows[b][a]);
            }
        }
        Ok(t)
    }

    /// Recovers 𝕃 from a quadratic form via ⟨𝕃F,G⟩ = (Q(F+G) − Q(F) − Q(G))/2.
    pub fn from_quadratic(n: usize, q: impl Fn(&Mat) -> f64) -> Self {
        let m = n * n;
        let basis: Vec<Mat> = (0..m).map(|a| Mat::unit(n, a / n, a % n)).collect();
        let diag: Vec<f64> = basis.iter().map(&q).collect();
        let mut t = SymTensor4::zeros(n);
        for a in 0..m {
            t.c[a][a] = diag[a];
            for b in (a + 1)..m {
                let v = 0.5 * (q(&(basis[a] + basis[b])) - diag[a] - diag[b]);
                t.c[a][b] = v;
                t.c[b][a] = v;
            }
        }
        t
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        self.c[a][b]
    }

    pub fn set_entry(&mut self, a: usize, b: usize, v: f64) {
        self.c[a][b] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        let m = self.n * self.n;
        (0..m).map(|a| self.c[a][..m].to_vec()).collect()
    }

    /// 𝕃G.
    #[inline]
    pub fn apply(&self, g: &Mat) -> Mat {
        let n = self.n;
        let m = n * n;
        let mut flat = [0.0; 9];
        for (a, slot) in flat.iter_mut().enumerate().take(m) {
            *slot = g.e[a / n][a % n];
        }
        let mut out = Mat::zeros(n);
        for a in 0..m {
            let row = &self.c[a];
            let mut s = 0.0;
            for b in 0..m {
                s += row[b] * flat[b];
            }
            out.e[a / n][a % n] = s;
        }
        out
    }

    #[inline]
    pub fn bilinear(&self, g: &Mat, h: &Mat) -> f64 {
        self.apply(g).dot(h)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut t = self.clone();
        for row in t.c.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        t
    }

    pub fn max_asymmetry(&self) -> f64 {
        let m = self.n * self.n;
        let mut worst: f64 = 0.0;
        for a in 0..m {
            for b in 0..m {
                worst = worst.max((self.c[a][b] - self.c[b][a]).abs());
            }
        }
        worst
    }

    /// Eigenvalues of the n²×n² array, ascending (cyclic Jacobi).
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = self.n * self.n;
        let mut a: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| 0.5 * (self.c[i][j] + self.c[j][i])).collect()).collect();
        for _ in 0..100 {
            let off: f64 = (0..m).flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
            let diag: f64 = (0..m).map(|i| a[i][i] * a[i][i]).sum();
            if off <= 1e-30 * diag.max(1e-300) {
                break;
            }
            for p in 0..m {
                for q in (p + 1)..m {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..m {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..m {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..m).map(|i| a[i][i]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    pub fn is_positive_semidefinite(&self, tol: f64) -> bool {
        let ev = self.eigenvalues();
        let scale = ev.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        ev[0] >= -tol * scale
    }
}

impl Add for &SymTensor4 {
    type Output = SymTensor4;
    fn add(self, rhs: &SymTensor4) -> SymTensor4 {
        let mut t = self.clone();
        for a in 0..9 {
            for b in 0..9 {
                t.c[a][b] += rhs.c[a][b];
            }
        }
        t
    }
}

/// ⟨𝕃G, G⟩.
#[inline]
pub fn quad_value(l: &SymTensor4, g: &Mat) -> f64 {
    l.bilinear(g, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polar_of_identity_and_spd() {
        assert_eq!(polar_rotation(&Mat::identity(2)), Mat::identity(2));
        let r = polar_rotation(&Mat::diag(&[2.0, 1.0]));
        assert!(r.max_abs_diff(&Mat::identity(2)) < 1e-15);
        let r3 = polar_rotation(&Mat::diag(&[3.0, 2.0, 0.5]));
        assert!(r3.max_abs_diff(&Mat::identity(3)) < 1e-14);
    }

    #[test]
    fn dist2_of_simple_matrices() {
        assert_relative_eq!(dist2_so(&Mat::diag(&[2.0, 1.0])), 1.0, epsilon = 1e-15);
        assert_relative_eq!(dist2_so(&Mat::diag(&[1.0, -1.0])), 4.0, epsilon = 1e-14);
        assert_relative_eq!(dist2_so(&Mat::diag(&[1.0, 1.0, -1.0])), 4.0, epsilon = 1e-14);
        assert!(dist2_so(&Mat::rotation2(0.7)) < 1e-28);
        assert!(dist2_so(&Mat::rotation3([1.0, 2.0, -0.5], 1.1)) < 1e-26);
    }

    #[test]
    fn reflection_is_flagged_degenerate() {
        // diag(1,-1): σ = (1, -1) so σ₁ + σ₂ = 0 and every rotation angle ties.
        let p = polar(&Mat::diag(&[1.0, -1.0]));
        assert_eq!(p.flag, PolarFlag::DegenerateMinimizer);
        assert_relative_eq!((Mat::diag(&[1.0, -1.0]) - p.rotation).norm_sq(), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_singular_value_is_flagged() {
        let p = polar(&Mat::diag(&[2.0, 0.0]));
        assert_eq!(p.flag, PolarFlag::SingularInput);
        assert_relative_eq!(dist2_so(&Mat::diag(&[2.0, 0.0])), 2.0, epsilon = 1e-14);
        let p3 = polar(&Mat::diag(&[2.0, 1.0, 0.0]));
        assert_eq!(p3.flag, PolarFlag::SingularInput);
        assert!((p3.rotation.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sym_skw_split() {
        let f = Mat::from_rows([[0.0, 1.0], [0.0, 0.0]]);
        assert_eq!(sym(&f), Mat::from_rows([[0.0, 0.5], [0.5, 0.0]]));
        assert_eq!(sym(&Mat::identity(3)), Mat::identity(3));
        assert_eq!(skw(&Mat::identity(3)), Mat::zeros(3));
        assert_eq!(sym(&f) + skw(&f), f);
    }

    #[test]
    fn quad_value_examples() {
        let g = Mat::from_rows([[0.3, -1.0], [2.0, 0.5]]);
        assert_relative_eq!(quad_value(&SymTensor4::identity(2), &g), g.norm_sq(), epsilon = 1e-14);
        let w = Mat::from_rows([[0.0, -1.5], [1.5, 0.0]]);
        assert_eq!(quad_value(&SymTensor4::sym_projector(2), &w), 0.0);
        let l = SymTensor4::from_quadratic(3, |m| m.norm_sq() + 3.0 * m.get(0, 1) * m.get(2, 2));
        assert_eq!(quad_value(&l, &Mat::zeros(3)), 0.0);
    }

    #[test]
    fn sym_projector_eigenvalues() {
        let ev = SymTensor4::sym_projector(3).eigenvalues();
        assert_eq!(ev.len(), 9);
        assert!(ev[..3].iter().all(|v| v.abs() < 1e-14));
        assert!(ev[3..].iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn svd3_reconstructs() {
        let f = Mat::from_rows([[0.3, -1.2, 0.4], [2.0, 0.1, -0.7], [0.5, 0.9, -1.1]]);
        let s = signed_svd(&f);
        let rebuilt = s.u * Mat::diag(&s.sigma) * s.v.transpose();
        assert!(rebuilt.max_abs_diff(&f) < 1e-13);
        assert!((s.u.det() - 1.0).abs() < 1e-13 && (s.v.det() - 1.0).abs() < 1e-13);
        assert_eq!(s.sigma[2] < 0.0, f.det() < 0.0);
    }

    #[test]
    fn svd2_reconstructs() {
        let f = Mat::from_rows([[0.3, -1.2], [2.0, 0.1]]);
        let s = signed_svd(&f);
        let rebuilt = s.u * Mat::diag(&s.sigma[..2]) * s.v.transpose();
        assert!(rebuilt.max_abs_diff(&f) < 1e-14);
    }
}
