//! Small dense linear algebra: Gaussian elimination and least squares.

use crate::error::{Error, Result};

/// Solves A x = b for a square row-major `a` by partial pivoting.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::LengthMismatch { expected: n, got: a.len() });
    }
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs())).max(1e-300);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("non-empty range");
        if m[piv][col].abs() <= 1e-14 * scale {
            return Err(Error::InvalidParameter("singular linear system".into()));
        }
        m.swap(col, piv);
        x.swap(col, piv);
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            if factor != 0.0 {
                for c in col..n {
                    m[row][c] -= factor * m[col][c];
                }
                x[row] -= factor * x[col];
            }
        }
    }
    for row in (0..n).rev() {
        let mut s = x[row];
        for c in row + 1..n {
            s -= m[row][c] * x[c];
        }
        x[row] = s / m[row][row];
    }
    Ok(x)
}

/// Least-squares fit with standard errors of the coefficients.
#[derive(Clone, Debug, serde::Serialize)]
pub struct LsqFit {
    pub coefficients: Vec<f64>,
    pub residual_norm: f64,
    pub std_errors: Vec<f64>,
}

/// Minimizes |A c − b| over c via the normal equations of the column-scaled
/// system (adequate for the handful of well-separated columns used here).
pub fn least_squares(a: &[Vec<f64>], b: &[f64]) -> Result<LsqFit> {
    let m = b.len();
    if a.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: a.len() });
    }
    let p = a.first().map_or(0, Vec::len);
    if p == 0 || m < p {
        return Err(Error::FitIllConditioned(m));
    }
    let scales: Vec<f64> = (0..p)
        .map(|j| a.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt().max(1e-300))
        .collect();
    let mut ata = vec![vec![0.0; p]; p];
    let mut atb = vec![0.0; p];
    for (row, &bi) in a.iter().zip(b) {
        for i in 0..p {
            let ai = row[i] / scales[i];
            atb[i] += ai * bi;
            for j in 0..p {
                ata[i][j] += ai * row[j] / scales[j];
            }
        }
    }
    let scaled = solve_dense(&ata, &atb)?;
    let coefficients: Vec<f64> = scaled.iter().zip(&scales).map(|(c, s)| c / s).collect();
    let mut rss = 0.0;
    for (row, &bi) in a.iter().zip(b) {
        let fit: f64 = row.iter().zip(&coefficients).map(|(x, c)| x * c).sum();
        rss += (fit - bi).powi(2);
    }
    let dof = (m - p).max(1) as f64;
    let sigma2 = rss / dof;
    let mut std_errors = Vec::with_capacity(p);
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        let col = solve_dense(&ata, &e)?;
        std_errors.push((sigma2 * col[j]).max(0.0).sqrt() / scales[j]);
    }
    Ok(LsqFit { coefficients, residual_norm: rss.sqrt(), std_errors })
}
