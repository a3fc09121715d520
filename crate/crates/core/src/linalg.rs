//! Small dense kernels shared by the solvers: vector arithmetic, a
//! Cholesky factorisation that stops at the largest positive definite
//! leading block, and eigenvalues of symmetric tridiagonal matrices.

use crate::error::{Error, Result};

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    // Scaled to survive the tiny residuals near finite termination.
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

/// `y += a * x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn scale(a: f64, x: &mut [f64]) {
    for v in x {
        *v *= a;
    }
}

/// Two passes of classical Gram-Schmidt against an orthonormal set.
pub fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            axpy(-c, q, v);
        }
    }
}

/// Lower Cholesky factor of the largest leading block of `m` that is
/// numerically positive definite. `m` is row-major and square.
pub struct LeadingCholesky {
    l: Vec<Vec<f64>>,
}

impl LeadingCholesky {
    pub fn factor(m: &[Vec<f64>]) -> Self {
        let n = m.len();
        let mut l: Vec<Vec<f64>> = Vec::with_capacity(n);
        for j in 0..n {
            let mut row = vec![0.0; j + 1];
            for k in 0..j {
                let s: f64 = (0..k).map(|p| row[p] * l[k][p]).sum();
                row[k] = (m[j][k] - s) / l[k][k];
            }
            let d = m[j][j] - row[..j].iter().map(|v| v * v).sum::<f64>();
            if !(d > 16.0 * f64::EPSILON * m[j][j].abs()) || !d.is_finite() {
                break;
            }
            row[j] = d.sqrt();
            l.push(row);
        }
        Self { l }
    }

    /// Size of the factored leading block.
    pub fn rank(&self) -> usize {
        self.l.len()
    }

    /// Solves the leading `rank x rank` system; `b` may be longer.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.rank();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let s: f64 = (0..i).map(|k| self.l[i][k] * y[k]).sum();
            y[i] = (b[i] - s) / self.l[i][i];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| self.l[k][i] * y[k]).sum();
            y[i] = (y[i] - s) / self.l[i][i];
        }
        y
    }
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `diag`
/// and off-diagonal `off` (`off.len() + 1 == diag.len()`), ascending.
/// Implicit QL with Wilkinson shifts.
pub fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if off.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            actual: off.len(),
        });
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::PreconditionViolated(
                    "tridiagonal QL iteration did not converge".into(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(f64::total_cmp);
    Ok(d)
}
