//! Self-adjoint positive semidefinite operators.
//!
//! Every operator can be applied to a vector. Operators that also know
//! their eigenbasis expose it through [`SpectralBasis`], which unlocks
//! fractional powers and spectral measures. Coefficients in the eigenbasis
//! are complex so that the Fourier basis fits; the transforms are unitary.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalues at or below this fraction of the largest count as kernel.
pub const KERNEL_REL_THRESHOLD: f64 = 1e-12;

/// Largest admissible kernel component, relative to the vector norm, when a
/// negative power is requested.
pub const KERNEL_COMPONENT_TOL: f64 = 1e-10;

pub trait SelfAdjointOperator: fmt::Debug + Send + Sync {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn spectral(&self) -> Option<&dyn SpectralBasis> {
        None
    }
}

/// An orthonormal eigenbasis. `analyze` and `synthesize` are mutually
/// inverse unitary maps; coefficient `j` belongs to `eigenvalues()[j]`.
pub trait SpectralBasis: Send + Sync {
    fn eigenvalues(&self) -> &[f64];

    fn analyze(&self, x: &[f64]) -> Vec<Complex64>;

    fn synthesize(&self, coeffs: &[Complex64]) -> Vec<f64>;

    fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0f64, |m, &l| m.max(l))
    }

    fn kernel_threshold(&self) -> f64 {
        KERNEL_REL_THRESHOLD * self.max_eigenvalue()
    }

    fn is_kernel(&self, lambda: f64) -> bool {
        lambda <= self.kernel_threshold()
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

fn check_finite(x: &[f64], what: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// `diag(d)` in the standard basis.
#[derive(Debug, Clone)]
pub struct DiagonalOperator {
    diag: Vec<f64>,
    max: f64,
}

impl DiagonalOperator {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        check_finite(&diag, "diagonal")?;
        if let Some(&bad) = diag.iter().find(|&&d| d < 0.0) {
            return Err(Error::InvalidArgument(format!("diagonal entry {bad} is negative")));
        }
        let max = diag.iter().fold(0.0f64, |m, &d| m.max(d));
        Ok(Self { diag, max })
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }
}

impl SelfAdjointOperator for DiagonalOperator {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        Ok(self.diag.iter().zip(x).map(|(d, v)| d * v).collect())
    }

    fn spectral(&self) -> Option<&dyn SpectralBasis> {
        Some(self)
    }
}

impl SpectralBasis for DiagonalOperator {
    fn eigenvalues(&self) -> &[f64] {
        &self.diag
    }

    fn max_eigenvalue(&self) -> f64 {
        self.max
    }

    fn analyze(&self, x: &[f64]) -> Vec<Complex64> {
        x.iter().map(|&v| Complex64::new(v, 0.0)).collect()
    }

    fn synthesize(&self, coeffs: &[Complex64]) -> Vec<f64> {
        coeffs.iter().map(|c| c.re).collect()
    }
}

/// `-d²/dx² + c` on `n` equispaced points of the periodic interval
/// `[-L, L)`, diagonalised by the discrete Fourier transform. Mode `m`
/// has eigenvalue `(πm/L)² + c`.
#[derive(Clone)]
pub struct FourierOperator {
    n: usize,
    half_length: f64,
    shift: f64,
    eigenvalues: Vec<f64>,
    max: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FourierOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierOperator")
            .field("n", &self.n)
            .field("half_length", &self.half_length)
            .field("shift", &self.shift)
            .finish()
    }
}

impl FourierOperator {
    pub fn new(n: usize, half_length: f64, shift: f64) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "grid size {n} is not a power of two >= 2"
            )));
        }
        if !(half_length > 0.0) || !half_length.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "half length {half_length} must be positive"
            )));
        }
        if !(shift >= 0.0) || !shift.is_finite() {
            return Err(Error::InvalidArgument(format!("shift {shift} must be non-negative")));
        }
        let eigenvalues = (0..n)
            .map(|j| {
                let k = std::f64::consts::PI * Self::mode(n, j) as f64 / half_length;
                k * k + shift
            })
            .collect::<Vec<f64>>();
        let max = eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l));
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            half_length,
            shift,
            eigenvalues,
            max,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    /// Signed wavenumber index of FFT bin `j`.
    fn mode(n: usize, j: usize) -> i64 {
        if j < n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.n as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n).map(|j| -self.half_length + j as f64 * h).collect()
    }
}

impl SelfAdjointOperator for FourierOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, x.len())?;
        let mut c = self.analyze(x);
        for (cj, l) in c.iter_mut().zip(&self.eigenvalues) {
            *cj *= l;
        }
        Ok(self.synthesize(&c))
    }

    fn spectral(&self) -> Option<&dyn SpectralBasis> {
        Some(self)
    }
}

impl SpectralBasis for FourierOperator {
    fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    fn max_eigenvalue(&self) -> f64 {
        self.max
    }

    fn analyze(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let s = 1.0 / (self.n as f64).sqrt();
        buf.iter_mut().for_each(|c| *c *= s);
        buf
    }

    fn synthesize(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut buf = coeffs.to_vec();
        self.inverse.process(&mut buf);
        let s = 1.0 / (self.n as f64).sqrt();
        buf.iter().map(|c| c.re * s).collect()
    }
}

/// A dense symmetric matrix, applied by matrix-vector products only. It
/// deliberately has no spectral decomposition.
#[derive(Debug, Clone)]
pub struct DenseSymmetricOperator {
    n: usize,
    entries: Vec<f64>,
}

impl DenseSymmetricOperator {
    /// `entries` is row-major `n x n`; positive semidefiniteness is the
    /// caller's responsibility.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        check_dim(n * n, entries.len())?;
        check_finite(&entries, "matrix")?;
        let scale = entries.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (entries[i * n + j] - entries[j * n + i]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, entries })
    }
}

impl SelfAdjointOperator for DenseSymmetricOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n, x.len())?;
        Ok(self
            .entries
            .chunks_exact(self.n)
            .map(|row| linalg::dot(row, x))
            .collect())
    }
}

/// Norm of the component of `x` in the numerical kernel.
pub fn kernel_component_norm(basis: &dyn SpectralBasis, x: &[f64]) -> f64 {
    let c = basis.analyze(x);
    basis
        .eigenvalues()
        .iter()
        .zip(&c)
        .filter(|(&l, _)| basis.is_kernel(l))
        .map(|(_, cj)| cj.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `A^t x` through the eigenbasis. Kernel components are always removed,
/// so `t = 0` projects onto the orthogonal complement of the kernel. A
/// negative `t` requires `x` to be (numerically) kernel-free.
pub fn fractional_apply(op: &dyn SelfAdjointOperator, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    let basis = op.spectral().ok_or(Error::NotSpectral("fractional_apply"))?;
    check_dim(op.dim(), x.len())?;
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("exponent {t} is not finite")));
    }
    let mut c = basis.analyze(x);
    let mut kernel_sq = 0.0;
    for (cj, &l) in c.iter_mut().zip(basis.eigenvalues()) {
        if basis.is_kernel(l) {
            kernel_sq += cj.norm_sqr();
            *cj = Complex64::new(0.0, 0.0);
        } else if t != 0.0 {
            *cj *= l.powf(t);
        }
    }
    if t < 0.0 {
        let kernel = kernel_sq.sqrt();
        let xn = linalg::norm(x);
        if kernel > KERNEL_COMPONENT_TOL * xn {
            return Err(Error::PreconditionViolated(format!(
                "negative power of a vector with kernel component {kernel:e} (norm {xn:e})"
            )));
        }
    }
    Ok(basis.synthesize(&c))
}

/// Largest eigenvalue by power iteration from a fixed start vector.
pub fn estimate_norm(op: &dyn SelfAdjointOperator) -> Result<f64> {
    estimate_norm_with(op, 1000, 1e-6)
}

pub fn estimate_norm_with(op: &dyn SelfAdjointOperator, max_iter: usize, rel_tol: f64) -> Result<f64> {
    let n = op.dim();
    if n == 0 {
        return Ok(0.0);
    }
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919 + 13) % 101) as f64 / 101.0).collect();
    let xn = linalg::norm(&x);
    linalg::scale(1.0 / xn, &mut x);
    let mut estimate = 0.0;
    for _ in 0..max_iter {
        let mut y = op.apply(&x)?;
        let yn = linalg::norm(&y);
        if yn == 0.0 {
            return Ok(0.0);
        }
        let converged = (yn - estimate).abs() <= rel_tol * yn;
        estimate = yn;
        if converged {
            break;
        }
        linalg::scale(1.0 / yn, &mut y);
        x = y;
    }
    Ok(estimate)
}

/// Exact largest eigenvalue when the spectrum is known, otherwise the
/// power-iteration estimate.
pub fn operator_norm(op: &dyn SelfAdjointOperator) -> Result<f64> {
    match op.spectral() {
        Some(b) => Ok(b.max_eigenvalue()),
        None => estimate_norm(op),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn diagonal_apply() {
        let a = DiagonalOperator::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(a.apply(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn apply_rejects_wrong_length() {
        let a = DiagonalOperator::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(
            a.apply(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, actual: 1 })
        );
    }

    #[test]
    fn negative_diagonal_rejected() {
        assert!(DiagonalOperator::new(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn half_power_of_diagonal() {
        let a = DiagonalOperator::new(vec![4.0, 9.0]).unwrap();
        let y = fractional_apply(&a, 0.5, &[1.0, 1.0]).unwrap();
        assert!(close(&y, &[2.0, 3.0], 1e-15));
    }

    #[test]
    fn zero_power_projects_off_kernel() {
        let a = DiagonalOperator::new(vec![0.0, 5.0]).unwrap();
        assert_eq!(fractional_apply(&a, 0.0, &[3.0, 4.0]).unwrap(), vec![0.0, 4.0]);
    }

    #[test]
    fn negative_power_needs_kernel_free_vector() {
        let a = DiagonalOperator::new(vec![0.0, 2.0]).unwrap();
        assert!(matches!(
            fractional_apply(&a, -1.0, &[1.0, 1.0]),
            Err(Error::PreconditionViolated(_))
        ));
        let y = fractional_apply(&a, -1.0, &[0.0, 1.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.5]);
    }

    #[test]
    fn dense_operator_is_not_spectral() {
        let a = DenseSymmetricOperator::new(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        assert!(matches!(
            fractional_apply(&a, 0.5, &[1.0, 0.0]),
            Err(Error::NotSpectral(_))
        ));
        assert_eq!(a.apply(&[1.0, 0.0]).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn dense_operator_rejects_asymmetry() {
        assert!(DenseSymmetricOperator::new(2, vec![2.0, 1.0, 0.0, 2.0]).is_err());
    }

    #[test]
    fn fourier_rejects_bad_sizes() {
        assert!(FourierOperator::new(12, 1.0, 0.0).is_err());
        assert!(FourierOperator::new(16, 0.0, 0.0).is_err());
        assert!(FourierOperator::new(16, 1.0, -1.0).is_err());
    }

    #[test]
    fn fourier_matches_second_derivative_of_cosine() {
        // -u'' + c u for u = cos(2πx/L·m/2) on [-L, L) with mode m = 3.
        let (n, l, c) = (64, 2.0, 0.5);
        let a = FourierOperator::new(n, l, c).unwrap();
        let k = std::f64::consts::PI * 3.0 / l;
        let u: Vec<f64> = a.grid().iter().map(|x| (k * x).cos()).collect();
        let au = a.apply(&u).unwrap();
        let expect: Vec<f64> = u.iter().map(|v| (k * k + c) * v).collect();
        assert!(close(&au, &expect, 1e-11));
    }

    #[test]
    fn fourier_transform_is_unitary() {
        let a = FourierOperator::new(32, 3.0, 0.0).unwrap();
        let x: Vec<f64> = (0..32).map(|i| ((i * i) % 7) as f64 - 3.0).collect();
        let c = a.analyze(&x);
        let energy: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        assert!((energy - linalg::dot(&x, &x)).abs() < 1e-12 * energy);
        assert!(close(&a.synthesize(&c), &x, 1e-13));
    }

    #[test]
    fn fourier_norm_estimate_within_one_percent() {
        let (n, l, c) = (256, 10.0, 1.0);
        let a = FourierOperator::new(n, l, c).unwrap();
        let exact = (std::f64::consts::PI * (n / 2) as f64 / l).powi(2) + c;
        let est = estimate_norm(&a).unwrap();
        assert!((est - exact).abs() <= 0.01 * exact, "{est} vs {exact}");
        assert_eq!(operator_norm(&a).unwrap(), exact);
    }

    #[test]
    fn norm_estimate_of_dense_operator() {
        let a = DenseSymmetricOperator::new(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        assert!((estimate_norm(&a).unwrap() - 3.0).abs() < 1e-5);
    }

    #[test]
    fn semigroup_on_fourier() {
        let a = FourierOperator::new(64, 5.0, 1.0).unwrap();
        let x: Vec<f64> = a.grid().iter().map(|x| (-x * x).exp()).collect();
        let ab = fractional_apply(&a, 0.3, &fractional_apply(&a, 0.45, &x).unwrap()).unwrap();
        let direct = fractional_apply(&a, 0.75, &x).unwrap();
        let scale = linalg::norm(&direct);
        assert!(linalg::norm(&linalg::sub(&ab, &direct)) <= 1e-12 * scale);
    }
}
