//! Error functionals `ρ_σ(x) = ‖A^{σ/2}(x − P_S x)‖²` and convergence
//! monitors built on them.
//!
//! `ρ_0` is the squared error, `ρ_1` the energy and `ρ_2` the squared
//! residual. `ρ_2` is always taken from the recomputed residual `A x − g`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::InverseProblem;
use crate::linalg;
use crate::linop::{fractional_apply, SpectralBasis, KERNEL_COMPONENT_TOL};
use crate::measures::DiscreteSpectralMeasure;

/// Range atoms `(λ, |ê|²)`, norm of the kernel part, norm of the error.
type ErrorCoefficients = (Vec<(f64, f64)>, f64, f64);

/// Spectral coefficients of `x − known`, with the kernel part split off.
fn error_coefficients(problem: &InverseProblem, basis: &dyn SpectralBasis, x: &[f64]) -> Result<ErrorCoefficients> {
    let known = problem
        .known_solution()
        .ok_or_else(|| Error::PreconditionViolated("a known solution is required".into()))?;
    let e = linalg::sub(x, known);
    let c = basis.analyze(&e);
    let mut kernel = 0.0;
    let mut range = Vec::with_capacity(c.len());
    for (&l, cj) in basis.eigenvalues().iter().zip(&c) {
        if basis.is_kernel(l) {
            kernel += cj.norm_sqr();
        } else {
            range.push((l, cj.norm_sqr()));
        }
    }
    Ok((range, kernel.sqrt(), linalg::norm(&e)))
}

fn require_kernel_free(kernel: f64, norm: f64) -> Result<()> {
    if kernel > KERNEL_COMPONENT_TOL * norm {
        Err(Error::PreconditionViolated(format!(
            "error has kernel component {kernel:e} (norm {norm:e}); negative sigma is undefined"
        )))
    } else {
        Ok(())
    }
}

/// The spectral measure `μ_0` of the initial error `f_0 − f` with kernel
/// atoms removed; `μ_σ = λ^σ μ_0` and `ν_ξ = λ^{ξ+1} μ_0` derive from it.
///
/// The weights are read off the initial residual, `|R̂_0(λ)|²/λ²`, which is
/// the error the Krylov iteration actually sees. Going through a stored
/// solution instead perturbs the atoms that sit at the rounding level of
/// its transform, and the recursion for `s_N` amplifies that step by step.
pub fn initial_error_measure(problem: &InverseProblem) -> Result<DiscreteSpectralMeasure> {
    let basis = problem
        .operator()
        .spectral()
        .ok_or(Error::NotSpectral("initial_error_measure"))?;
    let r0 = problem.residual(problem.initial())?;
    let c = basis.analyze(&r0);
    let atoms: Vec<_> = basis
        .eigenvalues()
        .iter()
        .zip(&c)
        .filter(|(&l, _)| !basis.is_kernel(l))
        .map(|(&l, cj)| (l, cj.norm_sqr() / (l * l)))
        .collect();
    DiscreteSpectralMeasure::from_atoms(atoms)
}

/// `ρ_σ(x)`. Integer `σ ≥ 2` comes from the residual alone; `σ ∈ {0, 1}`
/// needs the known solution; other `σ` need the eigenbasis as well.
pub fn rho(problem: &InverseProblem, x: &[f64], sigma: f64) -> Result<f64> {
    crate::linop::check_dim(problem.dim(), x.len())?;
    if !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma = {sigma} is not finite")));
    }
    let op = problem.operator();
    if sigma == 2.0 {
        let r = problem.residual(x)?;
        return Ok(linalg::dot(&r, &r));
    }
    if let Some(basis) = op.spectral() {
        if problem.known_solution().is_some() {
            let (coeffs, kernel, norm) = error_coefficients(problem, basis, x)?;
            if sigma < 0.0 {
                require_kernel_free(kernel, norm)?;
            }
            return Ok(coeffs.iter().map(|&(l, w)| l.powf(sigma) * w).sum());
        }
    }
    if sigma >= 2.0 && sigma.fract() == 0.0 {
        let r = problem.residual(x)?;
        let mut y = r.clone();
        for _ in 0..(sigma as usize - 2) {
            y = op.apply(&y)?;
        }
        return Ok(linalg::dot(&r, &y));
    }
    let known = problem
        .known_solution()
        .ok_or_else(|| Error::PreconditionViolated(format!("rho with sigma = {sigma} needs a known solution")))?;
    let e = linalg::sub(x, known);
    if sigma == 0.0 {
        Ok(linalg::dot(&e, &e))
    } else if sigma == 1.0 {
        Ok(linalg::dot(&e, &problem.residual(x)?))
    } else {
        Err(Error::NotSpectral("rho with non-integer sigma"))
    }
}

/// `u_σ(x) = A^{σ/2}(x − P_S x)`, so that `ρ_σ(x) = ‖u_σ(x)‖²`.
pub fn u_sigma(problem: &InverseProblem, x: &[f64], sigma: f64) -> Result<Vec<f64>> {
    let op = problem.operator();
    let basis = op.spectral().ok_or(Error::NotSpectral("u_sigma"))?;
    let (_, kernel, norm) = error_coefficients(problem, basis, x)?;
    if sigma < 0.0 {
        require_kernel_free(kernel, norm)?;
    }
    let known = problem.known_solution().unwrap();
    fractional_apply(op, sigma / 2.0, &linalg::sub(x, known))
}

/// Whether `x − P_S x` lies in the domain of `A^{σ/2}` (only a question of
/// the kernel component in finite dimension), and `Σ λ^σ |ê|²` as an
/// indicator of how close to leaving it `x` is.
pub fn class_membership_indicator(problem: &InverseProblem, x: &[f64], sigma: f64) -> Result<(bool, f64)> {
    let basis = problem
        .operator()
        .spectral()
        .ok_or(Error::NotSpectral("class_membership_indicator"))?;
    let (coeffs, kernel, norm) = error_coefficients(problem, basis, x)?;
    let member = sigma >= 0.0 || kernel <= KERNEL_COMPONENT_TOL * norm;
    let magnitude = coeffs.iter().map(|&(l, w)| l.powf(sigma) * w).sum();
    Ok((member, magnitude))
}

/// One row of a convergence series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub n: usize,
    /// `(σ, ρ_σ(f_N))` for each requested `σ`.
    pub rho: Vec<(f64, f64)>,
    pub delta_n: Option<f64>,
    pub ritz_min: Option<f64>,
    pub ritz_max: Option<f64>,
    pub bound_chain_ok: Option<bool>,
}

impl ConvergenceRecord {
    pub fn rho(&self, sigma: f64) -> Option<f64> {
        self.rho.iter().find(|r| r.0 == sigma).map(|r| r.1)
    }

    /// `N² ρ_1`.
    pub fn rho1_n2(&self) -> Option<f64> {
        self.rho(1.0).map(|r| (self.n * self.n) as f64 * r)
    }
}

/// `max(last quarter) ≤ 2 max(first quarter)`; a finite-data stand-in for
/// boundedness.
pub fn quartile_bounded(series: &[f64]) -> bool {
    if series.is_empty() {
        return true;
    }
    let q = (series.len() / 4).max(1);
    let max = |s: &[f64]| s.iter().fold(0.0f64, |m, &v| m.max(v));
    max(&series[series.len() - q..]) <= 2.0 * max(&series[..q])
}

/// Least-squares slope of `ln y` against `ln x` over the positive points.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub const NP_MIN_RECORDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpRateReport {
    /// `(N, (2N+1)^{2(σ′−σ)} ρ_{σ′}(f_N) / ρ_σ(f_0))`
    pub series: Vec<(usize, f64)>,
    pub bounded: bool,
    pub supremum: f64,
    pub trend_slope: Option<f64>,
}

/// Watches the Nemirovskiy–Polyak rate `ρ_{σ′}(f_N) ≲ (2N+1)^{−2(σ′−σ)} ρ_σ(f_0)`.
/// `records` must contain the `N = 0` row and at least eight more.
pub fn np_rate_monitor(records: &[ConvergenceRecord], sigma: f64, sigma_prime: f64) -> Result<NpRateReport> {
    if !(sigma < sigma_prime) {
        return Err(Error::InvalidArgument(format!(
            "need sigma < sigma', got {sigma} and {sigma_prime}"
        )));
    }
    let initial = records
        .iter()
        .find(|r| r.n == 0)
        .and_then(|r| r.rho(sigma))
        .ok_or_else(|| Error::PreconditionViolated(format!("no N = 0 record with rho_{sigma}")))?;
    if !(initial > 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "rho_{sigma}(f_0) = {initial} is not positive"
        )));
    }
    let series: Vec<(usize, f64)> = records
        .iter()
        .filter(|r| r.n > 0)
        .filter_map(|r| {
            r.rho(sigma_prime).map(|v| {
                let w = (2.0 * r.n as f64 + 1.0).powf(2.0 * (sigma_prime - sigma));
                (r.n, w * v / initial)
            })
        })
        .collect();
    if series.len() < NP_MIN_RECORDS {
        return Err(Error::InsufficientRecords {
            needed: NP_MIN_RECORDS,
            got: series.len(),
        });
    }
    let values: Vec<f64> = series.iter().map(|s| s.1).collect();
    let points: Vec<(f64, f64)> = series.iter().map(|&(n, v)| (n as f64, v)).collect();
    Ok(NpRateReport {
        bounded: quartile_bounded(&values),
        supremum: values.iter().fold(0.0f64, |m, &v| m.max(v)),
        trend_slope: loglog_slope(&points),
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::DiagonalOperator;
    use std::sync::Arc;

    fn problem(d: &[f64], f: &[f64]) -> InverseProblem {
        let op = Arc::new(DiagonalOperator::new(d.to_vec()).unwrap());
        let g: Vec<f64> = d.iter().zip(f).map(|(a, b)| a * b).collect();
        InverseProblem::new(op, g, vec![0.0; d.len()])
            .unwrap()
            .with_known_solution(f.to_vec())
            .unwrap()
    }

    #[test]
    fn rho_of_first_cg_iterate() {
        let p = problem(&[1.0, 2.0], &[1.0, 1.0]);
        let f1 = [5.0 / 9.0, 10.0 / 9.0];
        assert!((rho(&p, &f1, 0.0).unwrap() - 17.0 / 81.0).abs() < 1e-15);
        assert!((rho(&p, &f1, 1.0).unwrap() - 2.0 / 9.0).abs() < 1e-15);
        // residual (-4/9, 2/9)
        assert!((rho(&p, &f1, 2.0).unwrap() - 20.0 / 81.0).abs() < 1e-15);
    }

    #[test]
    fn u_sigma_negative_power() {
        let p = problem(&[0.0, 2.0], &[0.0, 0.5]);
        let u = u_sigma(&p, &[0.0, 1.0], -2.0).unwrap();
        assert_eq!(u, vec![0.0, 0.25]);
    }

    #[test]
    fn u_sigma_rejects_kernel_error_for_negative_sigma() {
        let p = problem(&[0.0, 2.0], &[0.0, 0.5]);
        assert!(u_sigma(&p, &[1.0, 1.0], -2.0).is_err());
        assert!(u_sigma(&p, &[1.0, 1.0], 0.0).is_ok());
    }

    #[test]
    fn membership_and_magnitude() {
        let p = problem(&[1.0, 4.0], &[0.0, 0.0]);
        let (member, magnitude) = class_membership_indicator(&p, &[1.0, 1.0], -1.0).unwrap();
        assert!(member);
        assert_eq!(magnitude, 1.25);
        let q = problem(&[0.0, 4.0], &[0.0, 0.0]);
        assert!(!class_membership_indicator(&q, &[1.0, 1.0], -2.0).unwrap().0);
        assert!(class_membership_indicator(&q, &[1.0, 1.0], 0.5).unwrap().0);
    }

    #[test]
    fn rho_without_known_solution() {
        let op = Arc::new(DiagonalOperator::new(vec![1.0, 2.0]).unwrap());
        let p = InverseProblem::new(op, vec![1.0, 2.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(rho(&p, &[0.0, 0.0], 2.0).unwrap(), 5.0);
        assert_eq!(rho(&p, &[0.0, 0.0], 3.0).unwrap(), 9.0);
        assert!(rho(&p, &[0.0, 0.0], 0.0).is_err());
    }

    fn record(n: usize, rho0: f64, rho1: f64) -> ConvergenceRecord {
        ConvergenceRecord {
            n,
            rho: vec![(0.0, rho0), (1.0, rho1)],
            delta_n: None,
            ritz_min: None,
            ritz_max: None,
            bound_chain_ok: None,
        }
    }

    #[test]
    fn np_monitor_needs_eight_records() {
        let recs: Vec<_> = (0..8).map(|n| record(n, 1.0, 1.0)).collect();
        assert_eq!(
            np_rate_monitor(&recs, 0.0, 1.0).unwrap_err(),
            Error::InsufficientRecords { needed: 8, got: 7 }
        );
    }

    #[test]
    fn np_monitor_zero_series_is_bounded() {
        let mut recs = vec![record(0, 1.0, 1.0)];
        recs.extend((1..=12).map(|n| record(n, 0.0, 0.0)));
        let r = np_rate_monitor(&recs, 0.0, 1.0).unwrap();
        assert!(r.bounded);
        assert_eq!(r.trend_slope, None);
    }

    #[test]
    fn np_monitor_detects_growth() {
        let mut recs = vec![record(0, 1.0, 1.0)];
        recs.extend((1..=20).map(|n| record(n, 1.0, 1.0 / n as f64)));
        let r = np_rate_monitor(&recs, 0.0, 1.0).unwrap();
        assert!(!r.bounded);
        assert!(r.trend_slope.unwrap() > 0.5);
        let mut fast = vec![record(0, 1.0, 1.0)];
        fast.extend((1..=20).map(|n| record(n, 1.0, (n as f64).powi(-3))));
        assert!(np_rate_monitor(&fast, 0.0, 1.0).unwrap().bounded);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = (1..10).map(|n| (n as f64, (n as f64).powi(-2))).collect();
        assert!((loglog_slope(&pts).unwrap() + 2.0).abs() < 1e-12);
    }
}
