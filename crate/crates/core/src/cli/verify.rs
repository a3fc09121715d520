//! The consistency gate plus a battery of structural checks on one test
//! problem, each reported as a named pass/fail line.

use std::fmt;

use super::testcase::{build_test_case, CustomSpec, TestId};
use crate::diagnostics::{initial_error_measure, rho};
use crate::error::Result;
use crate::krylov::{theta_iterates, theta_iterates_spectral, Tolerances};
use crate::linalg;
use crate::linop::{fractional_apply, kernel_component_norm};
use crate::measures::weight_by_power;
use crate::orthopoly::{
    bound_chain, check_monotonicity, check_separation, lemma_bound, orthogonality_gap, relative_gap,
    residual_polynomials, rho_integral_identity, zeros_positive_and_simple,
};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.passed { "ok  " } else { "FAIL" };
        write!(f, "{mark} {:<34} {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub test: TestId,
    pub n: usize,
    pub half_length: f64,
    pub xi: f64,
    pub n_max: usize,
    pub consistency_tol: f64,
    pub custom: Option<CustomSpec>,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Probe vectors that are deterministic and not aligned with any mode.
fn probe(n: usize, k: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (((i + 1) * (2 * k + 3)) as f64 * 0.618_033_988_749_895).fract() - 0.5)
        .collect()
}

pub fn verify(opts: &VerifyOptions) -> Result<Vec<Check>> {
    let case = build_test_case(opts.test, opts.n, opts.half_length, opts.custom.as_ref())?;
    let mut checks = vec![check(
        "consistency gate",
        case.consistency <= opts.consistency_tol,
        format!("residual {:.3e} (limit {:.1e})", case.consistency, opts.consistency_tol),
    )];
    if !checks[0].passed {
        return Ok(checks);
    }
    let p = &case.problem;
    let op = p.operator();
    let dim = p.dim();
    let norm = p.operator_norm();

    let (x, y) = (probe(dim, 0), probe(dim, 1));
    let (ax, ay) = (op.apply(&x)?, op.apply(&y)?);
    let asym = (linalg::dot(&ax, &y) - linalg::dot(&x, &ay)).abs() / (norm * linalg::norm(&x) * linalg::norm(&y));
    checks.push(check(
        "operator symmetry",
        asym <= 1e-12,
        format!("relative {asym:.2e}"),
    ));
    let quad = linalg::dot(&x, &ax) / (norm * linalg::dot(&x, &x));
    checks.push(check(
        "operator non-negativity",
        quad >= -1e-12,
        format!("<x,Ax>/|A||x|^2 = {quad:.3e}"),
    ));

    if op.spectral().is_some() {
        let two_step = fractional_apply(op, 0.3, &fractional_apply(op, 0.45, &x)?)?;
        let direct = fractional_apply(op, 0.75, &x)?;
        let err = linalg::norm(&linalg::sub(&two_step, &direct)) / linalg::norm(&direct);
        checks.push(check(
            "fractional power semigroup",
            err <= 1e-10,
            format!("relative {err:.2e}"),
        ));
    }

    let n_max = opts.n_max.min(dim);
    let history = if opts.xi >= 1.0 {
        theta_iterates(p, opts.xi, n_max, Tolerances::none())?
    } else {
        theta_iterates_spectral(p, opts.xi, n_max, Tolerances::none())?
    };
    let steps = &history.steps;
    let mut rhos = Vec::with_capacity(steps.len());
    for s in steps {
        rhos.push([
            rho(p, &s.iterate, 0.0)?,
            rho(p, &s.iterate, 1.0)?,
            rho(p, &s.iterate, 2.0)?,
        ]);
    }
    let nonneg = rhos.iter().all(|r| r.iter().all(|&v| v >= 0.0));
    checks.push(check("rho non-negative", nonneg, format!("{} iterates", rhos.len())));
    let cs = rhos
        .iter()
        .map(|r| (r[1] * r[1] - r[0] * r[2]) / (r[0] * r[2]).max(f64::MIN_POSITIVE))
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(check(
        "cauchy-schwarz rho1^2 <= rho0 rho2",
        cs <= 1e-10,
        format!("max excess {cs:.2e}"),
    ));

    let Some(known) = p.known_solution() else {
        return Ok(checks);
    };
    let Some(basis) = op.spectral() else {
        return Ok(checks);
    };
    let kernel = steps
        .iter()
        .map(|s| {
            let e = linalg::sub(&s.iterate, known);
            kernel_component_norm(basis, &e) / linalg::norm(&e).max(f64::MIN_POSITIVE)
        })
        .fold(0.0f64, f64::max)
        + 0.0;
    checks.push(check(
        "error orthogonal to kernel",
        kernel <= 1e-10,
        format!("max relative {kernel:.2e}"),
    ));

    let mu0 = initial_error_measure(p)?;
    let nu = weight_by_power(&mu0, opts.xi + 1.0)?;
    let family = residual_polynomials(&nu, n_max)?;
    let mu: Vec<_> = [0.0, 1.0, 2.0]
        .iter()
        .map(|&s| weight_by_power(&mu0, s).map(|m| (s, m)))
        .collect::<Result<_>>()?;

    let mut identity = 0.0f64;
    let mut identity_holds_to = 0;
    let mut gap = 0.0f64;
    let mut simple = true;
    let mut separation = f64::NEG_INFINITY;
    let mut lemma_ok = true;
    let mut chain_ok = true;
    for (i, poly) in family.polys.iter().enumerate() {
        let n = i + 1;
        if n > history.max_n() {
            break;
        }
        let mut step_identity = 0.0f64;
        for (k, (sigma, m)) in mu.iter().enumerate() {
            step_identity = step_identity.max(relative_gap(rhos[n][k], rho_integral_identity(poly, m), m.total_mass()));
            lemma_ok &= lemma_bound(poly, &nu, m, opts.xi, *sigma)?.satisfied;
            if *sigma <= opts.xi {
                chain_ok &= bound_chain(rhos[n][k], poly, m, &nu, opts.xi, *sigma)?.ok();
            }
        }
        if step_identity <= 1e-8 && identity_holds_to == n - 1 {
            identity_holds_to = n;
        }
        identity = identity.max(step_identity);
        gap = gap.max(orthogonality_gap(poly, &nu)?.relative_gap);
        simple &= zeros_positive_and_simple(poly);
        if let Some(next) = family.polys.get(i + 1) {
            separation = separation.max(check_separation(poly, next)?.max_violation);
        }
    }
    checks.push(check(
        "rho equals integral of s_N^2",
        identity <= 1e-8,
        format!("max relative {identity:.2e}, within 1e-8 up to N = {identity_holds_to}"),
    ));
    checks.push(check(
        "zeros positive and simple",
        simple,
        format!("{} polynomials", family.polys.len()),
    ));
    checks.push(check(
        "zeros interlace",
        separation <= 1e-10,
        format!("max violation {separation:.2e}"),
    ));
    checks.push(check(
        "zeros move monotonically",
        check_monotonicity(&family),
        String::new(),
    ));
    checks.push(check(
        "orthogonality identity",
        gap <= 1e-8,
        format!("max relative gap {gap:.2e}"),
    ));
    checks.push(check("lemma bound", lemma_ok, String::new()));
    checks.push(check("bound chain", chain_ok, String::new()));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_gaussian_case_verifies() {
        let checks = verify(&VerifyOptions {
            test: TestId::T1a,
            n: 128,
            half_length: 15.0,
            xi: 1.0,
            n_max: 5,
            consistency_tol: 1e-6,
            custom: None,
        })
        .unwrap();
        for c in &checks {
            assert!(c.passed, "{c}");
        }
        assert!(checks.len() > 10);
    }

    #[test]
    fn gate_failure_stops_the_suite() {
        let checks = verify(&VerifyOptions {
            test: TestId::T1b,
            n: 256,
            half_length: 10.0,
            xi: 1.0,
            n_max: 10,
            consistency_tol: 1e-6,
            custom: None,
        })
        .unwrap();
        assert_eq!(checks.len(), 1);
        assert!(!checks[0].passed);
    }
}
