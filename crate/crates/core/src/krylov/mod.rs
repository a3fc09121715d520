//! Krylov iterates for `A f = g` with `A` self-adjoint positive semidefinite.
//!
//! The θ-iterate `f_N` minimises `‖A^{θ/2}(h − P_S h)‖` over the affine
//! Krylov space `f_0 + K_N(A, R_0)`, where `R_N = A f_N − g` and `P_S`
//! projects onto the solution set. `θ = 1` is conjugate gradients and
//! `θ = 2` is minimal residual. Three independent routes compute it:
//! conjugate gradients, a Lanczos basis with a Gram system built from
//! operator applications, and the same in eigen-coordinates. An exact
//! integer oracle lives in [`exact`].

pub mod exact;

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, LeadingCholesky};
use crate::linop::{self, fractional_apply, SelfAdjointOperator};
use crate::measures::pow0;

/// Lanczos stops once the next off-diagonal falls below this times `‖A‖`.
pub const BREAKDOWN_REL: f64 = 1e-13;

/// Admissible `‖A f − g‖` relative to `‖A‖‖f‖ + ‖g‖` for a known solution.
pub const CONSISTENCY_REL: f64 = 1e-10;

/// Stopping rule on `‖R_N‖ ≤ rel·‖R_0‖ + abs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rel: 1e-12, abs: 0.0 }
    }
}

impl Tolerances {
    /// Never stop on the residual; only exhaustion ends the iteration.
    pub fn none() -> Self {
        Self { rel: 0.0, abs: 0.0 }
    }

    fn met(&self, r: f64, r0: f64) -> bool {
        r <= self.rel * r0 + self.abs
    }
}

/// `A f = g` with starting guess `f_0` and optionally a known solution.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    operator: Arc<dyn SelfAdjointOperator>,
    datum: Vec<f64>,
    initial: Vec<f64>,
    initial_residual: Vec<f64>,
    known_solution: Option<Vec<f64>>,
    norm: f64,
}

impl InverseProblem {
    /// Checks dimensions and finiteness and, when the spectrum is known,
    /// that `g` has no kernel component.
    pub fn new(operator: Arc<dyn SelfAdjointOperator>, datum: Vec<f64>, initial: Vec<f64>) -> Result<Self> {
        let n = operator.dim();
        linop::check_dim(n, datum.len())?;
        linop::check_dim(n, initial.len())?;
        if !datum.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("datum"));
        }
        if !initial.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("initial guess"));
        }
        if let Some(basis) = operator.spectral() {
            let kernel = linop::kernel_component_norm(basis, &datum);
            let threshold = linop::KERNEL_COMPONENT_TOL * linalg::norm(&datum);
            if kernel > threshold {
                return Err(Error::Inconsistent {
                    residual: kernel,
                    threshold,
                });
            }
        }
        let norm = linop::operator_norm(operator.as_ref())?;
        let mut initial_residual = operator.apply(&initial)?;
        for (r, g) in initial_residual.iter_mut().zip(&datum) {
            *r -= g;
        }
        Ok(Self {
            operator,
            datum,
            initial,
            initial_residual,
            known_solution: None,
            norm,
        })
    }

    /// Attaches a solution, rejecting it unless `A f = g` to rounding.
    pub fn with_known_solution(mut self, f: Vec<f64>) -> Result<Self> {
        linop::check_dim(self.dim(), f.len())?;
        let residual = self.residual_norm(&f)?;
        let threshold = CONSISTENCY_REL * (self.norm * linalg::norm(&f) + linalg::norm(&self.datum));
        if !(residual <= threshold) {
            return Err(Error::Inconsistent { residual, threshold });
        }
        self.known_solution = Some(f);
        Ok(self)
    }

    pub fn operator(&self) -> &dyn SelfAdjointOperator {
        self.operator.as_ref()
    }

    pub fn operator_arc(&self) -> Arc<dyn SelfAdjointOperator> {
        Arc::clone(&self.operator)
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    pub fn datum(&self) -> &[f64] {
        &self.datum
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// `R_0 = A f_0 − g`.
    pub fn initial_residual(&self) -> &[f64] {
        &self.initial_residual
    }

    pub fn known_solution(&self) -> Option<&[f64]> {
        self.known_solution.as_deref()
    }

    /// `‖A‖`, exact for spectral operators and estimated otherwise.
    pub fn operator_norm(&self) -> f64 {
        self.norm
    }

    pub fn residual(&self, f: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.operator.apply(f)?;
        for (ri, g) in r.iter_mut().zip(&self.datum) {
            *ri -= g;
        }
        Ok(r)
    }

    pub fn residual_norm(&self, f: &[f64]) -> Result<f64> {
        Ok(linalg::norm(&self.residual(f)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateStep {
    pub n: usize,
    pub iterate: Vec<f64>,
    /// `A f_N − g`, evaluated directly.
    pub residual: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Reached the requested number of steps.
    IterationLimit,
    /// The residual tolerance was met.
    Converged,
    /// The Krylov space became invariant; the last iterate is `P_S f_0`.
    Exhausted,
    /// The Gram system lost definiteness before exhaustion was detected.
    Breakdown,
}

#[derive(Debug, Clone)]
pub struct IterateHistory {
    pub theta: f64,
    /// `steps[N]` holds `f_N`, starting from `N = 0`.
    pub steps: Vec<IterateStep>,
    pub termination: Termination,
}

impl IterateHistory {
    pub fn last(&self) -> &IterateStep {
        self.steps.last().expect("history always holds N = 0")
    }

    /// `f_N`, or the final iterate when the run stopped before `N`.
    pub fn iterate(&self, n: usize) -> &[f64] {
        &self.steps[n.min(self.steps.len() - 1)].iterate
    }

    pub fn max_n(&self) -> usize {
        self.steps.len() - 1
    }
}

/// Symmetric tridiagonal matrix with diagonal `alpha` and off-diagonal `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiMatrix {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl JacobiMatrix {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.len() != beta.len() + 1 && !(alpha.is_empty() && beta.is_empty()) {
            return Err(Error::DimensionMismatch {
                expected: alpha.len().saturating_sub(1),
                actual: beta.len(),
            });
        }
        Ok(Self { alpha, beta })
    }

    pub fn size(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Leading `n x n` block.
    pub fn leading(&self, n: usize) -> JacobiMatrix {
        let n = n.min(self.size());
        JacobiMatrix {
            alpha: self.alpha[..n].to_vec(),
            beta: self.beta[..n.saturating_sub(1)].to_vec(),
        }
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::tridiagonal_eigenvalues(&self.alpha, &self.beta)
    }
}

/// Lanczos with full reorthogonalisation, advanced one vector at a time.
pub(crate) struct LanczosProcess {
    basis: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    pending: Option<Vec<f64>>,
    threshold: f64,
}

impl LanczosProcess {
    pub(crate) fn new(start: &[f64], threshold: f64) -> Self {
        let n = linalg::norm(start);
        let pending = (n > 0.0).then(|| start.iter().map(|v| v / n).collect());
        Self {
            basis: Vec::new(),
            alpha: Vec::new(),
            beta: Vec::new(),
            pending,
            threshold,
        }
    }

    /// Appends the next basis vector and returns `A v` for it, or `None`
    /// once the space is invariant.
    pub(crate) fn advance<F>(&mut self, apply: F) -> Result<Option<Vec<f64>>>
    where
        F: FnOnce(&[f64]) -> Result<Vec<f64>>,
    {
        let Some(v) = self.pending.take() else {
            return Ok(None);
        };
        let av = apply(&v)?;
        let a = linalg::dot(&v, &av);
        let mut u = av.clone();
        linalg::axpy(-a, &v, &mut u);
        if let (Some(prev), Some(&b)) = (self.basis.last(), self.beta.last()) {
            linalg::axpy(-b, prev, &mut u);
        }
        self.alpha.push(a);
        self.basis.push(v);
        linalg::orthogonalize(&mut u, &self.basis);
        let b = linalg::norm(&u);
        if b > self.threshold {
            linalg::scale(1.0 / b, &mut u);
            self.beta.push(b);
            self.pending = Some(u);
        }
        Ok(Some(av))
    }

    pub(crate) fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    /// The next basis vector, once computed.
    pub(crate) fn pending(&self) -> Option<&[f64]> {
        self.pending.as_deref()
    }

    /// All off-diagonal entries computed so far, including the one coupling
    /// to the pending vector.
    pub(crate) fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub(crate) fn is_exhausted(&self) -> bool {
        self.pending.is_none()
    }

    pub(crate) fn jacobi(&self) -> JacobiMatrix {
        let n = self.alpha.len();
        JacobiMatrix {
            alpha: self.alpha.clone(),
            beta: self.beta[..n.saturating_sub(1)].to_vec(),
        }
    }

    pub(crate) fn next_beta(&self) -> Option<f64> {
        (self.beta.len() == self.alpha.len()).then(|| *self.beta.last().unwrap())
    }
}

#[derive(Debug, Clone)]
pub struct LanczosDecomposition {
    /// Orthonormal basis of `K_N(A, b)`.
    pub basis: Vec<Vec<f64>>,
    pub jacobi: JacobiMatrix,
    /// Off-diagonal coupling to the next vector, absent on exhaustion.
    pub next_beta: Option<f64>,
    pub exhausted: bool,
}

/// `N` steps of Lanczos on `(A, b)`; stops early when the space becomes
/// invariant (`β ≤ 1e-13‖A‖`).
pub fn lanczos(op: &dyn SelfAdjointOperator, b: &[f64], n: usize) -> Result<LanczosDecomposition> {
    linop::check_dim(op.dim(), b.len())?;
    let threshold = BREAKDOWN_REL * linop::operator_norm(op)?;
    let mut process = LanczosProcess::new(b, threshold);
    for _ in 0..n {
        if process.advance(|v| op.apply(v))?.is_none() {
            break;
        }
    }
    Ok(LanczosDecomposition {
        basis: process.basis.clone(),
        jacobi: process.jacobi(),
        next_beta: process.next_beta(),
        exhausted: process.is_exhausted(),
    })
}

fn start_history(problem: &InverseProblem, theta: f64) -> IterateHistory {
    IterateHistory {
        theta,
        steps: vec![IterateStep {
            n: 0,
            iterate: problem.initial.clone(),
            residual: problem.initial_residual.clone(),
        }],
        termination: Termination::IterationLimit,
    }
}

/// Conjugate gradients (`θ = 1`) with each new residual reorthogonalised
/// against all previous ones. Plain recurrences lose orthogonality on
/// spectra spanning several decades and then stop being the Krylov
/// minimiser; the reorthogonalised form stays on it.
pub fn run_cg<F>(problem: &InverseProblem, n_max: usize, tol: Tolerances, mut on_step: F) -> Result<IterateHistory>
where
    F: FnMut(&IterateStep),
{
    let op = problem.operator();
    let mut history = start_history(problem, 1.0);
    on_step(&history.steps[0]);
    let r0_norm = linalg::norm(&problem.initial_residual);
    if tol.met(r0_norm, r0_norm) {
        history.termination = Termination::Converged;
        return Ok(history);
    }
    let threshold = BREAKDOWN_REL * problem.norm;
    let mut x = problem.initial.clone();
    let mut r: Vec<f64> = problem.initial_residual.iter().map(|v| -v).collect();
    let mut p = r.clone();
    let mut rr = linalg::dot(&r, &r);
    let mut directions: Vec<Vec<f64>> = Vec::new();
    for n in 1..=n_max {
        let ap = op.apply(&p)?;
        let pap = linalg::dot(&p, &ap);
        if !(pap > threshold * linalg::dot(&p, &p)) {
            history.termination = Termination::Exhausted;
            return Ok(history);
        }
        let alpha = rr / pap;
        linalg::axpy(alpha, &p, &mut x);
        let rn = rr.sqrt();
        directions.push(r.iter().map(|v| v / rn).collect());
        linalg::axpy(-alpha, &ap, &mut r);
        linalg::orthogonalize(&mut r, &directions);
        let rr_next = linalg::dot(&r, &r);
        let beta = rr_next / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_next;

        let residual = problem.residual(&x)?;
        let res_norm = linalg::norm(&residual);
        let step = IterateStep {
            n,
            iterate: x.clone(),
            residual,
        };
        on_step(&step);
        history.steps.push(step);
        if tol.met(res_norm, r0_norm) {
            history.termination = Termination::Converged;
            return Ok(history);
        }
        if rr == 0.0 {
            history.termination = Termination::Exhausted;
            return Ok(history);
        }
    }
    Ok(history)
}

/// `A^t x` by repeated application for integer `t ≥ 0`, through the
/// eigenbasis otherwise.
fn power_apply(op: &dyn SelfAdjointOperator, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    if t >= 0.0 && t.fract() == 0.0 && t <= 64.0 {
        let mut y = x.to_vec();
        for _ in 0..t as usize {
            y = op.apply(&y)?;
        }
        Ok(y)
    } else {
        fractional_apply(op, t, x)
    }
}

/// Growing Gram system `M y = −b` with `M = Vᵀ A^θ V`.
struct GramSystem {
    m: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl GramSystem {
    fn new() -> Self {
        Self {
            m: Vec::new(),
            b: Vec::new(),
        }
    }

    /// `coupling[i] = ⟨v_i, A^θ v_new⟩` for all basis vectors including the
    /// new one, `rhs = ⟨v_new, A^θ e_0⟩`.
    fn push(&mut self, coupling: Vec<f64>, rhs: f64) {
        let k = self.m.len();
        for (row, &c) in self.m.iter_mut().zip(&coupling[..k]) {
            row.push(c);
        }
        self.m.push(coupling);
        self.b.push(rhs);
    }

    /// Coefficients of the minimiser and whether the full system was used.
    fn solve(&self) -> (Vec<f64>, bool) {
        let chol = LeadingCholesky::factor(&self.m);
        let neg_b: Vec<f64> = self.b.iter().map(|v| -v).collect();
        (chol.solve(&neg_b), chol.rank() == self.m.len())
    }
}

/// θ-iterates for `N = 0..=n_max` from a Lanczos basis of `K_N(A, R_0)` and
/// the Gram system `Vᵀ A^θ V y = −Vᵀ A^{θ−1} R_0`, using only operator
/// applications for integer `θ ≥ 1`. Non-integer `θ` needs the eigenbasis.
pub fn theta_iterates(problem: &InverseProblem, theta: f64, n_max: usize, tol: Tolerances) -> Result<IterateHistory> {
    if !(theta >= 1.0) || !theta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "theta = {theta}; the matrix-free path needs theta >= 1"
        )));
    }
    let op = problem.operator();
    let mut history = start_history(problem, theta);
    let r0 = &problem.initial_residual;
    let r0_norm = linalg::norm(r0);
    if tol.met(r0_norm, r0_norm) {
        history.termination = Termination::Converged;
        return Ok(history);
    }
    let rhs_vector = power_apply(op, theta - 1.0, r0)?;
    let mut lanczos = LanczosProcess::new(r0, BREAKDOWN_REL * problem.norm);
    let mut gram = GramSystem::new();
    for n in 1..=n_max {
        let Some(av) = lanczos.advance(|v| op.apply(v))? else {
            history.termination = Termination::Exhausted;
            return Ok(history);
        };
        let v = lanczos.basis().last().unwrap();
        let w = power_apply(op, theta - 1.0, &av)?;
        let coupling = lanczos.basis().iter().map(|u| linalg::dot(u, &w)).collect();
        gram.push(coupling, linalg::dot(v, &rhs_vector));

        let (y, full) = gram.solve();
        let mut x = problem.initial.clone();
        for (c, u) in y.iter().zip(lanczos.basis()) {
            linalg::axpy(*c, u, &mut x);
        }
        let residual = problem.residual(&x)?;
        let res_norm = linalg::norm(&residual);
        history.steps.push(IterateStep {
            n,
            iterate: x,
            residual,
        });
        if !full {
            history.termination = Termination::Breakdown;
            return Ok(history);
        }
        if tol.met(res_norm, r0_norm) {
            history.termination = Termination::Converged;
            return Ok(history);
        }
        if lanczos.is_exhausted() {
            history.termination = Termination::Exhausted;
            return Ok(history);
        }
    }
    Ok(history)
}

/// The single θ-iterate `f_N` (the final iterate if the space is exhausted
/// earlier).
pub fn theta_iterate(problem: &InverseProblem, theta: f64, n: usize) -> Result<Vec<f64>> {
    Ok(theta_iterates(problem, theta, n, Tolerances::none())?
        .last()
        .iterate
        .clone())
}

/// θ-iterates for any real `θ ≥ 0`, computed in eigen-coordinates. The
/// error `e_0 = A^+ R_0` only enters through `|ê_0|`, so the recursion runs
/// on coefficient moduli and phases are restored at the end.
pub fn theta_iterates_spectral(
    problem: &InverseProblem,
    theta: f64,
    n_max: usize,
    tol: Tolerances,
) -> Result<IterateHistory> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::InvalidArgument(format!("theta = {theta} must be >= 0")));
    }
    let op = problem.operator();
    let basis = op.spectral().ok_or(Error::NotSpectral("theta_iterates_spectral"))?;
    let lambda = basis.eigenvalues();
    let mut history = start_history(problem, theta);
    let r0_norm = linalg::norm(&problem.initial_residual);
    if tol.met(r0_norm, r0_norm) {
        history.termination = Termination::Converged;
        return Ok(history);
    }
    let coeffs = basis.analyze(&problem.initial_residual);
    let mut modulus = vec![0.0; lambda.len()];
    let mut phase = vec![Complex64::new(0.0, 0.0); lambda.len()];
    let mut error_modulus = vec![0.0; lambda.len()];
    for j in 0..lambda.len() {
        let a = coeffs[j].norm();
        if basis.is_kernel(lambda[j]) || a == 0.0 {
            continue;
        }
        modulus[j] = a;
        phase[j] = coeffs[j] / a;
        error_modulus[j] = a / lambda[j];
    }
    let weight: Vec<f64> = lambda.iter().map(|&l| pow0(l, theta)).collect();
    let weighted_error: Vec<f64> = weight.iter().zip(&error_modulus).map(|(w, e)| w * e).collect();
    let mut lanczos = LanczosProcess::new(&modulus, BREAKDOWN_REL * basis.max_eigenvalue());
    let mut gram = GramSystem::new();
    for n in 1..=n_max {
        let advanced = lanczos.advance(|v| Ok(v.iter().zip(lambda).map(|(a, l)| a * l).collect()))?;
        if advanced.is_none() {
            history.termination = Termination::Exhausted;
            return Ok(history);
        }
        let v = lanczos.basis().last().unwrap();
        let w: Vec<f64> = v.iter().zip(&weight).map(|(a, b)| a * b).collect();
        let coupling = lanczos.basis().iter().map(|u| linalg::dot(u, &w)).collect();
        gram.push(coupling, linalg::dot(v, &weighted_error));

        let (y, full) = gram.solve();
        let mut correction = vec![0.0; lambda.len()];
        for (c, u) in y.iter().zip(lanczos.basis()) {
            linalg::axpy(*c, u, &mut correction);
        }
        let spectral: Vec<Complex64> = correction.iter().zip(&phase).map(|(c, p)| p * *c).collect();
        let mut x = basis.synthesize(&spectral);
        for (xi, f0) in x.iter_mut().zip(&problem.initial) {
            *xi += f0;
        }
        let residual = problem.residual(&x)?;
        let res_norm = linalg::norm(&residual);
        history.steps.push(IterateStep {
            n,
            iterate: x,
            residual,
        });
        if !full {
            history.termination = Termination::Breakdown;
            return Ok(history);
        }
        if tol.met(res_norm, r0_norm) {
            history.termination = Termination::Converged;
            return Ok(history);
        }
        if lanczos.is_exhausted() {
            history.termination = Termination::Exhausted;
            return Ok(history);
        }
    }
    Ok(history)
}

pub fn theta_iterate_spectral(problem: &InverseProblem, theta: f64, n: usize) -> Result<Vec<f64>> {
    Ok(theta_iterates_spectral(problem, theta, n, Tolerances::none())?
        .last()
        .iterate
        .clone())
}

/// The θ-objective `‖A^{θ/2}(h − P_S h)‖²`, evaluated from the residual
/// `A h − g` as `⟨r, A^{θ−2} r⟩`. Needs the eigenbasis unless `θ` is an
/// integer `≥ 2`.
pub fn theta_objective(problem: &InverseProblem, theta: f64, h: &[f64]) -> Result<f64> {
    let r = problem.residual(h)?;
    let op = problem.operator();
    if theta >= 2.0 && theta.fract() == 0.0 {
        let t = theta - 2.0;
        let half = power_apply(op, (t / 2.0).floor(), &r)?;
        let other = if t % 2.0 == 0.0 { half.clone() } else { op.apply(&half)? };
        return Ok(linalg::dot(&half, &other));
    }
    let basis = op.spectral().ok_or(Error::NotSpectral("theta_objective"))?;
    let c = basis.analyze(&r);
    Ok(basis
        .eigenvalues()
        .iter()
        .zip(&c)
        .filter(|(&l, _)| !basis.is_kernel(l))
        .map(|(&l, cj)| l.powf(theta - 2.0) * cj.norm_sqr())
        .sum())
}
