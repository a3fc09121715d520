//! Residual polynomials of the θ-iteration and the estimates built on them.
//!
//! With `e_0 = f_0 − P_S f_0` and `μ_σ = λ^σ |ê_0|²`, the error of the
//! θ-iterate is `s_N(A) e_0`, where `s_N` is the degree-`N` polynomial with
//! `s_N(0) = 1` orthogonal to lower degrees in `L²(ν_ξ)`, `ν_ξ = λ^{ξ+1}|ê_0|²`
//! and `ξ = θ`. Its zeros are the eigenvalues of the Jacobi matrix of
//! `ν_ξ`, obtained here by the Stieltjes procedure (Lanczos on the atom
//! locations started from the square roots of the weights).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::{JacobiMatrix, LanczosProcess, BREAKDOWN_REL};
use crate::measures::{mass_below, DiscreteSpectralMeasure, MERGE_REL_TOL};

/// Slack on the separation property, relative to the zero being tested.
pub const SEPARATION_SLACK: f64 = 1e-10;

/// Multiplicative slack on the lemma bound.
pub const LEMMA_SLACK: f64 = 1e-10;

/// Multiplicative slack on each link of the bound chain.
pub const CHAIN_SLACK: f64 = 1e-8;

/// Quantities below this fraction of their `N = 0` value are rounding
/// noise; comparisons treat them as zero.
pub const ROUNDING_FLOOR: f64 = f64::EPSILON;

/// Discrepancy beyond the rounding floor, relative to the larger value:
/// `max(|a − b| − ROUNDING_FLOOR · scale, 0) / max(|a|, |b|)`. `scale` is
/// the size of the compared quantity before any iteration.
pub fn relative_gap(a: f64, b: f64, scale: f64) -> f64 {
    let excess = (a - b).abs() - ROUNDING_FLOOR * scale.abs();
    if excess <= 0.0 {
        0.0
    } else {
        excess / a.abs().max(b.abs())
    }
}

/// `lhs ≤ rhs (1 + slack)` up to the rounding floor of `scale`.
fn holds(lhs: f64, rhs: f64, slack: f64, scale: f64) -> bool {
    lhs <= rhs * (1.0 + slack) + ROUNDING_FLOOR * scale
}

/// `s_N(λ) = Π (1 − λ/λ_k)` over its zeros `λ_1 < … < λ_N`.
///
/// The product is ill-conditioned at points lying above many zeros: the
/// rounding error of a nearby zero gets multiplied by factors of size
/// `λ/λ_k`. Polynomials produced by [`residual_polynomials`] therefore also
/// carry their values on the support of the measure, taken from the
/// Stieltjes recursion, and use them above the second zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPolynomial {
    zeros: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    support: Vec<(f64, f64)>,
}

/// Above this degree the product form is accumulated in logarithms.
const LOG_SUM_DEGREE: usize = 50;

impl ResidualPolynomial {
    pub fn from_zeros(mut zeros: Vec<f64>) -> Result<Self> {
        if zeros.iter().any(|z| !(z.is_finite() && *z > 0.0)) {
            return Err(Error::InvalidArgument(
                "residual polynomial zeros must be positive".into(),
            ));
        }
        zeros.sort_by(f64::total_cmp);
        Ok(Self {
            zeros,
            support: Vec::new(),
        })
    }

    pub fn degree(&self) -> usize {
        self.zeros.len()
    }

    pub fn zeros(&self) -> &[f64] {
        &self.zeros
    }

    /// Smallest zero `λ_1`.
    pub fn smallest_zero(&self) -> Option<f64> {
        self.zeros.first().copied()
    }

    /// `(λ_j, s_N(λ_j))` on the support of the generating measure; empty
    /// for polynomials built from zeros alone.
    pub fn support_values(&self) -> &[(f64, f64)] {
        &self.support
    }

    /// The product form.
    pub fn eval(&self, lambda: f64) -> f64 {
        product(&self.zeros, lambda)
    }

    /// `s_N(λ)`, from the stored support values where the product form is
    /// unreliable.
    pub fn value_at(&self, lambda: f64) -> f64 {
        self.stored(lambda).unwrap_or_else(|| self.eval(lambda))
    }

    fn stored(&self, lambda: f64) -> Option<f64> {
        if self.zeros.len() < 2 || lambda <= self.zeros[1] {
            return None;
        }
        self.support
            .binary_search_by(|a| a.0.total_cmp(&lambda))
            .ok()
            .map(|i| self.support[i].1)
    }

    /// `|s_N(λ)|² λ_1/|λ − λ_1|`, with the factor belonging to `λ_1`
    /// cancelled analytically where the product form is used.
    fn weighted_square(&self, lambda: f64) -> f64 {
        let l1 = self.zeros[0];
        if let Some(v) = self.stored(lambda) {
            return v * v * l1 / (lambda - l1);
        }
        let tail = product(&self.zeros[1..], lambda);
        (1.0 - lambda / l1).abs() * tail * tail
    }
}

fn product(zeros: &[f64], lambda: f64) -> f64 {
    if zeros.len() <= LOG_SUM_DEGREE {
        return zeros.iter().map(|z| 1.0 - lambda / z).product();
    }
    let mut sign = 1.0;
    let mut log = 0.0;
    for z in zeros {
        let f = 1.0 - lambda / z;
        if f == 0.0 {
            return 0.0;
        }
        if f < 0.0 {
            sign = -sign;
        }
        log += f.abs().ln();
    }
    sign * log.exp()
}

/// Residual polynomials of degree `1..=len` for one measure.
#[derive(Debug, Clone)]
pub struct ResidualFamily {
    pub polys: Vec<ResidualPolynomial>,
    pub jacobi: JacobiMatrix,
    /// Fewer than the requested degrees exist (too few atoms, or the
    /// recursion broke down).
    pub truncated: bool,
}

impl ResidualFamily {
    /// `s_N` for `N ≥ 1`; `None` beyond the available degrees.
    pub fn get(&self, n: usize) -> Option<&ResidualPolynomial> {
        n.checked_sub(1).and_then(|i| self.polys.get(i))
    }
}

/// Stieltjes procedure on `ν` for degrees `1..=n_max`.
pub fn residual_polynomials(nu: &DiscreteSpectralMeasure, n_max: usize) -> Result<ResidualFamily> {
    if nu.has_atom_at_zero() {
        return Err(Error::AtomAtZero);
    }
    let locations: Vec<f64> = nu.atoms().iter().map(|a| a.0).collect();
    let start: Vec<f64> = nu.atoms().iter().map(|a| a.1.sqrt()).collect();
    let mut process = LanczosProcess::new(&start, BREAKDOWN_REL * nu.max_location());
    let mut polys = Vec::with_capacity(n_max);
    for _ in 0..n_max {
        let step = process.advance(|v| Ok(v.iter().zip(&locations).map(|(a, l)| a * l).collect()))?;
        if step.is_none() {
            break;
        }
        let zeros = process.jacobi().eigenvalues()?;
        match ResidualPolynomial::from_zeros(zeros) {
            Ok(mut p) => {
                p.support = values_on_support(&process, nu, &p.zeros);
                polys.push(p);
            }
            // Rounding pushed a zero to or below 0: the measure is
            // numerically exhausted.
            Err(_) => break,
        }
    }
    let jacobi = process.jacobi().leading(polys.len());
    Ok(ResidualFamily {
        truncated: polys.len() < n_max,
        polys,
        jacobi,
    })
}

/// `s_N` on the atoms of `ν` from the next Stieltjes vector `q_{N+1}`:
/// the monic orthogonal polynomial satisfies
/// `π_N(λ_j) √w_j = √m_0 β_1⋯β_N q_{N+1,j}` and `s_N = (−1)^N π_N / Π λ_k`.
/// Once the recursion is exhausted `s_N` vanishes on the support.
fn values_on_support(process: &LanczosProcess, nu: &DiscreteSpectralMeasure, zeros: &[f64]) -> Vec<(f64, f64)> {
    let atoms = nu.atoms();
    let Some(next) = process.pending() else {
        return atoms.iter().map(|a| (a.0, 0.0)).collect();
    };
    let log_scale = 0.5 * nu.total_mass().ln() + process.betas().iter().map(|b| b.ln()).sum::<f64>()
        - zeros.iter().map(|z| z.ln()).sum::<f64>();
    let sign = if zeros.len().is_multiple_of(2) { 1.0 } else { -1.0 };
    atoms
        .iter()
        .zip(next)
        .map(|(&(l, w), &q)| {
            let v = if q == 0.0 {
                0.0
            } else {
                sign * q.signum() * (log_scale + q.abs().ln() - 0.5 * w.ln()).exp()
            };
            (l, v)
        })
        .collect()
}

/// `δ_N = 1/λ_1 + 2 Σ_{k≥2} 1/λ_k`.
pub fn delta_n(p: &ResidualPolynomial) -> Result<f64> {
    let (first, rest) = p
        .zeros
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("degree-0 polynomial has no zeros".into()))?;
    Ok(1.0 / first + 2.0 * rest.iter().map(|z| 1.0 / z).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub ok: bool,
    /// Largest violation of `λ_k^{(N+1)} < λ_k^{(N)} < λ_{k+1}^{(N+1)}`,
    /// relative to `λ_k^{(N)}`; negative when strictly separated.
    pub max_violation: f64,
}

/// Interlacing of the zeros of `s_N` and `s_{N+1}`.
pub fn check_separation(pn: &ResidualPolynomial, pn1: &ResidualPolynomial) -> Result<SeparationReport> {
    if pn1.degree() != pn.degree() + 1 {
        return Err(Error::InvalidArgument(format!(
            "degrees {} and {} are not consecutive",
            pn.degree(),
            pn1.degree()
        )));
    }
    let mut worst = f64::NEG_INFINITY;
    for (k, &z) in pn.zeros.iter().enumerate() {
        let below = (pn1.zeros[k] - z) / z;
        let above = (z - pn1.zeros[k + 1]) / z;
        worst = worst.max(below).max(above);
    }
    Ok(SeparationReport {
        ok: worst <= SEPARATION_SLACK,
        max_violation: worst,
    })
}

/// Every zero is positive and the zeros are simple.
pub fn zeros_positive_and_simple(p: &ResidualPolynomial) -> bool {
    p.zeros.iter().all(|&z| z > 0.0) && p.zeros.windows(2).all(|w| w[1] > w[0])
}

/// For fixed `k` the `k`-th smallest zero does not increase with `N` and
/// the `k`-th largest does not decrease, up to the separation slack.
pub fn check_monotonicity(family: &ResidualFamily) -> bool {
    family.polys.windows(2).all(|w| {
        let (a, b) = (&w[0].zeros, &w[1].zeros);
        let n = a.len();
        (0..n).all(|k| {
            b[k] <= a[k] * (1.0 + SEPARATION_SLACK)
                && b[k + 1] >= a[k] * (1.0 - SEPARATION_SLACK)
                && b[n - k] >= a[n - 1 - k] * (1.0 - SEPARATION_SLACK)
        })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityGap {
    /// `∫_{[0,λ_1)} s_N² λ_1/(λ_1 − λ) dν`
    pub lhs: f64,
    /// `∫_{[λ_1,∞)} s_N² λ_1/(λ − λ_1) dν`
    pub rhs: f64,
    /// First-order effect on `lhs − rhs` of moving `λ_1` by its rounding
    /// uncertainty `ε λ_1`; atoms very close to `λ_1` make this dominant.
    pub zero_sensitivity: f64,
    /// Discrepancy beyond rounding (see [`relative_gap`]), with
    /// `zero_sensitivity` added to the floor.
    pub relative_gap: f64,
}

fn below_first_zero(lambda: f64, l1: f64) -> bool {
    lambda < l1 && l1 - lambda > MERGE_REL_TOL * l1.max(1.0)
}

/// Both sides of the identity expressing orthogonality of `s_N` to
/// `Π_{k≥2}(1 − λ/λ_k)`. Atoms at `λ_1` contribute nothing.
pub fn orthogonality_gap(p: &ResidualPolynomial, nu: &DiscreteSpectralMeasure) -> Result<OrthogonalityGap> {
    let l1 = p
        .smallest_zero()
        .ok_or_else(|| Error::InvalidArgument("degree-0 polynomial".into()))?;
    let delta = ROUNDING_FLOOR * l1;
    let (mut lhs, mut rhs, mut sensitivity) = (0.0, 0.0, 0.0);
    for &(l, w) in nu.atoms() {
        let v = p.weighted_square(l) * w;
        if below_first_zero(l, l1) {
            lhs += v;
        } else {
            rhs += v;
        }
        let tail = product(&p.zeros[1..], l);
        sensitivity += w * tail * tail * l / (l1 * l1) * delta;
    }
    let floor = ROUNDING_FLOOR * nu.total_mass() + sensitivity;
    let excess = (lhs - rhs).abs() - floor;
    Ok(OrthogonalityGap {
        lhs,
        rhs,
        zero_sensitivity: sensitivity,
        relative_gap: if excess > 0.0 { excess / lhs.max(rhs) } else { 0.0 },
    })
}

/// `0^0 = 1`.
fn pow_nonneg(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        x.powf(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaBound {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// `∫_{[0,λ_1)} s_N² λ_1/(λ_1 − λ) dν ≤ μ_σ([0,λ_1)) ((ξ−σ+1)/δ_N)^{ξ−σ+1}`.
pub fn lemma_bound(
    p: &ResidualPolynomial,
    nu: &DiscreteSpectralMeasure,
    mu_sigma: &DiscreteSpectralMeasure,
    xi: f64,
    sigma: f64,
) -> Result<LemmaBound> {
    let e = xi - sigma + 1.0;
    if !(e >= 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "xi - sigma + 1 = {e} must be non-negative"
        )));
    }
    let gap = orthogonality_gap(p, nu)?;
    let l1 = p.zeros[0];
    let rhs = mass_below(mu_sigma, l1) * pow_nonneg(e / delta_n(p)?, e);
    Ok(LemmaBound {
        lhs: gap.lhs,
        rhs,
        satisfied: holds(gap.lhs, rhs, LEMMA_SLACK, nu.total_mass()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStep {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundChainReport {
    pub steps: Vec<ChainStep>,
    /// Index of the first link that fails.
    pub first_failure: Option<usize>,
}

impl BoundChainReport {
    pub fn ok(&self) -> bool {
        self.first_failure.is_none()
    }
}

/// Checks each inequality leading from `ρ_σ(f_N)` to
/// `(1 + (ξ−σ+1)^{ξ−σ+1}) μ_σ([0,λ_1))`. `rho` is the value measured on
/// the iterate itself; the integrals are atom sums.
pub fn bound_chain(
    rho: f64,
    p: &ResidualPolynomial,
    mu_sigma: &DiscreteSpectralMeasure,
    nu: &DiscreteSpectralMeasure,
    xi: f64,
    sigma: f64,
) -> Result<BoundChainReport> {
    if !(xi >= sigma) {
        return Err(Error::PreconditionViolated(format!("xi = {xi} < sigma = {sigma}")));
    }
    let e = xi - sigma + 1.0;
    let l1 = p
        .smallest_zero()
        .ok_or_else(|| Error::InvalidArgument("degree-0 polynomial".into()))?;
    let delta = delta_n(p)?;
    let below = mass_below(mu_sigma, l1);
    let upper: f64 = mu_sigma
        .atoms()
        .iter()
        .filter(|a| !below_first_zero(a.0, l1))
        .map(|&(l, w)| p.value_at(l).powi(2) * w)
        .sum();
    let gap = orthogonality_gap(p, nu)?;
    let lemma = lemma_bound(p, nu, mu_sigma, xi, sigma)?;
    let scale = l1.powf(e);
    let mass = mu_sigma.total_mass();
    let tail = below / scale * pow_nonneg(e / delta, e);
    let links = [
        ("split at the first zero", rho, below + upper),
        (
            "pointwise weight comparison above the first zero",
            upper,
            gap.rhs / scale,
        ),
        ("upper part through the orthogonality identity", upper, gap.lhs / scale),
        ("lemma", lemma.lhs, lemma.rhs),
        ("combined estimate", rho, below + tail),
        ("first zero times delta at least one", tail, pow_nonneg(e, e) * below),
        ("final bound", rho, (1.0 + pow_nonneg(e, e)) * below),
    ];
    let steps: Vec<ChainStep> = links
        .iter()
        .map(|&(name, lhs, rhs)| ChainStep {
            name: name.to_string(),
            lhs,
            rhs,
            holds: holds(lhs, rhs, CHAIN_SLACK, mass),
        })
        .collect();
    let first_failure = steps.iter().position(|s| !s.holds);
    Ok(BoundChainReport { steps, first_failure })
}

/// `ρ_σ(f_N) = ∫ s_N² dμ_σ` as an atom sum.
pub fn rho_integral_identity(p: &ResidualPolynomial, mu_sigma: &DiscreteSpectralMeasure) -> f64 {
    mu_sigma.atoms().iter().map(|&(l, w)| p.value_at(l).powi(2) * w).sum()
}
