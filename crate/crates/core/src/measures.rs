//! Discrete spectral measures: finitely many atoms `(λ, w)` with `λ ≥ 0`
//! and `w > 0`, kept sorted with distinct locations.
//!
//! Serialised as a JSON array of `[λ, w]` pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linop::SelfAdjointOperator;

/// Atoms closer than `MERGE_REL_TOL * max(1, λ)` are merged.
pub const MERGE_REL_TOL: f64 = 1e-12;

/// Weights below this are dropped as underflow.
pub const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct DiscreteSpectralMeasure {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteSpectralMeasure {
    /// Sorts, merges nearly coincident locations (summing their weights,
    /// keeping the smallest location) and drops negligible weights.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut raw: Vec<(f64, f64)> = atoms.into_iter().collect();
        for &(l, w) in &raw {
            if !l.is_finite() || !w.is_finite() {
                return Err(Error::NonFinite("measure atom"));
            }
            if l < 0.0 {
                return Err(Error::InvalidArgument(format!("atom location {l} is negative")));
            }
            if w < 0.0 {
                return Err(Error::InvalidArgument(format!("atom weight {w} is negative")));
            }
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (l, w) in raw {
            match atoms.last_mut() {
                Some(last) if l - last.0 <= MERGE_REL_TOL * l.max(1.0) => last.1 += w,
                _ => atoms.push((l, w)),
            }
        }
        atoms.retain(|&(_, w)| w >= WEIGHT_FLOOR);
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn has_atom_at_zero(&self) -> bool {
        self.atoms.first().is_some_and(|a| a.0 == 0.0)
    }

    /// Largest atom location, or 0 for the empty measure.
    pub fn max_location(&self) -> f64 {
        self.atoms.last().map_or(0.0, |a| a.0)
    }
}

impl TryFrom<Vec<(f64, f64)>> for DiscreteSpectralMeasure {
    type Error = Error;

    fn try_from(atoms: Vec<(f64, f64)>) -> Result<Self> {
        Self::from_atoms(atoms)
    }
}

impl From<DiscreteSpectralMeasure> for Vec<(f64, f64)> {
    fn from(m: DiscreteSpectralMeasure) -> Self {
        m.atoms
    }
}

/// `λ^t` with `0^0 = 1`.
pub(crate) fn pow0(l: f64, t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else if l == 0.0 {
        0.0
    } else {
        l.powf(t)
    }
}

/// The spectral measure `Σ |x̂_j|² δ_{λ_j}` of `x` with respect to `op`.
pub fn spectral_measure(op: &dyn SelfAdjointOperator, x: &[f64]) -> Result<DiscreteSpectralMeasure> {
    let basis = op.spectral().ok_or(Error::NotSpectral("spectral_measure"))?;
    crate::linop::check_dim(op.dim(), x.len())?;
    let c = basis.analyze(x);
    DiscreteSpectralMeasure::from_atoms(basis.eigenvalues().iter().zip(&c).map(|(&l, cj)| (l, cj.norm_sqr())))
}

/// The measure `λ^t dm`. Atoms at zero vanish for `t > 0`; `t < 0` is
/// rejected when such an atom exists.
pub fn weight_by_power(m: &DiscreteSpectralMeasure, t: f64) -> Result<DiscreteSpectralMeasure> {
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("exponent {t} is not finite")));
    }
    if t < 0.0 && m.has_atom_at_zero() {
        return Err(Error::AtomAtZero);
    }
    let atoms: Vec<(f64, f64)> = m
        .atoms
        .iter()
        .map(|&(l, w)| (l, w * pow0(l, t)))
        .filter(|&(_, w)| w >= WEIGHT_FLOOR)
        .collect();
    Ok(DiscreteSpectralMeasure { atoms })
}

/// `∫ λ^k dm`.
pub fn moment(m: &DiscreteSpectralMeasure, k: f64) -> Result<f64> {
    if k < 0.0 && m.has_atom_at_zero() {
        return Err(Error::AtomAtZero);
    }
    Ok(m.atoms.iter().map(|&(l, w)| w * pow0(l, k)).sum())
}

/// `m([0, t))`.
pub fn mass_below(m: &DiscreteSpectralMeasure, t: f64) -> f64 {
    m.atoms.iter().take_while(|a| a.0 < t).map(|a| a.1).sum()
}
