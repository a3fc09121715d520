//! Manufactured test problems: `-f'' + c f = g` on a periodic grid with a
//! known smooth solution, and diagonal problems with a prescribed spectrum.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::InverseProblem;
use crate::linalg;
use crate::linop::{fractional_apply, DiagonalOperator, FourierOperator, SelfAdjointOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestId {
    #[serde(rename = "1a")]
    T1a,
    #[serde(rename = "1b")]
    T1b,
    #[serde(rename = "2a")]
    T2a,
    #[serde(rename = "2b")]
    T2b,
    #[serde(rename = "custom")]
    Custom,
}

impl TestId {
    pub const BUILT_IN: [TestId; 4] = [TestId::T1a, TestId::T1b, TestId::T2a, TestId::T2b];

    /// Default `(n, L)`. The Lorentzian needs a long, finely resolved
    /// domain: its `1/x²` tail makes the periodic wrap-around the dominant
    /// error.
    pub fn default_grid(self) -> (usize, f64) {
        match self {
            TestId::T1a | TestId::T2a => (2048, 40.0),
            TestId::T1b | TestId::T2b => (8192, 300.0),
            TestId::Custom => (0, 1.0),
        }
    }

    fn shift(self) -> f64 {
        match self {
            TestId::T1a | TestId::T1b => 1.0,
            _ => 0.0,
        }
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestId::T1a => "1a",
            TestId::T1b => "1b",
            TestId::T2a => "2a",
            TestId::T2b => "2b",
            TestId::Custom => "custom",
        })
    }
}

impl FromStr for TestId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1a" => Ok(TestId::T1a),
            "1b" => Ok(TestId::T1b),
            "2a" => Ok(TestId::T2a),
            "2b" => Ok(TestId::T2b),
            "custom" => Ok(TestId::Custom),
            other => Err(Error::UnknownTestCase(other.to_string())),
        }
    }
}

/// A diagonal problem `A = diag(eigenvalues)` with `f_0 = 0` and initial
/// error `e_0 = f_0 − f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CustomSpec {
    Explicit {
        eigenvalues: Vec<f64>,
        error: Vec<f64>,
    },
    /// Eigenvalues log-uniform in `[min, max]`, error entries uniform in
    /// `[-1, 1]`.
    Random {
        dim: usize,
        seed: u64,
        min: f64,
        max: f64,
    },
}

impl CustomSpec {
    pub fn materialize(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        match self {
            CustomSpec::Explicit { eigenvalues, error } => {
                if eigenvalues.len() != error.len() {
                    return Err(Error::DimensionMismatch {
                        expected: eigenvalues.len(),
                        actual: error.len(),
                    });
                }
                Ok((eigenvalues.clone(), error.clone()))
            }
            &CustomSpec::Random { dim, seed, min, max } => {
                if !(min > 0.0 && max >= min) {
                    return Err(Error::InvalidArgument(format!(
                        "log-uniform range [{min}, {max}] must be positive and ordered"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (lo, hi) = (min.ln(), max.ln());
                let eig = (0..dim).map(|_| rng.random_range(lo..=hi).exp()).collect();
                let err = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
                Ok((eig, err))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestCase {
    pub problem: InverseProblem,
    /// `‖A f − g‖ / ‖g‖` for the sampled solution and analytic datum.
    pub consistency: f64,
    /// Constant removed from `g` to put it in the range (zero when `A` is
    /// injective).
    pub datum_shift: f64,
    /// `‖f_used − f_sampled‖ / ‖f_sampled‖`, where `f_used` is the exact
    /// discrete solution that serves as the known solution.
    pub solution_adjustment: f64,
}

type Profile = fn(f64) -> f64;

fn gaussian(x: f64) -> f64 {
    (-x * x).exp()
}

fn lorentzian(x: f64) -> f64 {
    1.0 / (1.0 + x * x)
}

/// `-f''` for the two profiles.
fn gaussian_curvature(x: f64) -> f64 {
    (2.0 - 4.0 * x * x) * (-x * x).exp()
}

fn lorentzian_curvature(x: f64) -> f64 {
    (2.0 - 6.0 * x * x) / (1.0 + x * x).powi(3)
}

/// Builds a test problem with `f_0 = 0`. For the periodic tests the datum
/// is sampled from its closed form; its mean is removed when `c = 0`, and
/// the known solution is the exact discrete solution nearest the sampled
/// profile, so that consistency holds to rounding.
pub fn build_test_case(id: TestId, n: usize, half_length: f64, custom: Option<&CustomSpec>) -> Result<TestCase> {
    if id == TestId::Custom {
        let spec = custom.ok_or_else(|| Error::InvalidArgument("custom test needs a spectrum".into()))?;
        return build_custom(spec);
    }
    let op = Arc::new(FourierOperator::new(n, half_length, id.shift())?);
    let grid = op.grid();
    let (f, curvature): (Profile, Profile) = match id {
        TestId::T1a | TestId::T2a => (gaussian, gaussian_curvature),
        _ => (lorentzian, lorentzian_curvature),
    };
    let c = id.shift();
    let sampled: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let mut g: Vec<f64> = grid.iter().map(|&x| curvature(x) + c * f(x)).collect();
    let consistency = linalg::norm(&linalg::sub(&op.apply(&sampled)?, &g)) / linalg::norm(&g);

    let datum_shift = if c == 0.0 {
        g.iter().sum::<f64>() / n as f64
    } else {
        0.0
    };
    g.iter_mut().for_each(|v| *v -= datum_shift);
    let known = fractional_apply(op.as_ref(), -1.0, &g)?;
    let solution_adjustment = if c == 0.0 {
        let mean = sampled.iter().sum::<f64>() / n as f64;
        let centred: Vec<f64> = sampled.iter().map(|v| v - mean).collect();
        linalg::norm(&linalg::sub(&known, &centred)) / linalg::norm(&centred)
    } else {
        linalg::norm(&linalg::sub(&known, &sampled)) / linalg::norm(&sampled)
    };
    let problem = InverseProblem::new(op, g, vec![0.0; n])?.with_known_solution(known)?;
    Ok(TestCase {
        problem,
        consistency,
        datum_shift,
        solution_adjustment,
    })
}

fn build_custom(spec: &CustomSpec) -> Result<TestCase> {
    let (eig, err) = spec.materialize()?;
    let op = Arc::new(DiagonalOperator::new(eig.clone())?);
    let kernel = 1e-12 * eig.iter().fold(0.0f64, |m, &l| m.max(l));
    // f = f_0 − e_0 with the kernel part of e_0 dropped, so that f = P_S f_0.
    let known: Vec<f64> = eig
        .iter()
        .zip(&err)
        .map(|(&l, &e)| if l <= kernel { 0.0 } else { -e })
        .collect();
    let g = op.apply(&known)?;
    let dim = eig.len();
    let problem = InverseProblem::new(op, g, vec![0.0; dim])?.with_known_solution(known)?;
    Ok(TestCase {
        problem,
        consistency: 0.0,
        datum_shift: 0.0,
        solution_adjustment: 0.0,
    })
}
