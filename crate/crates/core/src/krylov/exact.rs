//! Exact θ-iterates for small problems and integer `θ ≥ 1`.
//!
//! Every finite `f64` is a dyadic rational, so after scaling by a common
//! power of two the operator, the data and all Krylov vectors are integer.
//! The minimiser over the monomial basis `R_0, A R_0, …` solves a Hankel
//! system of moments `⟨R_0, A^p R_0⟩`, which is eliminated fraction-free.
//! Only the final conversion back to `f64` rounds.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use super::InverseProblem;
use crate::error::{Error, Result};

pub const MAX_DIM: usize = 64;

/// Integer vector `v · 2^{-shift}`.
fn to_dyadic(x: &[f64]) -> (Vec<BigInt>, i64) {
    let mut parts = Vec::with_capacity(x.len());
    let mut shift = 0i64;
    for &v in x {
        if v == 0.0 {
            parts.push((0i64, 0i64));
            continue;
        }
        let bits = v.abs().to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = (bits & ((1u64 << 52) - 1)) as i64;
        let (mantissa, e) = if exp == 0 {
            (frac, -1074)
        } else {
            (frac | (1i64 << 52), exp - 1075)
        };
        let m = if v < 0.0 { -mantissa } else { mantissa };
        shift = shift.max(-e);
        parts.push((m, e));
    }
    let ints = parts
        .into_iter()
        .map(|(m, e)| BigInt::from(m) << ((e + shift) as usize))
        .collect();
    (ints, shift)
}

fn dot(a: &[BigInt], b: &[BigInt]) -> BigInt {
    a.iter()
        .zip(b)
        .filter(|(x, y)| !x.is_zero() && !y.is_zero())
        .map(|(x, y)| x * y)
        .sum()
}

fn matvec(a: &[Vec<BigInt>], x: &[BigInt]) -> Vec<BigInt> {
    a.iter().map(|row| dot(row, x)).collect()
}

/// Exact θ-iterates `f_0, …, f_{n_max}` (repeating the last one once the
/// Krylov space is exhausted), rounded to `f64` at the end.
pub fn brute_force_iterates(problem: &InverseProblem, theta: u32, n_max: usize) -> Result<Vec<Vec<f64>>> {
    if theta < 1 {
        return Err(Error::InvalidArgument("exact iterates need integer theta >= 1".into()));
    }
    let dim = problem.dim();
    if dim > MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "exact iterates limited to dimension {MAX_DIM}, got {dim}"
        )));
    }
    let op = problem.operator();
    let mut columns = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        columns.push(op.apply(&e)?);
    }
    let flat: Vec<f64> = (0..dim).flat_map(|i| columns.iter().map(move |c| c[i])).collect();
    let (a_flat, s_a) = to_dyadic(&flat);
    let a: Vec<Vec<BigInt>> = a_flat.chunks(dim.max(1)).map(|r| r.to_vec()).collect();
    // The moment formulation needs the assembled matrix to be exactly
    // symmetric; FFT-based operators are only symmetric up to rounding.
    if (0..dim).any(|i| (0..i).any(|j| a[i][j] != a[j][i])) {
        return Err(Error::InvalidArgument(
            "exact iterates need an operator whose assembled matrix is exactly symmetric".into(),
        ));
    }
    let (f0, s_f) = to_dyadic(problem.initial());
    let (g, s_g) = to_dyadic(problem.datum());

    // R_0 = A f_0 − g, scaled by 2^{s_r}.
    let s_r = s_a + s_f + s_g;
    let af0 = matvec(&a, &f0);
    let r0: Vec<BigInt> = af0
        .iter()
        .zip(&g)
        .map(|(x, y)| (x << s_g as usize) - (y << (s_a + s_f) as usize))
        .collect();

    let n_max = n_max.min(dim);
    let mut out = vec![problem.initial().to_vec()];
    if n_max == 0 || r0.iter().all(Zero::is_zero) {
        return Ok(out);
    }

    // K̃_i = A_int^i R̃_0, so that K_i = K̃_i 2^{-(i s_a + s_r)}.
    let t = theta as usize;
    let p_max = t + 2 * (n_max - 1);
    let mut krylov = vec![r0];
    while krylov.len() <= p_max.div_ceil(2).max(n_max - 1) {
        let next = matvec(&a, krylov.last().unwrap());
        krylov.push(next);
    }
    let moment = |p: usize| dot(&krylov[p / 2], &krylov[p - p / 2]);
    let moments: Vec<BigInt> = (0..=p_max).map(moment).collect();

    // With c̃_k = c_k 2^{-k s_a} the system becomes H̃ c̃ = −2^{s_a} m̃_{θ−1+i}.
    let n = n_max;
    let mut h: Vec<Vec<BigInt>> = (0..n)
        .map(|i| {
            let mut row: Vec<BigInt> = (0..n).map(|k| moments[t + i + k].clone()).collect();
            row.push(-(moments[t - 1 + i].clone() << s_a as usize));
            row
        })
        .collect();

    // Bareiss elimination; the leading k rows then hold the triangular form
    // of every leading k x k system.
    let mut rank = n;
    let mut prev = BigInt::from(1);
    for k in 0..n {
        if h[k][k].is_zero() {
            rank = k;
            break;
        }
        for i in k + 1..n {
            for j in k + 1..=n {
                let v = (&h[i][j] * &h[k][k] - &h[i][k] * &h[k][j]) / &prev;
                h[i][j] = v;
            }
            h[i][k] = BigInt::zero();
        }
        prev = h[k][k].clone();
    }

    for size in 1..=n {
        if size > rank {
            let last = out.last().unwrap().clone();
            out.push(last);
            continue;
        }
        // Fraction-free back substitution: x = det · c̃ is integral.
        let det = &h[size - 1][size - 1];
        let mut x = vec![BigInt::zero(); size];
        for i in (0..size).rev() {
            let mut acc = det * &h[i][n];
            for j in i + 1..size {
                acc -= &h[i][j] * &x[j];
            }
            x[i] = acc / &h[i][i];
        }
        // f − f_0 = 2^{-s_r} Σ c̃_k K̃_k.
        let mut f = Vec::with_capacity(dim);
        for (coord, f0j) in problem.initial().iter().enumerate() {
            let num: BigInt = (0..size).map(|k| &x[k] * &krylov[k][coord]).sum();
            let den = det.clone() << s_r as usize;
            let delta = BigRational::new_raw(num, den).to_f64().unwrap_or(f64::NAN);
            f.push(f0j + delta);
        }
        out.push(f);
    }
    Ok(out)
}

pub fn brute_force_iterate(problem: &InverseProblem, theta: u32, n: usize) -> Result<Vec<f64>> {
    let mut all = brute_force_iterates(problem, theta, n)?;
    Ok(all.pop().unwrap())
}
