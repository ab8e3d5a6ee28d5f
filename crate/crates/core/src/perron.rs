//! Perron-Frobenius toolkit for matrices of the form `kappa ∘ pi`.
//!
//! `kappa ∘ pi` (entries `kappa[i][j] * pi[j]`) is not symmetric, but it is
//! similar to the symmetric matrix `kappa • pi` with entries
//! `sqrt(pi[i]) kappa[i][j] sqrt(pi[j])`. All eigen-computations here run
//! power iteration on the symmetric form, where the spectrum is real and the
//! Rayleigh quotient converges at twice the rate of the eigenvector. If `u`
//! is the top eigenvector of `kappa • pi` then `sqrt(pi) * u` is the left
//! eigenvector of `kappa ∘ pi` and `u / sqrt(pi)` the right one.

use crate::error::{Error, Result};
use crate::kernel::{Kernel, SquareMatrix, TypeMass};

pub const DEFAULT_TOL: f64 = 1e-12;

/// Principal eigen-data of `kappa ∘ pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerronPair {
    pub rho: f64,
    /// Left eigenvector, `||mu||_1 = 1`.
    pub mu: Vec<f64>,
    /// Right eigenvector `nu[i] = mu[i] / pi[i]`, scaled so that `nu · pi = 1`.
    pub nu: Vec<f64>,
    /// `max_i |[mu (kappa ∘ pi)]_i - rho mu_i|`.
    pub residual: f64,
}

fn check_dims(kappa: &Kernel, pi: &TypeMass) -> Result<()> {
    if kappa.k() != pi.k() {
        return Err(Error::Dimension { expected: kappa.k(), got: pi.k() });
    }
    Ok(())
}

/// `(kappa ∘ pi)[i][j] = kappa[i][j] * pi[j]`.
pub fn circ(kappa: &Kernel, pi: &TypeMass) -> Result<SquareMatrix> {
    check_dims(kappa, pi)?;
    let k = kappa.k();
    let mut m = SquareMatrix::zeros(k);
    for i in 0..k {
        for j in 0..k {
            m.set(i, j, kappa.get(i, j) * pi[j]);
        }
    }
    Ok(m)
}

/// `(kappa • pi)[i][j] = sqrt(pi[i]) kappa[i][j] sqrt(pi[j])`, symmetric and
/// isospectral with `kappa ∘ pi`.
pub fn bullet(kappa: &Kernel, pi: &TypeMass) -> Result<SquareMatrix> {
    check_dims(kappa, pi)?;
    let k = kappa.k();
    let sq: Vec<f64> = pi.as_slice().iter().map(|p| p.sqrt()).collect();
    let mut m = SquareMatrix::zeros(k);
    for i in 0..k {
        for j in i..k {
            let v = sq[i] * kappa.get(i, j) * sq[j];
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    Ok(m)
}

fn iteration_cap(k: usize, tol: f64) -> usize {
    let logs = (1.0 / tol).ln().max(1.0);
    ((100 * k) as f64 * logs).ceil() as usize
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn max_abs_row_sum(b: &SquareMatrix) -> f64 {
    b.rows().iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Top eigenpair of a non-negative symmetric matrix.
#[derive(Debug, Clone)]
pub(crate) struct SymmetricTop {
    pub rho: f64,
    /// Unit 2-norm, entrywise non-negative.
    pub vector: Vec<f64>,
}

const STALL_WINDOW: usize = 100;

/// Power iteration on a symmetric non-negative matrix.
///
/// Convergence is declared when `||Bx - θx||_∞ <= tol * θ`. If the plain
/// iteration stagnates (residual not shrinking by 10% over a window, which
/// happens when `-ρ` is also an eigenvalue) it continues on `B + (R/2) I`
/// with `R` the largest row sum, separating `ρ` from the rest of the
/// spectrum.
pub(crate) fn symmetric_top(b: &SquareMatrix, tol: f64, start: Option<&[f64]>) -> Result<SymmetricTop> {
    if !(tol > 0.0) {
        return Err(Error::usage(format!("tolerance must be positive, got {tol}")));
    }
    let k = b.k();
    if b.is_zero() {
        return Ok(SymmetricTop { rho: 0.0, vector: vec![1.0 / (k as f64).sqrt(); k] });
    }
    let cap = iteration_cap(k, tol);
    let mut x: Vec<f64> = match start {
        Some(s) if s.len() == k && s.iter().all(|v| *v > 0.0 && v.is_finite()) => s.to_vec(),
        _ => vec![1.0; k],
    };
    let n = norm2(&x);
    x.iter_mut().for_each(|v| *v /= n);

    let restart_shift = 0.5 * max_abs_row_sum(b);
    let mut shift = 0.0;
    let mut residual = f64::INFINITY;
    let mut checkpoint = f64::INFINITY;
    for iter in 0..cap {
        let bx = b.mul_vec(&x);
        let theta: f64 = x.iter().zip(&bx).map(|(a, c)| a * c).sum();
        residual = bx.iter().zip(&x).map(|(c, a)| (c - theta * a).abs()).fold(0.0, f64::max);
        if residual <= tol * theta.abs().max(f64::MIN_POSITIVE) {
            return Ok(SymmetricTop { rho: theta, vector: x });
        }
        if shift == 0.0 && iter % STALL_WINDOW == 0 {
            if iter >= cap / 2 || residual > 0.9 * checkpoint {
                shift = restart_shift;
            }
            checkpoint = residual;
        }
        let mut y: Vec<f64> = bx.iter().zip(&x).map(|(c, a)| c + shift * a).collect();
        let ny = norm2(&y);
        if ny == 0.0 {
            // x lies in the kernel of B (possible only for reducible B and a
            // warm start supported off the dominant block); retry from ones.
            y = vec![1.0 / (k as f64).sqrt(); k];
        } else {
            y.iter_mut().for_each(|v| *v /= ny);
        }
        x = y;
    }
    Err(Error::NoConvergence { iterations: cap, residual, last_iterate: x })
}

/// Connected components of the off-diagonal support of a symmetric matrix.
fn irreducible_blocks(b: &SquareMatrix) -> Vec<Vec<usize>> {
    let k = b.k();
    let mut label = vec![usize::MAX; k];
    let mut blocks = Vec::new();
    for s in 0..k {
        if label[s] != usize::MAX {
            continue;
        }
        let id = blocks.len();
        let mut members = vec![s];
        label[s] = id;
        let mut head = 0;
        while head < members.len() {
            let i = members[head];
            head += 1;
            for j in 0..k {
                if label[j] == usize::MAX && b.get(i, j) != 0.0 {
                    label[j] = id;
                    members.push(j);
                }
            }
        }
        members.sort_unstable();
        blocks.push(members);
    }
    blocks
}

fn sub_matrix(b: &SquareMatrix, idx: &[usize]) -> SquareMatrix {
    let mut m = SquareMatrix::zeros(idx.len());
    for (a, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            m.set(a, c, b.get(i, j));
        }
    }
    m
}

/// Rejects symmetric matrices whose top eigenvalue is shared by two
/// irreducible blocks. Irreducible blocks have simple Perron roots, so the
/// only way to lose simplicity is a tie between blocks.
fn check_simple(b: &SquareMatrix, tol: f64) -> Result<()> {
    let blocks = irreducible_blocks(b);
    if blocks.len() < 2 {
        return Ok(());
    }
    let mut roots = blocks
        .iter()
        .map(|idx| symmetric_top(&sub_matrix(b, idx), tol, None).map(|t| t.rho))
        .collect::<Result<Vec<_>>>()?;
    roots.sort_by(|a, c| c.total_cmp(a));
    let gap = roots[0] - roots[1];
    if gap <= 10.0 * tol * roots[0].max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate { gap });
    }
    Ok(())
}

/// Perron root `ρ(kappa ∘ pi)`.
pub fn perron_root(kappa: &Kernel, pi: &TypeMass, tol: f64) -> Result<f64> {
    let b = bullet(kappa, pi)?;
    Ok(symmetric_top(&b, tol, None)?.rho)
}

/// Perron root and eigenvectors of `kappa ∘ pi`. Requires `pi > 0`.
pub fn perron_left(kappa: &Kernel, pi: &TypeMass, tol: f64) -> Result<PerronPair> {
    perron_left_warm(kappa, pi, tol, None).map(|(pair, _)| pair)
}

/// As [`perron_left`], seeding power iteration with `warm` (a previous
/// eigenvector of the symmetric form). Returns that eigenvector alongside
/// the pair so consecutive solves along a trajectory can chain.
pub(crate) fn perron_left_warm(
    kappa: &Kernel,
    pi: &TypeMass,
    tol: f64,
    warm: Option<&[f64]>,
) -> Result<(PerronPair, Vec<f64>)> {
    check_dims(kappa, pi)?;
    if !pi.is_strictly_positive() {
        return Err(Error::precondition("right eigenvector needs every type mass to be positive"));
    }
    let b = bullet(kappa, pi)?;
    if b.is_zero() {
        return Err(Error::Degenerate { gap: 0.0 });
    }
    check_simple(&b, tol)?;
    let top = symmetric_top(&b, tol, warm)?;
    let p = pi.as_slice();
    let mut mu: Vec<f64> = top.vector.iter().zip(p).map(|(u, q)| u.max(0.0) * q.sqrt()).collect();
    let s: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|m| *m /= s);
    let mut nu: Vec<f64> = mu.iter().zip(p).map(|(m, q)| m / q).collect();
    let dot: f64 = nu.iter().zip(p).map(|(a, q)| a * q).sum();
    nu.iter_mut().for_each(|v| *v /= dot);

    let a = circ(kappa, pi)?;
    let mu_a = a.vec_mul(&mu);
    let residual = mu_a.iter().zip(&mu).map(|(x, m)| (x - top.rho * m).abs()).fold(0.0, f64::max);
    Ok((PerronPair { rho: top.rho, mu, nu, residual }, top.vector))
}

/// Perron projection: `v A^R / ||v A^R||_1` with `A = kappa ∘ pi`,
/// renormalising after every multiplication.
pub fn perron_project(kappa: &Kernel, pi: &TypeMass, v: &[f64], rounds: usize) -> Result<Vec<f64>> {
    check_dims(kappa, pi)?;
    if v.len() != kappa.k() {
        return Err(Error::Dimension { expected: kappa.k(), got: v.len() });
    }
    if rounds == 0 {
        return Err(Error::usage("projection needs at least one round"));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) || v.iter().all(|x| *x == 0.0) {
        return Err(Error::usage("projected vector must be non-negative and non-zero"));
    }
    let a = circ(kappa, pi)?;
    let mut x = v.to_vec();
    for _ in 0..rounds {
        x = a.vec_mul(&x);
        let s: f64 = x.iter().sum();
        if s == 0.0 {
            return Err(Error::Numeric("vector annihilated by kappa ∘ pi".into()));
        }
        x.iter_mut().for_each(|c| *c /= s);
    }
    Ok(x)
}

/// Collatz-Wielandt bounds `(min_i [xA]_i / x_i, max_i [xA]_i / x_i)` for a
/// strictly positive probe `x`; they bracket `ρ(A)`.
pub fn collatz_wielandt_bounds(a: &SquareMatrix, x: &[f64]) -> Result<(f64, f64)> {
    if x.len() != a.k() {
        return Err(Error::Dimension { expected: a.k(), got: x.len() });
    }
    if x.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::usage("Collatz-Wielandt probe must be strictly positive"));
    }
    let xa = a.vec_mul(x);
    let ratios = xa.iter().zip(x).map(|(y, v)| y / v);
    Ok(ratios.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r))))
}

/// Principal left eigenvector (`ℓ1`-normalised) and root of a general
/// entrywise-positive matrix, by direct power iteration on `x ↦ xA`.
pub fn matrix_perron_left(a: &SquareMatrix, tol: f64) -> Result<(f64, Vec<f64>)> {
    let k = a.k();
    if a.rows().iter().flatten().any(|v| !(*v > 0.0)) {
        return Err(Error::usage("matrix must be entrywise positive"));
    }
    let cap = iteration_cap(k, tol);
    let mut x = vec![1.0 / k as f64; k];
    let mut err = f64::INFINITY;
    for _ in 0..cap {
        let y = a.vec_mul(&x);
        let s: f64 = y.iter().sum();
        let y: Vec<f64> = y.iter().map(|v| v / s).collect();
        err = y.iter().zip(&x).map(|(p, q)| (p - q).abs()).sum();
        x = y;
        if err <= tol {
            // ||x||_1 = 1 so the ℓ1 norm of xA is the eigenvalue.
            return Ok((a.vec_mul(&x).iter().sum(), x));
        }
    }
    Err(Error::NoConvergence { iterations: cap, residual: err, last_iterate: x })
}
