//! Kernels, type-mass vectors and the small dense matrices built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(pi) <= 1` for a subdistribution.
pub const MASS_SLACK: f64 = 1e-12;

/// A `k x k` symmetric matrix with non-negative entries: the connection
/// intensities between vertex types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Kernel {
    k: usize,
    entries: Vec<f64>,
}

impl Kernel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        if k == 0 {
            return Err(Error::usage("kernel must have at least one type"));
        }
        let mut entries = Vec::with_capacity(k * k);
        for row in &rows {
            if row.len() != k {
                return Err(Error::Dimension { expected: k, got: row.len() });
            }
            entries.extend_from_slice(row);
        }
        Self::from_flat(k, entries)
    }

    /// Builds a kernel from row-major entries.
    pub fn from_flat(k: usize, entries: Vec<f64>) -> Result<Self> {
        if k == 0 {
            return Err(Error::usage("kernel must have at least one type"));
        }
        if entries.len() != k * k {
            return Err(Error::Dimension { expected: k * k, got: entries.len() });
        }
        for i in 0..k {
            for j in 0..k {
                let a = entries[i * k + j];
                if !a.is_finite() || a < 0.0 {
                    return Err(Error::usage(format!("kernel entry ({i},{j}) = {a} is not a finite non-negative number")));
                }
                if a != entries[j * k + i] {
                    return Err(Error::usage(format!("kernel is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Kernel { k, entries })
    }

    /// The 1-type kernel `(c)`.
    pub fn scalar(c: f64) -> Result<Self> {
        Self::from_flat(1, vec![c])
    }

    /// The `k x k` kernel with every entry equal to `c`.
    pub fn constant(k: usize, c: f64) -> Result<Self> {
        Self::from_flat(k, vec![c; k * k])
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.entries.iter().all(|&a| a > 0.0)
    }

    /// `kappa + t * 1`, the kernel after `t` units of uniform edge arrivals.
    pub fn shifted(&self, t: f64) -> Kernel {
        Kernel {
            k: self.k,
            entries: self.entries.iter().map(|a| a + t).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Kernel {
        Kernel {
            k: self.k,
            entries: self.entries.iter().map(|a| a * s).collect(),
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for Kernel {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Kernel::new(rows)
    }
}

impl From<Kernel> for Vec<Vec<f64>> {
    fn from(kernel: Kernel) -> Self {
        kernel.rows()
    }
}

/// Mass per vertex type: a subdistribution on `[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TypeMass(Vec<f64>);

impl TypeMass {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::usage("type mass must have at least one entry"));
        }
        if let Some((i, v)) = entries.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::usage(format!("type mass entry {i} = {v} is not a finite non-negative number")));
        }
        let total: f64 = entries.iter().sum();
        if total > 1.0 + MASS_SLACK {
            return Err(Error::usage(format!("type mass sums to {total} > 1")));
        }
        Ok(TypeMass(entries))
    }

    /// Uniform distribution over `k` types.
    pub fn uniform(k: usize) -> Self {
        TypeMass(vec![1.0 / k as f64; k])
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0)
    }

    /// `s * pi`, without the subdistribution check. Used internally where the
    /// caller knows the result stays a valid mass vector.
    pub(crate) fn from_vec_unchecked(entries: Vec<f64>) -> Self {
        TypeMass(entries)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for TypeMass {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        TypeMass::new(v)
    }
}

impl From<TypeMass> for Vec<f64> {
    fn from(p: TypeMass) -> Self {
        p.0
    }
}

impl std::ops::Index<usize> for TypeMass {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Dense row-major square matrix. `k` is small (at most a few dozen).
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    k: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(k: usize) -> Self {
        SquareMatrix { k, data: vec![0.0; k * k] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let k = rows.len();
        let mut data = Vec::with_capacity(k * k);
        for r in rows {
            assert_eq!(r.len(), k, "matrix rows must all have length {k}");
            data.extend_from_slice(r);
        }
        SquareMatrix { k, data }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.k + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.k + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.k).map(<[f64]>::to_vec).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&a| a == 0.0)
    }

    /// `A x` for a column vector `x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.k);
        self.data
            .chunks(self.k)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `x A` for a row vector `x`.
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.k);
        let mut out = vec![0.0; self.k];
        for (xi, row) in x.iter().zip(self.data.chunks(self.k)) {
            if *xi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(row) {
                *o += xi * a;
            }
        }
        out
    }

    /// Solves `A x = b` by Gaussian elimination with partial pivoting.
    /// Returns `None` when a pivot falls below `1e-300`.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let k = self.k;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for col in 0..k {
            let pivot = (col..k).max_by(|&r, &s| a[r * k + col].abs().total_cmp(&a[s * k + col].abs()))?;
            if a[pivot * k + col].abs() < 1e-300 {
                return None;
            }
            if pivot != col {
                for c in 0..k {
                    a.swap(pivot * k + c, col * k + c);
                }
                x.swap(pivot, col);
            }
            for r in col + 1..k {
                let f = a[r * k + col] / a[col * k + col];
                if f == 0.0 {
                    continue;
                }
                for c in col..k {
                    a[r * k + c] -= f * a[col * k + c];
                }
                x[r] -= f * x[col];
            }
        }
        for col in (0..k).rev() {
            let mut s = x[col];
            for c in col + 1..k {
                s -= a[col * k + c] * x[c];
            }
            x[col] = s / a[col * k + col];
        }
        Some(x)
    }
}
