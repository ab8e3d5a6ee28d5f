#![allow(dead_code)]

use frozenperc::perron::{perron_root, DEFAULT_TOL};
use frozenperc::{Kernel, TypeMass};
use proptest::prelude::*;

pub fn tm(v: &[f64]) -> TypeMass {
    TypeMass::new(v.to_vec()).unwrap()
}

pub fn symmetric(k: usize, raw: &[f64]) -> Kernel {
    let mut rows = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            rows[i][j] = 0.5 * (raw[i * k + j] + raw[j * k + i]);
        }
    }
    Kernel::new(rows).unwrap()
}

pub fn probability(w: &[f64]) -> TypeMass {
    let s: f64 = w.iter().sum();
    tm(&w.iter().map(|x| x / s).collect::<Vec<_>>())
}

/// Strictly positive kernel with entries in `[lo, hi]` and a positive
/// probability vector, `k` in `1..=max_k`.
pub fn positive_instance(max_k: usize, lo: f64, hi: f64) -> impl Strategy<Value = (Kernel, TypeMass)> {
    (1..=max_k)
        .prop_flat_map(move |k| {
            (proptest::collection::vec(lo..hi, k * k), proptest::collection::vec(0.05f64..1.0, k))
        })
        .prop_map(|(raw, w)| (symmetric(w.len(), &raw), probability(&w)))
}

/// Positive instance rescaled so that `ρ(κ∘π) = target`.
pub fn with_root(
    max_k: usize,
    target: impl Strategy<Value = f64>,
) -> impl Strategy<Value = (Kernel, TypeMass, f64)> {
    (positive_instance(max_k, 0.05, 2.0), target).prop_map(|((kappa, pi), r)| {
        let rho = perron_root(&kappa, &pi, DEFAULT_TOL).unwrap();
        (kappa.scaled(r / rho), pi, r)
    })
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}
