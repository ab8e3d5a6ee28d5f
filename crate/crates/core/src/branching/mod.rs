//! Multitype Poisson Galton-Watson trees `Ξ^{π,κ}`.
//!
//! The root is absent with probability `1 - Σπ`, otherwise of type `i` with
//! probability `π_i`; a type-`i` vertex has `Poisson(κ_ij π_j)` children of
//! type `j`, independently. The mean offspring matrix is therefore `κ ∘ π`.

pub mod prufer;

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::kernel::{Kernel, SquareMatrix, TypeMass};
use crate::perron::{circ, perron_root, DEFAULT_TOL};
use crate::rng::CountingRng;

/// Largest tree size accepted by [`progeny_exact`]; the cost grows as
/// `ℓ^(ℓ-2)` trees.
pub const MAX_EXACT_SIZE: usize = 8;

/// Below this distance from criticality the mean progeny is reported as
/// infinite.
pub const NEAR_CRITICAL: f64 = 1e-10;

/// Survival probabilities by root type.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalVector {
    pub zeta: Vec<f64>,
    pub iterations: usize,
}

/// Mean total progeny `E|Ξ|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Progeny {
    Finite(f64),
    /// `ρ(κ∘π) >= 1`, or within [`NEAR_CRITICAL`] of it (`near_singular`).
    Infinite { near_singular: bool },
}

impl Progeny {
    pub fn finite(self) -> Option<f64> {
        match self {
            Progeny::Finite(v) => Some(v),
            Progeny::Infinite { .. } => None,
        }
    }
}

/// Truncated total-progeny law.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgenyPmf {
    /// `probs[ℓ - 1] = P(|Ξ| = ℓ)`.
    pub probs: Vec<f64>,
    /// `P(Ξ = ∅) = 1 - Σπ`.
    pub empty_mass: f64,
    /// Mass of sizes above the truncation, including survival.
    pub tail_mass: f64,
}

/// Outcome of one simulated tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TreeSize {
    Finite(usize),
    /// The population exceeded the cap. This approximates, and is not the
    /// same event as, survival.
    Escaped,
}

fn check_dims(kappa: &Kernel, pi: &TypeMass) -> Result<()> {
    if kappa.k() != pi.k() {
        return Err(Error::Dimension { expected: kappa.k(), got: pi.k() });
    }
    Ok(())
}

/// One application of `F(z)_i = 1 - exp(-[(κ∘π) z]_i)`.
pub fn survival_map(kappa: &Kernel, pi: &TypeMass, z: &[f64]) -> Result<Vec<f64>> {
    let a = circ(kappa, pi)?;
    if z.len() != a.k() {
        return Err(Error::Dimension { expected: a.k(), got: z.len() });
    }
    Ok(apply_survival_map(&a, z))
}

fn apply_survival_map(a: &SquareMatrix, z: &[f64]) -> Vec<f64> {
    a.mul_vec(z).into_iter().map(|s| -(-s).exp_m1()).collect()
}

/// Maximal fixed point of the survival map, by monotone iteration from the
/// all-ones vector until the sup-norm step drops below `tol`.
pub fn survival(kappa: &Kernel, pi: &TypeMass, tol: f64) -> Result<SurvivalVector> {
    if !(tol > 0.0) {
        return Err(Error::usage(format!("tolerance must be positive, got {tol}")));
    }
    let a = circ(kappa, pi)?;
    let mut z = vec![1.0; a.k()];
    // Near criticality the iteration converges like 1/m; this cap is far
    // beyond anything needed for tol >= 1e-14.
    const CAP: usize = 100_000_000;
    let mut iterations = 0;
    while iterations < CAP {
        iterations += 1;
        let next = apply_survival_map(&a, &z);
        let step = next.iter().zip(&z).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        z = next;
        if step < tol {
            break;
        }
    }
    Ok(SurvivalVector { zeta: z, iterations })
}

/// `E|Ξ^{π,κ}| = πᵀ (I - κ∘π)^{-1} 1` when subcritical.
pub fn expected_progeny(kappa: &Kernel, pi: &TypeMass) -> Result<Progeny> {
    check_dims(kappa, pi)?;
    if pi.total() == 0.0 {
        return Ok(Progeny::Finite(0.0));
    }
    let rho = perron_root(kappa, pi, DEFAULT_TOL)?;
    if rho >= 1.0 {
        return Ok(Progeny::Infinite { near_singular: false });
    }
    if 1.0 - rho < NEAR_CRITICAL {
        return Ok(Progeny::Infinite { near_singular: true });
    }
    let k = kappa.k();
    let a = circ(kappa, pi)?;
    let mut m = SquareMatrix::zeros(k);
    for i in 0..k {
        for j in 0..k {
            let identity = if i == j { 1.0 } else { 0.0 };
            m.set(i, j, identity - a.get(i, j));
        }
    }
    let x = m
        .solve(&vec![1.0; k])
        .ok_or_else(|| Error::Numeric("I - κ∘π is singular below criticality".into()))?;
    Ok(Progeny::Finite(pi.as_slice().iter().zip(&x).map(|(p, v)| p * v).sum()))
}

fn vertex_weights(kappa: &Kernel, pi: &TypeMass) -> Vec<f64> {
    let k = kappa.k();
    (0..k)
        .map(|i| {
            let out: f64 = (0..k).map(|j| kappa.get(i, j) * pi[j]).sum();
            pi[i] * (-out).exp()
        })
        .collect()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|m| m as f64).product()
}

fn check_exact_size(ell: usize) -> Result<()> {
    if ell == 0 || ell > MAX_EXACT_SIZE {
        return Err(Error::usage(format!(
            "exact progeny is limited to 1 <= ℓ <= {MAX_EXACT_SIZE} (got {ell}); use the Monte Carlo sampler for larger sizes"
        )));
    }
    Ok(())
}

/// Sum over type assignments of one tree's weight, contracted leaf-to-root:
/// `f_v(i) = w_i Π_{children c} Σ_j κ_ij f_c(j)`.
fn tree_weight(kappa: &Kernel, w: &[f64], n: usize, edges: &[(usize, usize)]) -> f64 {
    let k = w.len();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut order = Vec::with_capacity(n);
    let mut parent = vec![usize::MAX; n];
    order.push(0);
    parent[0] = 0;
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        for &c in &adj[v] {
            if parent[c] == usize::MAX {
                parent[c] = v;
                order.push(c);
            }
        }
    }
    let mut f = vec![w.to_vec(); n];
    for &v in order.iter().rev() {
        if v == 0 {
            break;
        }
        let p = parent[v];
        for i in 0..k {
            let msg: f64 = (0..k).map(|j| kappa.get(i, j) * f[v][j]).sum();
            f[p][i] *= msg;
        }
    }
    f[0].iter().sum()
}

/// Exact `P(|Ξ^{π,κ}| = ℓ)` as a sum over labelled trees:
/// `(1/ℓ!) Σ_{rooted T} Σ_{types} Π_{edges} κ Π_m π_{i_m} exp(-Σ_j κ_{i_m j} π_j)`.
///
/// A tree's weight does not depend on its root, so the `ℓ` rootings of each
/// unrooted tree (enumerated by Prüfer sequence) are folded into one term.
pub fn progeny_exact(kappa: &Kernel, pi: &TypeMass, ell: usize) -> Result<f64> {
    check_dims(kappa, pi)?;
    check_exact_size(ell)?;
    let w = vertex_weights(kappa, pi);
    let mut total = 0.0;
    prufer::for_each_tree(ell, |edges| total += tree_weight(kappa, &w, ell, edges));
    Ok(total * ell as f64 / factorial(ell))
}

/// Literal evaluation of the tree sum for `ℓ <= 4`: every rooted tree and
/// every one of the `k^ℓ` type assignments. A self-check for
/// [`progeny_exact`].
pub fn progeny_exact_bruteforce(kappa: &Kernel, pi: &TypeMass, ell: usize) -> Result<f64> {
    check_dims(kappa, pi)?;
    if ell == 0 || ell > 4 {
        return Err(Error::usage("brute-force tree sum is limited to 1 <= ℓ <= 4"));
    }
    let k = kappa.k();
    let w = vertex_weights(kappa, pi);
    let assignments = k.pow(ell as u32);
    let mut total = 0.0;
    prufer::for_each_tree(ell, |edges| {
        for _root in 0..ell {
            for code in 0..assignments {
                let mut types = vec![0usize; ell];
                let mut c = code;
                for t in types.iter_mut() {
                    *t = c % k;
                    c /= k;
                }
                let edge_prod: f64 = edges.iter().map(|&(a, b)| kappa.get(types[a], types[b])).product();
                let vert_prod: f64 = types.iter().map(|&t| w[t]).product();
                total += edge_prod * vert_prod;
            }
        }
    });
    Ok(total / factorial(ell))
}

/// Exact law of `|Ξ|` truncated at `max_size <= MAX_EXACT_SIZE`.
pub fn progeny_pmf(kappa: &Kernel, pi: &TypeMass, max_size: usize) -> Result<ProgenyPmf> {
    check_exact_size(max_size)?;
    let probs = (1..=max_size).map(|ell| progeny_exact(kappa, pi, ell)).collect::<Result<Vec<_>>>()?;
    let empty_mass = 1.0 - pi.total();
    let tail_mass = 1.0 - empty_mass - probs.iter().sum::<f64>();
    Ok(ProgenyPmf { probs, empty_mass, tail_mass })
}

/// Breadth-first sampler of `|Ξ^{π,κ}|`. Offspring laws are precomputed;
/// one sampler owns one random stream.
#[derive(Debug, Clone)]
pub struct ProgenySampler {
    offspring: Vec<Vec<Option<Poisson<f64>>>>,
    pi: Vec<f64>,
    cap: usize,
    rng: CountingRng,
}

impl ProgenySampler {
    pub fn new(kappa: &Kernel, pi: &TypeMass, seed: u64, cap: usize) -> Result<Self> {
        check_dims(kappa, pi)?;
        if cap == 0 {
            return Err(Error::usage("sampler cap must be at least 1"));
        }
        let k = kappa.k();
        let offspring = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        let mean = kappa.get(i, j) * pi[j];
                        (mean > 0.0).then(|| Poisson::new(mean).expect("positive finite Poisson mean"))
                    })
                    .collect()
            })
            .collect();
        Ok(ProgenySampler {
            offspring,
            pi: pi.as_slice().to_vec(),
            cap,
            rng: CountingRng::seed_from_u64(seed),
        })
    }

    pub fn sample(&mut self) -> TreeSize {
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        let mut root = None;
        for (i, p) in self.pi.iter().enumerate() {
            acc += p;
            if u < acc {
                root = Some(i);
                break;
            }
        }
        let Some(root) = root else {
            return TreeSize::Finite(0);
        };
        // The total progeny does not depend on exploration order, so only
        // per-type counts of unexplored vertices are kept.
        let k = self.pi.len();
        let mut pending = vec![0usize; k];
        pending[root] = 1;
        let mut size = 1usize;
        let mut live = 1usize;
        while live > 0 {
            let i = pending.iter().position(|&c| c > 0).expect("live > 0");
            pending[i] -= 1;
            live -= 1;
            for j in 0..k {
                if let Some(d) = &self.offspring[i][j] {
                    let n = d.sample(&mut self.rng) as usize;
                    pending[j] += n;
                    live += n;
                    size += n;
                }
            }
            if size > self.cap {
                return TreeSize::Escaped;
            }
        }
        TreeSize::Finite(size)
    }

    pub fn rng_draws(&self) -> u64 {
        self.rng.draws()
    }
}

/// One tree size from a fresh stream seeded by `seed`.
pub fn progeny_sample(kappa: &Kernel, pi: &TypeMass, seed: u64, cap: usize) -> Result<TreeSize> {
    Ok(ProgenySampler::new(kappa, pi, seed, cap)?.sample())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tm(v: &[f64]) -> TypeMass {
        TypeMass::new(v.to_vec()).unwrap()
    }

    /// Scalar oracle: largest root of z = 1 - exp(-c z) on (0, 1] by bisection.
    fn scalar_survival_bisect(c: f64) -> f64 {
        let g = |z: f64| 1.0 - (-c * z).exp() - z;
        let (mut lo, mut hi) = (1e-9, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn borel(c: f64, ell: usize) -> f64 {
        let l = ell as f64;
        l.powi(ell as i32 - 1) * c.powi(ell as i32 - 1) * (-c * l).exp() / factorial(ell)
    }

    #[test]
    fn subcritical_scalar_dies_out() {
        let z = survival(&Kernel::scalar(0.5).unwrap(), &tm(&[1.0]), 1e-13).unwrap();
        assert!(z.zeta[0] < 1e-11);
    }

    #[test]
    fn supercritical_scalar_matches_bisection() {
        let oracle = scalar_survival_bisect(2.0);
        assert!((oracle - 0.796812).abs() < 1e-6);
        let z = survival(&Kernel::scalar(2.0).unwrap(), &tm(&[1.0]), 1e-14).unwrap();
        assert!((z.zeta[0] - oracle).abs() < 1e-12);
        let z2 = survival(&Kernel::constant(2, 2.0).unwrap(), &tm(&[0.5, 0.5]), 1e-14).unwrap();
        for v in z2.zeta {
            assert!((v - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_progeny_examples() {
        let p = expected_progeny(&Kernel::scalar(0.5).unwrap(), &tm(&[1.0])).unwrap();
        assert!((p.finite().unwrap() - 2.0).abs() < 1e-14);
        let p = expected_progeny(&Kernel::constant(2, 0.5).unwrap(), &tm(&[0.5, 0.5])).unwrap();
        assert!((p.finite().unwrap() - 2.0).abs() < 1e-14);
        let p = expected_progeny(&Kernel::scalar(0.5).unwrap(), &tm(&[0.0])).unwrap();
        assert_eq!(p, Progeny::Finite(0.0));
        let p = expected_progeny(&Kernel::scalar(2.0).unwrap(), &tm(&[1.0])).unwrap();
        assert_eq!(p, Progeny::Infinite { near_singular: false });
        let p = expected_progeny(&Kernel::scalar(1.0 - 1e-12).unwrap(), &tm(&[1.0])).unwrap();
        assert_eq!(p, Progeny::Infinite { near_singular: true });
    }

    #[test]
    fn exact_small_sizes() {
        let kappa = Kernel::scalar(0.5).unwrap();
        let one = tm(&[1.0]);
        assert!((progeny_exact(&kappa, &one, 1).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert!((progeny_exact(&kappa, &one, 2).unwrap() - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        let p = progeny_exact(&Kernel::scalar(1.0).unwrap(), &tm(&[0.5]), 1).unwrap();
        assert!((p - 0.5 * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn exact_matches_borel_for_one_type() {
        for &c in &[0.2, 0.5, 0.9, 1.0] {
            let kappa = Kernel::scalar(c).unwrap();
            for ell in 1..=MAX_EXACT_SIZE {
                let e = progeny_exact(&kappa, &tm(&[1.0]), ell).unwrap();
                let b = borel(c, ell);
                assert!((e - b).abs() < 1e-12, "c={c} ℓ={ell}: {e} vs {b}");
            }
        }
    }

    #[test]
    fn exact_agrees_with_bruteforce() {
        let kappa = Kernel::new(vec![
            vec![0.7, 0.2, 1.1],
            vec![0.2, 0.3, 0.4],
            vec![1.1, 0.4, 0.9],
        ])
        .unwrap();
        let pi = tm(&[0.3, 0.5, 0.15]);
        for ell in 1..=4 {
            let a = progeny_exact(&kappa, &pi, ell).unwrap();
            let b = progeny_exact_bruteforce(&kappa, &pi, ell).unwrap();
            assert!((a - b).abs() < 1e-15, "ℓ={ell}: {a} vs {b}");
        }
    }

    #[test]
    fn exact_size_cap() {
        let kappa = Kernel::scalar(0.5).unwrap();
        assert!(matches!(progeny_exact(&kappa, &tm(&[1.0]), 9), Err(Error::Usage(_))));
        assert!(progeny_exact(&kappa, &tm(&[1.0]), 0).is_err());
    }

    #[test]
    fn pmf_accounts_for_all_mass() {
        let pmf = progeny_pmf(&Kernel::scalar(0.5).unwrap(), &tm(&[0.8]), 8).unwrap();
        let total = pmf.empty_mass + pmf.probs.iter().sum::<f64>() + pmf.tail_mass;
        assert!((total - 1.0).abs() < 1e-12);
        assert!((pmf.empty_mass - 0.2).abs() < 1e-15);
        assert!(pmf.tail_mass > 0.0);
    }

    #[test]
    fn sampler_edge_cases() {
        let kappa = Kernel::scalar(3.0).unwrap();
        for seed in 0..50 {
            assert_eq!(progeny_sample(&kappa, &tm(&[0.0]), seed, 10).unwrap(), TreeSize::Finite(0));
        }
        let a = progeny_sample(&kappa, &tm(&[1.0]), 11, 1000).unwrap();
        let b = progeny_sample(&kappa, &tm(&[1.0]), 11, 1000).unwrap();
        assert_eq!(a, b);
        assert!(ProgenySampler::new(&kappa, &tm(&[1.0]), 0, 0).is_err());
    }
}
