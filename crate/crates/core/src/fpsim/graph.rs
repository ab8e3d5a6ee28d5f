//! Typed graphs and the inhomogeneous random graph sampler.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::rng::CountingRng;

/// Key of the unordered pair `{a, b}`.
#[inline]
pub fn edge_key(a: u32, b: u32) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    (u64::from(lo) << 32) | u64::from(hi)
}

/// Index of the unordered type pair `i <= j` in row-major upper-triangular order.
#[inline]
pub fn pair_index(k: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * k - i * (i + 1) / 2 + j
}

/// Simple undirected graph on `0..n` with a type label per vertex.
#[derive(Debug, Clone)]
pub struct TypedGraph {
    pub types: Vec<u16>,
    pub adjacency: Vec<Vec<u32>>,
    edges: HashSet<u64>,
}

impl TypedGraph {
    pub fn empty(types: Vec<u16>) -> Self {
        let n = types.len();
        TypedGraph { types, adjacency: vec![Vec::new(); n], edges: HashSet::new() }
    }

    pub fn n(&self) -> usize {
        self.types.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.edges.contains(&edge_key(a, b))
    }

    /// Inserts `{a, b}`; returns false (and does nothing) if already present.
    pub fn add_edge(&mut self, a: u32, b: u32) -> bool {
        debug_assert_ne!(a, b);
        if !self.edges.insert(edge_key(a, b)) {
            return false;
        }
        self.adjacency[a as usize].push(b);
        self.adjacency[b as usize].push(a);
        true
    }

    /// Per-type vertex counts.
    pub fn type_counts(&self, k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        for &t in &self.types {
            c[t as usize] += 1;
        }
        c
    }
}

fn check_counts(p: &[usize], kappa: &Kernel) -> Result<()> {
    if p.len() != kappa.k() {
        return Err(Error::Dimension { expected: kappa.k(), got: p.len() });
    }
    if p.iter().sum::<usize>() > u32::MAX as usize {
        return Err(Error::usage("vertex count exceeds 2^32"));
    }
    if kappa.k() > u16::MAX as usize {
        return Err(Error::usage("too many types"));
    }
    Ok(())
}

/// Uniformly random balanced type function: `p[i]` vertices of type `i`.
pub(crate) fn random_types(p: &[usize], rng: &mut CountingRng) -> Vec<u16> {
    let mut types: Vec<u16> = p.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i as u16, c)).collect();
    types.shuffle(rng);
    types
}

/// `m`-th pair `(a, b)`, `a < b`, in the order `(0,1), (0,2), (1,2), (0,3), ...`.
fn triangular_pair(m: u64) -> (u64, u64) {
    let mut b = ((1.0 + (1.0 + 8.0 * m as f64).sqrt()) / 2.0) as u64;
    while b * (b - 1) / 2 > m {
        b -= 1;
    }
    while (b + 1) * b / 2 <= m {
        b += 1;
    }
    (m - b * (b - 1) / 2, b)
}

/// Adds to `graph` each edge between types `i` and `j` independently with
/// probability `1 - exp(-κ_ij / N)`, where `N` is the graph size.
pub(crate) fn add_irg_edges(graph: &mut TypedGraph, kappa: &Kernel, rng: &mut CountingRng) {
    let k = kappa.k();
    let n = graph.n() as f64;
    let mut by_type: Vec<Vec<u32>> = vec![Vec::new(); k];
    for (v, &t) in graph.types.iter().enumerate() {
        by_type[t as usize].push(v as u32);
    }
    for i in 0..k {
        for j in i..k {
            let rate = kappa.get(i, j);
            if rate == 0.0 {
                continue;
            }
            let (vi, vj) = (&by_type[i], &by_type[j]);
            let total: u64 = if i == j {
                let c = vi.len() as u64;
                c * c.saturating_sub(1) / 2
            } else {
                vi.len() as u64 * vj.len() as u64
            };
            // Gaps between successes of Bernoulli(1 - e^{-r}) trials are
            // geometric: floor(E / r) failures with E ~ Exp(1).
            let scale = n / rate;
            let mut m: u64 = 0;
            loop {
                let e: f64 = rng.sample(Exp1);
                let skip = (e * scale).floor();
                if skip >= (total - m) as f64 {
                    break;
                }
                m += skip as u64;
                let (a, b) = if i == j {
                    let (x, y) = triangular_pair(m);
                    (vi[x as usize], vi[y as usize])
                } else {
                    let w = vj.len() as u64;
                    (vi[(m / w) as usize], vj[(m % w) as usize])
                };
                graph.add_edge(a, b);
                m += 1;
                if m >= total {
                    break;
                }
            }
        }
    }
}

/// Samples the inhomogeneous random graph `G^N(p, κ)` with `N = Σ p`.
pub fn sample_irg(p: &[usize], kappa: &Kernel, seed: u64) -> Result<TypedGraph> {
    check_counts(p, kappa)?;
    let mut rng = CountingRng::seed_from_u64(seed);
    let mut graph = TypedGraph::empty(random_types(p, &mut rng));
    if graph.n() > 0 {
        add_irg_edges(&mut graph, kappa, &mut rng);
    }
    Ok(graph)
}
