//! Statistics of simulation snapshots.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::smol::SizeSpectrum;

use super::{pair_index, SimOutput};

/// Standardised alive-graph edge count for one type pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairZ {
    pub i: usize,
    pub j: usize,
    pub observed: u64,
    pub candidates: u64,
    pub expected: f64,
    pub z: f64,
    /// Set when there are no candidate pairs and `z` is reported as zero.
    pub empty: bool,
}

fn snapshot_index(output: &SimOutput, index: usize) -> Result<&super::Snapshot> {
    output
        .snapshots
        .get(index)
        .ok_or_else(|| Error::usage(format!("snapshot {index} does not exist ({} recorded)", output.snapshots.len())))
}

/// Compares each alive edge count with the binomial law of `G^N(Nπ^N(t), κ + t)`.
pub fn alive_edge_stats(output: &SimOutput, index: usize, kappa0: &Kernel) -> Result<Vec<PairZ>> {
    let snap = snapshot_index(output, index)?;
    let k = kappa0.k();
    if snap.alive_by_type.len() != k {
        return Err(Error::Dimension { expected: k, got: snap.alive_by_type.len() });
    }
    let n = output.n() as f64;
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in i..k {
            let (a, b) = (snap.alive_by_type[i] as u64, snap.alive_by_type[j] as u64);
            let candidates = if i == j { a * a.saturating_sub(1) / 2 } else { a * b };
            let observed = snap.alive_edges[pair_index(k, i, j)];
            let q = -(-(kappa0.get(i, j) + snap.t) / n).exp_m1();
            let expected = candidates as f64 * q;
            let var = expected * (1.0 - q);
            let (z, empty) = if candidates == 0 || var == 0.0 {
                (0.0, candidates == 0)
            } else {
                ((observed as f64 - expected) / var.sqrt(), false)
            };
            out.push(PairZ { i, j, observed, candidates, expected, z, empty });
        }
    }
    Ok(out)
}

/// Empirical `v^N_ℓ`: fraction of all `N` vertices that are alive and in a
/// size-`ℓ` component, for `ℓ <= max_size`; larger sizes go to `leaked`.
pub fn component_spectrum(output: &SimOutput, index: usize, max_size: usize) -> Result<SizeSpectrum> {
    if max_size == 0 {
        return Err(Error::usage("max_size must be positive"));
    }
    let snap = snapshot_index(output, index)?;
    let n = output.n() as f64;
    let mut v = vec![0.0; max_size];
    let mut leaked = 0.0;
    for &(size, count) in &snap.component_sizes {
        let mass = (size * count) as f64 / n;
        match v.get_mut(size - 1) {
            Some(slot) => *slot = mass,
            None => leaked += mass,
        }
    }
    SizeSpectrum::with_leaked(v, leaked)
}
