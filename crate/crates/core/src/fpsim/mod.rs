//! Event-driven simulation of k-type frozen percolation.
//!
//! Starting from `G^N(p, κ)`, every alive pair receives an edge at rate
//! `1/N` (at most once) and every alive vertex is struck by lightning at rate
//! `λ(N) = N^{-a}`, which freezes its whole component. Edge arrivals are
//! generated by proposing uniform alive pairs at the total pair rate and
//! discarding pairs that are already adjacent.

mod graph;
mod io;
mod stats;
mod unionfind;

pub use graph::{edge_key, pair_index, sample_irg, TypedGraph};
pub use io::{fmt_f64, write_outputs, OutputFiles};
pub use stats::{alive_edge_stats, component_spectrum, PairZ};
pub use unionfind::UnionFind;

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::rng::CountingRng;

pub const DEFAULT_LAMBDA_EXPONENT: f64 = 0.6;
pub const DEFAULT_GRID_STEP: f64 = 0.01;

fn default_lambda_exponent() -> f64 {
    DEFAULT_LAMBDA_EXPONENT
}

fn default_grid_step() -> f64 {
    DEFAULT_GRID_STEP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(rename = "N")]
    pub n: usize,
    /// Vertices per type; must sum to `n`.
    pub p: Vec<usize>,
    #[serde(rename = "kappa")]
    pub kappa0: Kernel,
    #[serde(default = "default_lambda_exponent")]
    pub lambda_exponent: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub record_radius: bool,
    pub seed: u64,
    /// Replaces `N^{-a}` when set. Zero disables freezing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_override: Option<f64>,
    /// Spacing of the regular `π^N` samples.
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
}

impl SimConfig {
    pub fn new(p: Vec<usize>, kappa0: Kernel, t_end: f64, seed: u64) -> Self {
        SimConfig {
            n: p.iter().sum(),
            p,
            kappa0,
            lambda_exponent: DEFAULT_LAMBDA_EXPONENT,
            t_end,
            snapshot_times: Vec::new(),
            record_radius: false,
            seed,
            lambda_override: None,
            grid_step: DEFAULT_GRID_STEP,
        }
    }

    pub fn k(&self) -> usize {
        self.p.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda_override.unwrap_or_else(|| (self.n as f64).powf(-self.lambda_exponent))
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.len() != self.kappa0.k() {
            return Err(Error::Dimension { expected: self.kappa0.k(), got: self.p.len() });
        }
        if self.p.iter().sum::<usize>() != self.n {
            return Err(Error::usage(format!("type counts sum to {}, expected N = {}", self.p.iter().sum::<usize>(), self.n)));
        }
        if self.n < 1 {
            return Err(Error::usage("N must be positive"));
        }
        match self.lambda_override {
            Some(l) if !(l >= 0.0 && l.is_finite()) => {
                return Err(Error::usage(format!("freezing rate must be finite and non-negative, got {l}")))
            }
            None if !(self.lambda_exponent > 0.0 && self.lambda_exponent < 1.0) => {
                return Err(Error::usage(format!("lambda_exponent must lie in (0, 1), got {}", self.lambda_exponent)))
            }
            _ => {}
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::usage(format!("T must be finite and non-negative, got {}", self.t_end)));
        }
        if !(self.grid_step > 0.0) {
            return Err(Error::usage("grid_step must be positive"));
        }
        if let Some(s) = self.snapshot_times.iter().find(|s| !(**s >= 0.0 && **s <= self.t_end)) {
            return Err(Error::usage(format!("snapshot time {s} outside [0, T]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    Grid,
    Freeze,
}

/// Alive vertex counts per type at time `t` (right-continuous).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiSample {
    pub t: f64,
    pub counts: Vec<usize>,
    pub kind: SampleKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreezeRecord {
    pub time: f64,
    pub struck_type: usize,
    pub size: usize,
    pub type_counts: Vec<usize>,
    /// `radius_counts[r][i]`: type-`i` vertices at graph distance `r` from
    /// the struck vertex.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_counts: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub alive_by_type: Vec<usize>,
    /// Alive-graph edge counts per type pair `i <= j`, see [`pair_index`].
    pub alive_edges: Vec<u64>,
    /// `(size, number of alive components of that size)`, sizes increasing.
    pub component_sizes: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub config: SimConfig,
    pub pi_trajectory: Vec<PiSample>,
    pub freeze_log: Vec<FreezeRecord>,
    pub snapshots: Vec<Snapshot>,
    pub edge_proposals: u64,
    pub edges_accepted: u64,
    pub rng_draw_count: u64,
}

impl SimOutput {
    pub fn n(&self) -> usize {
        self.config.n
    }

    /// Index of the last sample at or before `t`.
    fn sample_index(&self, t: f64) -> usize {
        self.pi_trajectory.partition_point(|s| s.t <= t).saturating_sub(1)
    }

    /// `π^N(t)`, right-continuous.
    pub fn pi_at(&self, t: f64) -> Vec<f64> {
        let n = self.n() as f64;
        self.pi_trajectory[self.sample_index(t)].counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// `Φ^N(t)`.
    pub fn mass_at(&self, t: f64) -> f64 {
        self.pi_at(t).iter().sum()
    }

    pub fn freeze_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.freeze_log.iter().map(|f| f.time)
    }
}

struct Engine {
    n: usize,
    k: usize,
    graph: TypedGraph,
    uf: UnionFind,
    alive: Vec<u32>,
    /// Position of each vertex in `alive`, `u32::MAX` once frozen.
    position: Vec<u32>,
    alive_by_type: Vec<usize>,
    alive_edges: Vec<u64>,
    frozen_total: usize,
    frozen_by_type: Vec<usize>,
    initial_by_type: Vec<usize>,
}

impl Engine {
    fn new(graph: TypedGraph, k: usize) -> Self {
        let n = graph.n();
        let mut uf = UnionFind::new(n);
        let mut alive_edges = vec![0u64; k * (k + 1) / 2];
        for (v, nb) in graph.adjacency.iter().enumerate() {
            for &w in nb.iter().filter(|&&w| w as usize > v) {
                uf.union(v as u32, w);
                alive_edges[pair_index(k, graph.types[v] as usize, graph.types[w as usize] as usize)] += 1;
            }
        }
        let alive_by_type = graph.type_counts(k);
        Engine {
            n,
            k,
            graph,
            uf,
            alive: (0..n as u32).collect(),
            position: (0..n as u32).collect(),
            initial_by_type: alive_by_type.clone(),
            alive_by_type,
            alive_edges,
            frozen_total: 0,
            frozen_by_type: vec![0; k],
        }
    }

    fn type_of(&self, v: u32) -> usize {
        self.graph.types[v as usize] as usize
    }

    fn propose_edge(&mut self, rng: &mut CountingRng) -> bool {
        let a = self.alive.len();
        let i = rng.random_range(0..a);
        let mut j = rng.random_range(0..a - 1);
        if j >= i {
            j += 1;
        }
        let (u, v) = (self.alive[i], self.alive[j]);
        if !self.graph.add_edge(u, v) {
            return false;
        }
        self.uf.union(u, v);
        let p = pair_index(self.k, self.type_of(u), self.type_of(v));
        self.alive_edges[p] += 1;
        true
    }

    fn radius_profile(&self, root: u32) -> Vec<Vec<usize>> {
        let mut dist: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
        let mut queue = VecDeque::from([root]);
        dist.insert(root, 0);
        let mut profile: Vec<Vec<usize>> = Vec::new();
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            if profile.len() <= d {
                profile.push(vec![0; self.k]);
            }
            profile[d][self.type_of(v)] += 1;
            for &w in &self.graph.adjacency[v as usize] {
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(w) {
                    e.insert(d + 1);
                    queue.push_back(w);
                }
            }
        }
        profile
    }

    fn freeze(&mut self, time: f64, rng: &mut CountingRng, record_radius: bool) -> Result<FreezeRecord> {
        let struck = self.alive[rng.random_range(0..self.alive.len())];
        let radius_counts = record_radius.then(|| self.radius_profile(struck));
        let mut members = Vec::with_capacity(self.uf.set_size(struck));
        self.uf.for_each_member(struck, |v| members.push(v));
        let mut type_counts = vec![0usize; self.k];
        for &v in &members {
            let t = self.type_of(v);
            type_counts[t] += 1;
            for &w in &self.graph.adjacency[v as usize] {
                if w > v {
                    let p = pair_index(self.k, t, self.graph.types[w as usize] as usize);
                    self.alive_edges[p] -= 1;
                }
            }
            let pos = self.position[v as usize] as usize;
            let last = *self.alive.last().expect("struck vertex is alive");
            self.alive.swap_remove(pos);
            if last != v {
                self.position[last as usize] = pos as u32;
            }
            self.position[v as usize] = u32::MAX;
        }
        for i in 0..self.k {
            self.alive_by_type[i] -= type_counts[i];
            self.frozen_by_type[i] += type_counts[i];
        }
        self.frozen_total += members.len();
        self.check_conservation()?;
        Ok(FreezeRecord {
            time,
            struck_type: self.type_of(struck),
            size: members.len(),
            type_counts,
            radius_counts,
        })
    }

    fn check_conservation(&self) -> Result<()> {
        let by_type_ok = (0..self.k).all(|i| self.alive_by_type[i] + self.frozen_by_type[i] == self.initial_by_type[i]);
        if self.alive.len() + self.frozen_total != self.n || !by_type_ok {
            return Err(Error::Internal(format!(
                "conservation violated: alive {} + frozen {} != N = {}",
                self.alive.len(),
                self.frozen_total,
                self.n
            )));
        }
        Ok(())
    }

    /// Recomputes alive components by BFS and compares with the union-find.
    fn verify_components(&mut self) -> Result<()> {
        let mut label = vec![u32::MAX; self.n];
        let mut queue = VecDeque::new();
        for idx in 0..self.alive.len() {
            let s = self.alive[idx];
            if label[s as usize] != u32::MAX {
                continue;
            }
            let root = self.uf.find(s);
            label[s as usize] = root;
            queue.push_back(s);
            let mut size = 0usize;
            while let Some(v) = queue.pop_front() {
                size += 1;
                if self.uf.find(v) != root {
                    return Err(Error::Internal(format!("vertex {v} reachable from {s} but in another set")));
                }
                for &w in &self.graph.adjacency[v as usize] {
                    if self.position[w as usize] == u32::MAX {
                        return Err(Error::Internal(format!("alive vertex {v} adjacent to frozen vertex {w}")));
                    }
                    if label[w as usize] == u32::MAX {
                        label[w as usize] = root;
                        queue.push_back(w);
                    }
                }
            }
            if size != self.uf.set_size(s) {
                return Err(Error::Internal(format!("component of {s}: BFS size {size}, union-find size {}", self.uf.set_size(s))));
            }
        }
        Ok(())
    }

    fn snapshot(&mut self, t: f64) -> Result<Snapshot> {
        self.verify_components()?;
        let mut hist = std::collections::BTreeMap::new();
        for idx in 0..self.alive.len() {
            let v = self.alive[idx];
            if self.uf.find(v) == v {
                *hist.entry(self.uf.set_size(v)).or_insert(0usize) += 1;
            }
        }
        Ok(Snapshot {
            t,
            alive_by_type: self.alive_by_type.clone(),
            alive_edges: self.alive_edges.clone(),
            component_sizes: hist.into_iter().collect(),
        })
    }
}

/// Runs one realisation of the process up to `config.t_end`.
pub fn run_simulation(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let mut rng = CountingRng::seed_from_u64(config.seed);
    let mut graph = TypedGraph::empty(graph::random_types(&config.p, &mut rng));
    graph::add_irg_edges(&mut graph, &config.kappa0, &mut rng);
    let mut engine = Engine::new(graph, config.k());

    let n = config.n as f64;
    let lambda = config.lambda();
    let mut snapshot_times = config.snapshot_times.clone();
    snapshot_times.sort_by(f64::total_cmp);
    let mut next_snapshot = 0;
    let mut grid_index = 0u64;

    let mut out = SimOutput {
        config: config.clone(),
        pi_trajectory: Vec::new(),
        freeze_log: Vec::new(),
        snapshots: Vec::new(),
        edge_proposals: 0,
        edges_accepted: 0,
        rng_draw_count: 0,
    };

    let mut t = 0.0;
    loop {
        let a = engine.alive.len() as f64;
        let edge_rate = a * (a - 1.0) / (2.0 * n);
        let total = edge_rate + lambda * a;
        let t_next = if total > 0.0 { t + rng.sample::<f64, _>(Exp1) / total } else { f64::INFINITY };

        // The state is constant on [t, t_next).
        loop {
            let g = grid_index as f64 * config.grid_step;
            if g >= t_next || g > config.t_end {
                break;
            }
            out.pi_trajectory.push(PiSample { t: g, counts: engine.alive_by_type.clone(), kind: SampleKind::Grid });
            grid_index += 1;
        }
        while next_snapshot < snapshot_times.len() && snapshot_times[next_snapshot] < t_next {
            out.snapshots.push(engine.snapshot(snapshot_times[next_snapshot])?);
            next_snapshot += 1;
        }
        if t_next > config.t_end {
            break;
        }
        t = t_next;

        if rng.random::<f64>() * total < edge_rate {
            out.edge_proposals += 1;
            if engine.propose_edge(&mut rng) {
                out.edges_accepted += 1;
            }
        } else {
            let record = engine.freeze(t, &mut rng, config.record_radius)?;
            out.pi_trajectory.push(PiSample { t, counts: engine.alive_by_type.clone(), kind: SampleKind::Freeze });
            out.freeze_log.push(record);
        }
    }
    let last_grid = (grid_index.max(1) - 1) as f64 * config.grid_step;
    if last_grid < config.t_end {
        out.pi_trajectory.push(PiSample {
            t: config.t_end,
            counts: engine.alive_by_type.clone(),
            kind: SampleKind::Grid,
        });
    }
    out.rng_draw_count = rng.draws();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SimConfig {
        let mut c = SimConfig::new(vec![600, 400], Kernel::new(vec![vec![1.0, 0.2], vec![0.2, 0.4]]).unwrap(), 3.0, seed);
        c.snapshot_times = vec![0.0, 1.0, 2.5];
        c.record_radius = true;
        c
    }

    #[test]
    fn conservation_and_monotonicity() {
        let out = run_simulation(&small(11)).unwrap();
        let n = out.n();
        let mut frozen = 0;
        for f in &out.freeze_log {
            frozen += f.size;
            assert_eq!(f.type_counts.iter().sum::<usize>(), f.size);
            let r = f.radius_counts.as_ref().unwrap();
            for i in 0..2 {
                assert_eq!(r.iter().map(|row| row[i]).sum::<usize>(), f.type_counts[i]);
            }
            assert_eq!(r[0].iter().sum::<usize>(), 1);
            assert_eq!(r[0][f.struck_type], 1);
            let alive: usize = out.pi_trajectory.iter().find(|s| s.t == f.time).unwrap().counts.iter().sum();
            assert_eq!(alive + frozen, n);
        }
        for w in out.freeze_log.windows(2) {
            assert!(w[0].time < w[1].time);
        }
        for w in out.pi_trajectory.windows(2) {
            assert!(w[0].t <= w[1].t);
            assert!(w[0].counts.iter().zip(&w[1].counts).all(|(a, b)| a >= b));
        }
        let last: usize = out.pi_trajectory.last().unwrap().counts.iter().sum();
        assert_eq!(last + frozen, n);
        assert_eq!(out.snapshots.len(), 3);
        assert_eq!(out.pi_trajectory.last().unwrap().t, 3.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let a = run_simulation(&small(5)).unwrap();
        let b = run_simulation(&small(5)).unwrap();
        assert_eq!(a, b);
        let c = run_simulation(&small(6)).unwrap();
        assert_ne!(a.freeze_log, c.freeze_log);
    }

    #[test]
    fn no_freezing_without_lightning() {
        let mut c = small(2);
        c.lambda_override = Some(0.0);
        let out = run_simulation(&c).unwrap();
        assert!(out.freeze_log.is_empty());
        assert!(out.pi_trajectory.iter().all(|s| s.counts == vec![600, 400]));
        assert!(out.edges_accepted > 0);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = small(1);
        c.lambda_exponent = 1.0;
        assert!(matches!(run_simulation(&c), Err(Error::Usage(_))));
        let mut c = small(1);
        c.n = 7;
        assert!(matches!(run_simulation(&c), Err(Error::Usage(_))));
        let mut c = small(1);
        c.snapshot_times = vec![4.0];
        assert!(run_simulation(&c).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = small(3);
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"N\":1000"));
        let back: SimConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
    }
}
