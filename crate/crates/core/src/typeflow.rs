//! The frozen percolation type flow.
//!
//! Given an initial kernel `κ` and type distribution `π(0)`, the flow is
//! constant up to the critical time `t_c` where `ρ((κ + t_c 1) ∘ π(0)) = 1`.
//! Afterwards it stays on the critical manifold `ρ(κ(t) ∘ π(t)) = 1`,
//! `κ(t) = κ + t 1`, losing mass along the Perron eigenvector:
//! `dπ/dt = -μ(κ(t) ∘ π(t)) φ(t)`.
//!
//! The freeze rate `φ` is the unique rate that keeps `ρ` constant. With
//! `ν_i = μ_i / π_i` the right eigenvector, first-order perturbation of `ρ`
//! under `dκ/dt = 1`, `dπ/dt = -μ φ` gives `dρ/dt ∝ (Σμ)² - φ S` where
//! `S = Σ_ij μ_i κ_ij(t) μ_j² / π_j`; with `||μ||_1 = 1` that is `φ = 1 / S`.
//! The same expression holds off the manifold (it keeps any level of `ρ`
//! fixed), so it is safe to evaluate at intermediate Runge-Kutta stages.

use crate::error::{Error, Result};
use crate::kernel::{Kernel, TypeMass};
use crate::perron::{perron_left_warm, perron_root, symmetric_top, bullet, PerronPair, DEFAULT_TOL};

pub const DEFAULT_STEP: f64 = 1e-3;

/// Allowed `|ρ - 1|` for [`freeze_rate_phi`] inputs.
pub const CRITICALITY_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub pi: Vec<f64>,
    /// `μ(κ(t) ∘ π(t))`.
    pub mu: Vec<f64>,
    /// Mass-loss rate `φ(t)`; zero before `t_c`.
    pub phi: f64,
    /// `ρ(κ(t) ∘ π(t))`.
    pub rho: f64,
}

impl FlowState {
    /// Total alive mass `Φ(t) = ||π(t)||_1`.
    pub fn mass(&self) -> f64 {
        self.pi.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub t_c: f64,
    pub kappa0: Kernel,
    pub states: Vec<FlowState>,
}

impl FlowTrajectory {
    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.t)
    }

    pub fn t_end(&self) -> f64 {
        self.states.last().map_or(0.0, |s| s.t)
    }

    /// Index of the last grid point `<= t` (clamped to the grid).
    fn bracket(&self, t: f64) -> usize {
        let i = self.states.partition_point(|s| s.t <= t);
        i.saturating_sub(1).min(self.states.len().saturating_sub(2))
    }

    /// `π(t)` by linear interpolation between grid points, clamped at the ends.
    pub fn pi_at(&self, t: f64) -> Vec<f64> {
        if self.states.len() == 1 || t <= self.states[0].t {
            return self.states[0].pi.clone();
        }
        let last = self.states.last().expect("non-empty");
        if t >= last.t {
            return last.pi.clone();
        }
        let i = self.bracket(t);
        let (a, b) = (&self.states[i], &self.states[i + 1]);
        let w = (t - a.t) / (b.t - a.t);
        a.pi.iter().zip(&b.pi).map(|(x, y)| x + w * (y - x)).collect()
    }

    pub fn mass_at(&self, t: f64) -> f64 {
        self.pi_at(t).iter().sum()
    }

    /// `μ(κ(t) ∘ π(t))`, recomputed at the interpolated `π(t)`.
    pub fn mu_at(&self, t: f64) -> Result<Vec<f64>> {
        let pi = TypeMass::from_vec_unchecked(self.pi_at(t));
        Ok(perron_left_warm(&self.kappa0.shifted(t), &pi, DEFAULT_TOL, None)?.0.mu)
    }
}

fn check_initial(kappa0: &Kernel, pi0: &TypeMass) -> Result<()> {
    if kappa0.k() != pi0.k() {
        return Err(Error::Dimension { expected: kappa0.k(), got: pi0.k() });
    }
    if !pi0.is_strictly_positive() {
        return Err(Error::precondition("initial type distribution must be strictly positive"));
    }
    Ok(())
}

/// The unique `t >= 0` with `ρ((κ0 + t 1) ∘ π0) = 1`, by bisection on the
/// increasing map `t ↦ ρ`.
pub fn critical_time(kappa0: &Kernel, pi0: &TypeMass) -> Result<f64> {
    check_initial(kappa0, pi0)?;
    let rho0 = perron_root(kappa0, pi0, DEFAULT_TOL)?;
    if rho0 > 1.0 + 1e-12 {
        return Err(Error::precondition(format!("initial Perron root {rho0} exceeds 1 (supercritical start)")));
    }
    if rho0 >= 1.0 {
        return Ok(0.0);
    }
    let min_pi = pi0.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    // ρ dominates every diagonal entry, so ρ >= t min π >= 1 at the upper end.
    let mut lo = 0.0;
    let mut hi = 1.0 / min_pi + kappa0.max_entry();
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if perron_root(&kappa0.shifted(mid), pi0, DEFAULT_TOL)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn rate_from_pair(kappa_t: &Kernel, pi: &[f64], pair: &PerronPair) -> f64 {
    let k = pi.len();
    let mut s = 0.0;
    for i in 0..k {
        for j in 0..k {
            s += pair.mu[i] * kappa_t.get(i, j) * pair.mu[j] * pair.mu[j] / pi[j];
        }
    }
    1.0 / s
}

/// Freeze rate `φ = 1 / Σ_ij μ_i κ_ij(t) μ_j² / π_j` on the critical manifold.
pub fn freeze_rate_phi(kappa0: &Kernel, t: f64, pi: &TypeMass) -> Result<f64> {
    check_initial(kappa0, pi)?;
    let kappa_t = kappa0.shifted(t);
    let (pair, _) = perron_left_warm(&kappa_t, pi, DEFAULT_TOL, None)?;
    if (pair.rho - 1.0).abs() > CRITICALITY_SLACK {
        return Err(Error::precondition(format!("ρ(κ(t)∘π) = {} is not critical", pair.rho)));
    }
    Ok(rate_from_pair(&kappa_t, pi.as_slice(), &pair))
}

/// One-step integrator state on the critical manifold.
struct CriticalStepper<'a> {
    kappa0: &'a Kernel,
    pi0: Vec<f64>,
    kappa_max: f64,
    warm: Option<Vec<f64>>,
}

struct Velocity {
    pair: PerronPair,
    phi: f64,
}

impl CriticalStepper<'_> {
    fn velocity(&mut self, t: f64, pi: &[f64]) -> Result<Velocity> {
        let kappa_t = self.kappa0.shifted(t);
        let mass = TypeMass::from_vec_unchecked(pi.to_vec());
        let (pair, u) = perron_left_warm(&kappa_t, &mass, DEFAULT_TOL, self.warm.as_deref())?;
        self.warm = Some(u);
        let phi = rate_from_pair(&kappa_t, pi, &pair);
        Ok(Velocity { pair, phi })
    }

    fn state(&mut self, t: f64, pi: Vec<f64>) -> Result<(FlowState, Velocity)> {
        let v = self.velocity(t, &pi)?;
        let state = FlowState { t, pi, mu: v.pair.mu.clone(), phi: v.phi, rho: v.pair.rho };
        Ok((state, v))
    }

    /// RK4 from `(t, pi)` (whose velocity is `v1`) to `t + h`, then rescaling
    /// back onto `ρ = 1`. ρ is homogeneous of degree one in π, so the
    /// rescaling is an exact projection.
    fn step(&mut self, t: f64, pi: &[f64], v1: &Velocity, h: f64) -> Result<Vec<f64>> {
        let lift = |d: &Velocity, c: f64| -> Vec<f64> {
            pi.iter().zip(&d.pair.mu).map(|(p, m)| p - c * m * d.phi).collect()
        };
        let y2 = lift(v1, 0.5 * h);
        let v2 = self.velocity(t + 0.5 * h, &y2)?;
        let y3 = lift(&v2, 0.5 * h);
        let v3 = self.velocity(t + 0.5 * h, &y3)?;
        let y4 = lift(&v3, h);
        let v4 = self.velocity(t + h, &y4)?;
        let mut next: Vec<f64> = (0..pi.len())
            .map(|i| {
                let d = v1.pair.mu[i] * v1.phi
                    + 2.0 * v2.pair.mu[i] * v2.phi
                    + 2.0 * v3.pair.mu[i] * v3.phi
                    + v4.pair.mu[i] * v4.phi;
                pi[i] - h / 6.0 * d
            })
            .collect();
        let t1 = t + h;
        let b = bullet(&self.kappa0.shifted(t1), &TypeMass::from_vec_unchecked(next.clone()))?;
        let rho = symmetric_top(&b, DEFAULT_TOL, self.warm.as_deref())?.rho;
        next.iter_mut().for_each(|p| *p /= rho);
        let floor = (-(self.kappa_max + t1)).exp() / 2.0;
        for (i, (p, p0)) in next.iter().zip(&self.pi0).enumerate() {
            if !(*p >= p0 * floor) {
                return Err(Error::Numeric(format!(
                    "π_{} = {p:e} at t = {t1} fell below the positivity floor; reduce the step",
                    i + 1
                )));
            }
        }
        Ok(next)
    }
}

fn flow_grid(t_c: f64, t_end: f64, step: f64) -> Vec<f64> {
    let eps = 1e-9 * step;
    let mut grid = Vec::new();
    let pre_end = t_c.min(t_end);
    let mut n = 0usize;
    loop {
        let t = n as f64 * step;
        if t >= pre_end - eps {
            break;
        }
        grid.push(t);
        n += 1;
    }
    grid.push(pre_end);
    if t_end > t_c {
        let mut n = 1usize;
        loop {
            let t = t_c + n as f64 * step;
            if t >= t_end - eps {
                break;
            }
            grid.push(t);
            n += 1;
        }
        grid.push(t_end);
    }
    grid
}

/// Integrates the type flow on `[0, t_end]` with fixed step `step`.
///
/// The grid is `0, h, 2h, ...` before `t_c`, then `t_c, t_c + h, ...`, and
/// always ends at `t_end`; halving the step therefore refines the grid.
pub fn integrate_flow(kappa0: &Kernel, pi0: &TypeMass, t_end: f64, step: f64) -> Result<FlowTrajectory> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::usage(format!("step must be positive, got {step}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::usage(format!("horizon must be finite and non-negative, got {t_end}")));
    }
    let t_c = critical_time(kappa0, pi0)?;
    if t_c == 0.0 && !kappa0.is_strictly_positive() {
        return Err(Error::precondition("a critical start needs a strictly positive kernel"));
    }
    let grid = flow_grid(t_c, t_end, step);
    let mut stepper = CriticalStepper {
        kappa0,
        pi0: pi0.as_slice().to_vec(),
        kappa_max: kappa0.max_entry(),
        warm: None,
    };
    let mut states = Vec::with_capacity(grid.len());
    let mut pending = None;
    for (n, &t) in grid.iter().enumerate() {
        if t < t_c || t_c > t_end {
            let (mut s, _) = stepper.state(t, pi0.as_slice().to_vec())?;
            s.phi = 0.0;
            states.push(s);
            continue;
        }
        let (s, v) = match pending.take() {
            None => stepper.state(t, pi0.as_slice().to_vec())?,
            Some(pi) => stepper.state(t, pi)?,
        };
        if let Some(&t1) = grid.get(n + 1) {
            pending = Some(stepper.step(t, &s.pi, &v, t1 - t)?);
        }
        states.push(s);
    }
    Ok(FlowTrajectory { t_c, kappa0: kappa0.clone(), states })
}

/// Limit of `π(t) / Φ(t)` as `t → ∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub direction: Vec<f64>,
    pub converged: bool,
    /// Time of the last checkpoint reached.
    pub t_reached: f64,
    /// `ℓ1` change of the direction over the last doubling of time.
    pub change: f64,
}

/// Integrates with a geometrically growing step (`h = 1e-3 max(1, t)`) and
/// compares the normalised direction at checkpoints `T, 2T, 4T, ...`; stops
/// once two consecutive checkpoints differ by less than `tol` in `ℓ1`, or at
/// `t_max` (returning the last iterate, flagged unconverged).
pub fn asymptotic_direction(kappa0: &Kernel, pi0: &TypeMass, t_max: f64, tol: f64) -> Result<Direction> {
    if !(tol > 0.0) {
        return Err(Error::usage(format!("tolerance must be positive, got {tol}")));
    }
    let t_c = critical_time(kappa0, pi0)?;
    if kappa0.k() == 1 {
        return Ok(Direction { direction: vec![1.0], converged: true, t_reached: t_c, change: 0.0 });
    }
    if t_c == 0.0 && !kappa0.is_strictly_positive() {
        return Err(Error::precondition("a critical start needs a strictly positive kernel"));
    }
    let normalise = |pi: &[f64]| -> Vec<f64> {
        let s: f64 = pi.iter().sum();
        pi.iter().map(|p| p / s).collect()
    };
    let mut stepper = CriticalStepper {
        kappa0,
        pi0: pi0.as_slice().to_vec(),
        kappa_max: kappa0.max_entry(),
        warm: None,
    };
    let mut t = t_c;
    let mut pi = pi0.as_slice().to_vec();
    let mut checkpoint = 2.0 * t_c.max(0.5);
    let mut previous: Option<Vec<f64>> = None;
    let mut change = f64::INFINITY;
    loop {
        let (_, v) = stepper.state(t, pi.clone())?;
        let h = (DEFAULT_STEP * t.max(1.0)).min(checkpoint - t);
        pi = stepper.step(t, &pi, &v, h)?;
        t += h;
        if t < checkpoint - 1e-12 * checkpoint {
            continue;
        }
        t = checkpoint;
        let d = normalise(&pi);
        if let Some(prev) = &previous {
            change = d.iter().zip(prev).map(|(a, b)| (a - b).abs()).sum();
            if change < tol {
                return Ok(Direction { direction: d, converged: true, t_reached: t, change });
            }
        }
        if 2.0 * checkpoint > t_max {
            return Ok(Direction { direction: d, converged: false, t_reached: t, change });
        }
        previous = Some(d);
        checkpoint *= 2.0;
    }
}
