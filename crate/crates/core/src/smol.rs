//! Truncated Smoluchowski coagulation equations with multiplicative kernel.
//!
//! `v_ℓ` is the mass in size-`ℓ` clusters:
//!
//! ```text
//! dv_ℓ/dt = (ℓ/2) Σ_{m<ℓ} v_m v_{ℓ-m} - ℓ v_ℓ Σ_m v_m
//! ```
//!
//! Sizes are truncated at `L`. Coagulation flux into sizes above `L` is not
//! reflected back; it is accumulated in [`SizeSpectrum::leaked`], which after
//! gelation plays the role of the gel.

use crate::error::{Error, Result};

/// Values above this (in magnitude) below zero abort integration.
pub const NEGATIVITY_LIMIT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SizeSpectrum {
    /// `v[ℓ - 1]` is the mass in size-`ℓ` clusters.
    v: Vec<f64>,
    /// Mass transported to sizes above the truncation.
    pub leaked: f64,
}

impl SizeSpectrum {
    pub fn new(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::usage("size spectrum needs at least one size class"));
        }
        if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
            return Err(Error::usage(format!("v_{} = {x} is not a finite non-negative number", i + 1)));
        }
        Ok(SizeSpectrum { v, leaked: 0.0 })
    }

    pub fn with_leaked(v: Vec<f64>, leaked: f64) -> Result<Self> {
        let mut s = Self::new(v)?;
        s.leaked = leaked;
        Ok(s)
    }

    /// All mass in singletons: `v = (mass, 0, 0, ...)`.
    pub fn monodisperse(max_size: usize, mass: f64) -> Result<Self> {
        let mut v = vec![0.0; max_size];
        if let Some(first) = v.first_mut() {
            *first = mass;
        }
        Self::new(v)
    }

    /// Truncation order `L`.
    pub fn max_size(&self) -> usize {
        self.v.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.v
    }

    /// `v_ℓ` for `ℓ >= 1`; zero above the truncation.
    pub fn get(&self, ell: usize) -> f64 {
        ell.checked_sub(1).and_then(|i| self.v.get(i)).copied().unwrap_or(0.0)
    }

    /// Total mass `Φ = Σ_ℓ v_ℓ` in the resolved sizes.
    pub fn total(&self) -> f64 {
        self.v.iter().sum()
    }

    pub fn first_moment(&self) -> f64 {
        self.v.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum()
    }
}

/// `1 / m1`, or infinity when the first moment vanishes.
pub fn gel_time_from_first_moment(m1: f64) -> f64 {
    if m1 > 0.0 {
        1.0 / m1
    } else {
        f64::INFINITY
    }
}

/// `T_gel = 1 / Σ ℓ v_ℓ(0)`, using the truncated first moment.
pub fn gel_time(v0: &SizeSpectrum) -> f64 {
    gel_time_from_first_moment(v0.first_moment())
}

/// Time derivative of a truncated spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct SmolRhs {
    pub dv: Vec<f64>,
    /// Rate at which mass coagulates into sizes above `L`.
    pub leak_rate: f64,
}

/// Right-hand side with the loss term taken over the resolved sizes.
pub fn smol_rhs(v: &SizeSpectrum) -> SmolRhs {
    rhs_impl(&v.v, v.total())
}

/// Right-hand side for the first `v.len()` sizes of an untruncated spectrum
/// whose full mass `Σ_{m>=1} v_m` is `total_mass`. The gain terms of sizes
/// `ℓ <= v.len()` only involve resolved sizes, so this is exact.
pub fn smol_rhs_with_mass(v: &[f64], total_mass: f64) -> Vec<f64> {
    rhs_impl(v, total_mass).dv
}

fn rhs_impl(v: &[f64], loss_mass: f64) -> SmolRhs {
    let max = v.len();
    let mut pair = vec![0.0; max + 1];
    let mut leak_rate = 0.0;
    for m in 1..=max {
        let vm = v[m - 1];
        if vm == 0.0 {
            continue;
        }
        // Ordered pairs (m, n); the (ℓ/2) prefactor accounts for both orders.
        for n in 1..=max {
            let p = vm * v[n - 1];
            if p == 0.0 {
                continue;
            }
            let s = m + n;
            if s <= max {
                pair[s] += p;
            } else {
                leak_rate += 0.5 * s as f64 * p;
            }
        }
    }
    let dv = (1..=max)
        .map(|ell| {
            let l = ell as f64;
            0.5 * l * pair[ell] - l * v[ell - 1] * loss_mass
        })
        .collect();
    SmolRhs { dv, leak_rate }
}

#[derive(Debug, Clone)]
pub struct SpectrumTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<SizeSpectrum>,
    /// `Φ(t)` over the resolved sizes.
    pub phi_total: Vec<f64>,
    pub t_gel: f64,
}

impl SpectrumTrajectory {
    pub fn final_state(&self) -> &SizeSpectrum {
        self.states.last().expect("trajectory has at least the initial state")
    }

    /// Index of the grid point nearest to `t`.
    pub fn index_near(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&s| s < t);
        if i == 0 {
            return 0;
        }
        if i == self.times.len() || (t - self.times[i - 1]) <= (self.times[i] - t) {
            i - 1
        } else {
            i
        }
    }
}

/// Time grid `0, h, 2h, ...` up to `t_end`, with `t_end` and (when inside the
/// window) `t_gel` inserted exactly.
fn aligned_grid(t_end: f64, step: f64, t_gel: f64) -> Vec<f64> {
    let n = (t_end / step).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    if t_gel > 0.0 && t_gel < t_end {
        grid.push(t_gel);
    }
    grid.push(t_end);
    grid.sort_by(f64::total_cmp);
    let eps = 1e-9 * step;
    grid.dedup_by(|a, b| (*a - *b).abs() <= eps);
    grid
}

fn rk4_step(v: &[f64], leaked: f64, h: f64) -> (Vec<f64>, f64) {
    let lift = |base: &[f64], d: &[f64], c: f64| -> Vec<f64> { base.iter().zip(d).map(|(x, y)| x + c * y).collect() };
    let total = |x: &[f64]| x.iter().sum::<f64>();
    let k1 = rhs_impl(v, total(v));
    let y2 = lift(v, &k1.dv, 0.5 * h);
    let k2 = rhs_impl(&y2, total(&y2));
    let y3 = lift(v, &k2.dv, 0.5 * h);
    let k3 = rhs_impl(&y3, total(&y3));
    let y4 = lift(v, &k3.dv, h);
    let k4 = rhs_impl(&y4, total(&y4));
    let next = (0..v.len())
        .map(|i| v[i] + h / 6.0 * (k1.dv[i] + 2.0 * k2.dv[i] + 2.0 * k3.dv[i] + k4.dv[i]))
        .collect();
    let leak = leaked + h / 6.0 * (k1.leak_rate + 2.0 * k2.leak_rate + 2.0 * k3.leak_rate + k4.leak_rate);
    (next, leak)
}

/// Classical fixed-step RK4 integration of the truncated system on
/// `[0, t_end]`, recording every grid point.
pub fn integrate_smol(v0: &SizeSpectrum, t_end: f64, step: f64) -> Result<SpectrumTrajectory> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::usage(format!("step must be positive, got {step}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::usage(format!("horizon must be finite and non-negative, got {t_end}")));
    }
    if v0.max_size() < 2 {
        return Err(Error::usage("truncation order must be at least 2"));
    }
    let t_gel = gel_time(v0);
    let grid = aligned_grid(t_end, step, t_gel);
    let mut states = Vec::with_capacity(grid.len());
    let mut phi_total = Vec::with_capacity(grid.len());
    states.push(v0.clone());
    phi_total.push(v0.total());
    let mut v = v0.v.clone();
    let mut leaked = v0.leaked;
    for w in grid.windows(2) {
        let h = w[1] - w[0];
        let (mut next, next_leak) = rk4_step(&v, leaked, h);
        if let Some((i, x)) = next.iter().enumerate().find(|(_, x)| !(**x >= -NEGATIVITY_LIMIT && x.is_finite())) {
            return Err(Error::Numeric(format!(
                "v_{} = {x:e} at t = {}: step {h} is too large for truncation {}, use a smaller step",
                i + 1,
                w[1],
                v.len()
            )));
        }
        next.iter_mut().for_each(|x| *x = x.max(0.0));
        v = next;
        leaked = next_leak;
        phi_total.push(v.iter().sum());
        states.push(SizeSpectrum { v: v.clone(), leaked });
    }
    Ok(SpectrumTrajectory { times: grid, states, phi_total, t_gel })
}
