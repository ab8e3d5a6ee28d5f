use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::fpsim::fmt_f64;
use crate::smol::SpectrumTrajectory;
use crate::typeflow::FlowTrajectory;

/// `flow.csv`: `t,phi,rate,rho,pi_1..pi_k,mu_1..mu_k` where `phi` is the
/// alive mass and `rate` the freezing rate.
pub fn write_flow_csv(flow: &FlowTrajectory, path: &Path) -> Result<()> {
    let k = flow.kappa0.k();
    let mut s = String::from("t,phi,rate,rho");
    for prefix in ["pi", "mu"] {
        for i in 1..=k {
            write!(s, ",{prefix}_{i}").unwrap();
        }
    }
    s.push('\n');
    for st in &flow.states {
        write!(s, "{},{},{},{}", fmt_f64(st.t), fmt_f64(st.mass()), fmt_f64(st.phi), fmt_f64(st.rho)).unwrap();
        for x in st.pi.iter().chain(&st.mu) {
            write!(s, ",{}", fmt_f64(*x)).unwrap();
        }
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// `smol.csv`: `t,phi,leaked,v_1..v_L`.
pub fn write_smol_csv(traj: &SpectrumTrajectory, path: &Path) -> Result<()> {
    let max = traj.states.first().map_or(0, |s| s.max_size());
    let mut s = String::from("t,phi,leaked");
    for l in 1..=max {
        write!(s, ",v_{l}").unwrap();
    }
    s.push('\n');
    for ((t, st), phi) in traj.times.iter().zip(&traj.states).zip(&traj.phi_total) {
        write!(s, "{},{},{}", fmt_f64(*t), fmt_f64(*phi), fmt_f64(st.leaked)).unwrap();
        for x in st.as_slice() {
            write!(s, ",{}", fmt_f64(*x)).unwrap();
        }
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}
