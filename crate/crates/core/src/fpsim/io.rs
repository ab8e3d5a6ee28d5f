//! CSV and JSON persistence of simulation output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;

use super::{SimConfig, SimOutput};

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub trajectory: PathBuf,
    pub freezes: PathBuf,
    pub radii: Option<PathBuf>,
    pub meta: PathBuf,
}

#[derive(Serialize)]
struct Meta<'a> {
    config: &'a SimConfig,
    rng_draw_count: u64,
    edge_proposals: u64,
    edges_accepted: u64,
    freezes: usize,
}

/// Float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn type_header(prefix: &str, k: usize) -> String {
    (1..=k).map(|i| format!(",{prefix}_{i}")).collect()
}

/// Writes `trajectory.csv`, `freezes.csv`, `radii.csv` (when radius
/// profiles were recorded) and `meta.json` into `dir`.
pub fn write_outputs(output: &SimOutput, dir: &Path) -> Result<OutputFiles> {
    fs::create_dir_all(dir)?;
    let k = output.config.k();
    let n = output.n() as f64;

    let mut s = format!("t,phi{}\n", type_header("pi", k));
    for sample in &output.pi_trajectory {
        let phi = sample.counts.iter().sum::<usize>() as f64 / n;
        write!(s, "{},{}", fmt_f64(sample.t), fmt_f64(phi)).unwrap();
        for &c in &sample.counts {
            write!(s, ",{}", fmt_f64(c as f64 / n)).unwrap();
        }
        s.push('\n');
    }
    let trajectory = dir.join("trajectory.csv");
    fs::write(&trajectory, s)?;

    let mut s = format!("t,size{},struck_type\n", type_header("type", k));
    for f in &output.freeze_log {
        write!(s, "{},{}", fmt_f64(f.time), f.size).unwrap();
        for c in &f.type_counts {
            write!(s, ",{c}").unwrap();
        }
        writeln!(s, ",{}", f.struck_type + 1).unwrap();
    }
    let freezes = dir.join("freezes.csv");
    fs::write(&freezes, s)?;

    let radii = if output.config.record_radius {
        let mut s = format!("freeze_index,r{}\n", type_header("type", k));
        for (idx, f) in output.freeze_log.iter().enumerate() {
            for (r, row) in f.radius_counts.iter().flatten().enumerate() {
                write!(s, "{idx},{r}").unwrap();
                for c in row {
                    write!(s, ",{c}").unwrap();
                }
                s.push('\n');
            }
        }
        let path = dir.join("radii.csv");
        fs::write(&path, s)?;
        Some(path)
    } else {
        None
    };

    let meta = dir.join("meta.json");
    let m = Meta {
        config: &output.config,
        rng_draw_count: output.rng_draw_count,
        edge_proposals: output.edge_proposals,
        edges_accepted: output.edges_accepted,
        freezes: output.freeze_log.len(),
    };
    fs::write(&meta, serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(OutputFiles { trajectory, freezes, radii, meta })
}
