use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use frozenperc::branching::{expected_progeny, progeny_exact, survival, Progeny};
use frozenperc::fpsim::{alive_edge_stats, fmt_f64, run_simulation, write_outputs};
use frozenperc::harness::{
    criticality_trace, frozen_composition_report, run_convergence_experiment, write_convergence, write_flow_csv,
    write_smol_csv, ExperimentConfig,
};
use frozenperc::smol::integrate_smol;
use frozenperc::typeflow::integrate_flow;
use frozenperc::{Error, Kernel, Result, TypeMass};

#[derive(Parser)]
#[command(name = "frozenperc", version, about = "Mean-field frozen percolation: simulation and limit solvers")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the particle system for every N and replica; writes trajectory, freeze and meta files.
    Simulate(Common),
    /// Integrate the type flow; writes flow.csv.
    Flow(Common),
    /// Integrate the Smoluchowski equations; writes smol.csv.
    Smol(Common),
    /// Branching-tree quantities: P(|Ξ| = ell), survival and mean progeny.
    Bp {
        /// Scalar or JSON matrix, e.g. 0.5 or [[1,0.2],[0.2,0.4]].
        #[arg(long)]
        kappa: String,
        /// Scalar or JSON array of type masses.
        #[arg(long)]
        pi: String,
        #[arg(long, default_value_t = 1)]
        ell: usize,
        /// Also print survival probabilities and the expected progeny.
        #[arg(long)]
        verbose: bool,
    },
    /// Convergence sweep over N_list; writes convergence.csv, report.json and flow.csv.
    Converge(Common),
    /// Frozen-component composition against μ at the largest N; writes composition.csv/json.
    Composition(Common),
    /// Alive-graph edge z-scores at each snapshot and the criticality trace.
    Stats(Common),
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let dir = cfg.out_dir.clone();
    Ok((cfg, dir))
}

fn parse_kernel(s: &str) -> Result<Kernel> {
    if let Ok(c) = s.trim().parse::<f64>() {
        return Kernel::scalar(c);
    }
    let rows: Vec<Vec<f64>> = serde_json::from_str(s).map_err(|e| Error::Usage(format!("bad --kappa: {e}")))?;
    Kernel::new(rows)
}

fn parse_mass(s: &str) -> Result<TypeMass> {
    if let Ok(x) = s.trim().parse::<f64>() {
        return TypeMass::new(vec![x]);
    }
    let v: Vec<f64> = serde_json::from_str(s).map_err(|e| Error::Usage(format!("bad --pi: {e}")))?;
    TypeMass::new(v)
}

fn simulate(common: &Common) -> Result<()> {
    let (cfg, dir) = load(common)?;
    cfg.validate_sweep()?;
    for &n in &cfg.n_list {
        for r in 0..cfg.replicas {
            let out = run_simulation(&cfg.sim_config(n, r)?)?;
            let sub = dir.join(format!("N{n}_r{r}"));
            write_outputs(&out, &sub)?;
            println!("N={n} replica={r}: {} freezes, Φ^N(T) = {:.6} -> {}", out.freeze_log.len(), out.mass_at(cfg.t_end), sub.display());
        }
    }
    Ok(())
}

fn flow(common: &Common) -> Result<()> {
    let (cfg, dir) = load(common)?;
    let traj = integrate_flow(&cfg.kappa, &cfg.pi0, cfg.t_end, cfg.flow_step)?;
    let path = dir.join("flow.csv");
    write_flow_csv(&traj, &path)?;
    println!("t_c = {:.12}; Φ(T) = {:.12}; wrote {}", traj.t_c, traj.states.last().map_or(1.0, |s| s.mass()), path.display());
    Ok(())
}

fn smol(common: &Common) -> Result<()> {
    let (cfg, dir) = load(common)?;
    let v0 = cfg.initial_spectrum()?;
    let traj = integrate_smol(&v0, cfg.t_end, cfg.smol_step)?;
    let path = dir.join("smol.csv");
    write_smol_csv(&traj, &path)?;
    println!("T_gel = {:.12}; wrote {}", traj.t_gel, path.display());
    Ok(())
}

fn bp(kappa: &str, pi: &str, ell: usize, verbose: bool) -> Result<()> {
    let kappa = parse_kernel(kappa)?;
    let pi = parse_mass(pi)?;
    println!("{:.6}", progeny_exact(&kappa, &pi, ell)?);
    if verbose {
        let zeta = survival(&kappa, &pi, 1e-12)?.zeta;
        println!("survival: {zeta:?}");
        match expected_progeny(&kappa, &pi)? {
            Progeny::Finite(m) => println!("expected progeny: {m:.12}"),
            Progeny::Infinite { near_singular } => println!("expected progeny: infinite (near-singular: {near_singular})"),
        }
    }
    Ok(())
}

fn converge(common: &Common) -> Result<()> {
    let (cfg, dir) = load(common)?;
    let (report, flow) = run_convergence_experiment(&cfg)?;
    write_convergence(&report, &dir)?;
    write_flow_csv(&flow, &dir.join("flow.csv"))?;
    for s in &report.sizes {
        println!(
            "N={}: median sup_l1 {}, pass fraction {:.2}",
            s.n,
            s.median_sup_l1.map_or("n/a".into(), |x| format!("{x:.4}")),
            s.sup_l1_pass_fraction
        );
    }
    for c in &report.checks {
        println!("{} {} = {:.4e} (threshold {:.4e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
    }
    for r in report.replicas.iter().filter(|r| r.error.is_some()) {
        eprintln!("N={} replica={} failed: {}", r.n, r.replica, r.error.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn composition(common: &Common) -> Result<()> {
    let (cfg, dir) = load(common)?;
    cfg.validate_sweep()?;
    let n = *cfg.n_list.last().expect("validated");
    let flow = integrate_flow(&cfg.kappa, &cfg.pi0, cfg.t_end, cfg.flow_step)?;
    let out = run_simulation(&cfg.sim_config(n, 0)?)?;
    let rep = frozen_composition_report(&out, &flow, cfg.size_threshold_fraction, cfg.bin_width)?;
    let k = cfg.kappa.k();
    let mut s = String::from("t_lo,t_hi,large_freezes,large_mass,small_mass,l1");
    for prefix in ["comp", "mu"] {
        for i in 1..=k {
            write!(s, ",{prefix}_{i}").unwrap();
        }
    }
    s.push('\n');
    for b in &rep.bins {
        let cell = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), fmt_f64);
        write!(s, "{},{},{},{},{},{}", fmt_f64(b.t_lo), fmt_f64(b.t_hi), b.large_freezes, fmt_f64(b.large_mass), fmt_f64(b.small_mass), cell(b.l1)).unwrap();
        for v in [&b.composition, &b.mu] {
            for i in 0..k {
                write!(s, ",{}", cell(v.as_ref().map(|x| x[i]))).unwrap();
            }
        }
        s.push('\n');
    }
    std::fs::write(dir.join("composition.csv"), s)?;
    std::fs::write(dir.join("composition.json"), serde_json::to_string_pretty(&rep)? + "\n")?;
    println!(
        "threshold {:.1} vertices; {} populated bins, {:.0}% within {}; small-freeze mass fraction {:.4}",
        rep.threshold,
        rep.populated().count(),
        100.0 * rep.fraction_within(cfg.tolerances.composition),
        cfg.tolerances.composition,
        rep.small_mass_fraction
    );
    Ok(())
}

fn stats(common: &Common) -> Result<()> {
    let (cfg, dir) = load(common)?;
    cfg.validate_sweep()?;
    let out = run_simulation(&cfg.sim_config(cfg.n_list[0], 0)?)?;
    let mut s = String::from("snapshot,t,i,j,observed,candidates,expected,z\n");
    for (idx, snap) in out.snapshots.iter().enumerate() {
        for p in alive_edge_stats(&out, idx, &cfg.kappa)? {
            writeln!(s, "{idx},{},{},{},{},{},{},{}", fmt_f64(snap.t), p.i + 1, p.j + 1, p.observed, p.candidates, fmt_f64(p.expected), fmt_f64(p.z)).unwrap();
        }
    }
    write(&dir.join("edge_stats.csv"), s)?;
    let mut s = String::from("t,rho\n");
    for (t, rho) in criticality_trace(&out, &cfg.kappa)? {
        writeln!(s, "{},{}", fmt_f64(t), fmt_f64(rho)).unwrap();
    }
    write(&dir.join("criticality.csv"), s)?;
    println!("{} snapshots; wrote edge_stats.csv and criticality.csv to {}", out.snapshots.len(), dir.display());
    Ok(())
}

fn write(path: &Path, s: String) -> Result<()> {
    std::fs::write(path, s)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => simulate(&c)?,
        Command::Flow(c) => flow(&c)?,
        Command::Smol(c) => smol(&c)?,
        Command::Bp { kappa, pi, ell, verbose } => bp(&kappa, &pi, ell, verbose)?,
        Command::Converge(c) => converge(&c)?,
        Command::Composition(c) => composition(&c)?,
        Command::Stats(c) => stats(&c)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.exit_code() == 0 { 0 } else { 2 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
