//! Command-line driver: argument parsing, scenario dispatch, CSV and
//! manifest emission.
//!
//! Exit codes: 0 on success, 2 for configuration/schema problems (including
//! unknown flags, which the parser reports itself), 3 when a run aborts on a
//! non-finite state. Every command writes a `manifest.json` whose `config_echo`
//! plus `seed` reproduce all CSV outputs byte for byte.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::entanglement::ConcurrenceOperator;
use crate::error::{Error, Result};
use crate::experiments::{
    fidelity::{run_fidelity_track, FidelityTrack},
    load_config,
    noise_study::{sweep_amplitude, sweep_curvature, sweep_strength, SweepPoint},
    robust::run_robust_states,
    run_coherent, run_dissipative, Scenario, ScenarioConfig,
};
use crate::hilbert::QubitSystem;

/// Feedback-controlled multiqubit entanglement studies.
#[derive(Parser, Debug)]
#[command(name = "lyapctl", version, about, long_about = None)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Path to a JSON scenario config; omitted means built-in defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override the config's random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory for CSV and manifest files.
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    pub out: PathBuf,

    /// Worker threads for ensembles (defaults to one).
    #[arg(long, global = true, env = "LYAPCTL_THREADS")]
    pub threads: Option<usize>,

    /// Override the config's integration step (µs).
    #[arg(long = "dt-us", global = true, value_name = "DT")]
    pub dt_us: Option<f64>,

    /// Suppress progress and summary lines on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// One closed-loop trajectory of the configured scenario.
    Simulate,
    /// Sweep imperfection strength (epsilon_grid) or field cap (h_max_grid).
    Sweep,
    /// Controlled-versus-uncontrolled lifetime comparison.
    Robust,
    /// Track best local-unitary overlaps against the reference ladder.
    Fidelity,
    /// Build the invariant's operator kernel and dump its nonzeros.
    BuildOp,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Robust => "robust",
            Command::Fidelity => "fidelity",
            Command::BuildOp => "build-op",
        }
    }
}

/// Written next to every output set; `config_echo` + `seed` fully determine
/// the CSV bytes.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub command: String,
    pub seed: u64,
    pub config_echo: ScenarioConfig,
    pub wall_time_s: f64,
    pub output_paths: Vec<String>,
    /// Step index at which a run aborted on a non-finite state, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_step: Option<usize>,
    /// Command-specific result digest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

/// Run the parsed command line; the caller maps errors to exit codes.
pub fn run(cli: &Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        // Later commands in the same process share the first pool; that is
        // fine because thread count never affects results, only wall time.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    let config = effective_config(cli)?;
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| Error::Config(format!("cannot create `{}`: {e}", cli.out.display())))?;
    let started = std::time::Instant::now();
    let mut emitted: Vec<String> = Vec::new();
    let mut abort_step = None;
    let outcome = dispatch(cli, &config, &mut emitted);
    let summary = match &outcome {
        Ok(s) => Some(s.clone()),
        Err(Error::NonFinite { step, t_us }) => {
            abort_step = Some(*step);
            Some(serde_json::json!({
                "aborted": { "step": step, "t_us": t_us },
            }))
        }
        Err(_) => None,
    };
    // The manifest is written even for a non-finite abort so the failed run
    // can be replayed from its own echo.
    if outcome.is_ok() || abort_step.is_some() {
        let manifest = RunManifest {
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            command: cli.command.name().to_string(),
            seed: config.seed,
            config_echo: config.clone(),
            wall_time_s: started.elapsed().as_secs_f64(),
            output_paths: {
                let mut p = emitted.clone();
                p.push("manifest.json".to_string());
                p
            },
            abort_step,
            summary,
        };
        let path = cli.out.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
        std::fs::write(&path, text + "\n")
            .map_err(|e| Error::Config(format!("cannot write `{}`: {e}", path.display())))?;
        if !cli.quiet {
            println!("wrote {}", path.display());
        }
    }
    outcome.map(|_| ())
}

fn effective_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dt) = cli.dt_us {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("--dt-us must be > 0, got {dt}")));
        }
        config.dt_us = dt;
    }
    Ok(config)
}

fn dispatch(
    cli: &Cli,
    config: &ScenarioConfig,
    emitted: &mut Vec<String>,
) -> Result<serde_json::Value> {
    match cli.command {
        Command::Simulate => cmd_simulate(cli, config, emitted),
        Command::Sweep => cmd_sweep(cli, config, emitted),
        Command::Robust => cmd_robust(cli, config, emitted),
        Command::Fidelity => cmd_fidelity(cli, config, emitted),
        Command::BuildOp => cmd_build_op(cli, config, emitted),
    }
}

fn cmd_simulate(
    cli: &Cli,
    config: &ScenarioConfig,
    emitted: &mut Vec<String>,
) -> Result<serde_json::Value> {
    let traj = match config.scenario {
        Scenario::Coherent => run_coherent(config)?,
        _ => run_dissipative(config)?,
    };
    write_trajectory_csv(&cli.out.join("trajectory.csv"), &traj)?;
    emitted.push("trajectory.csv".into());
    let (peak_t, peak) = traj.max_tau();
    if !cli.quiet {
        println!(
            "simulate: {} steps, peak tau {:.4} at {:.4} µs, final tau {:.4}",
            traj.times_us.len(),
            peak,
            peak_t,
            traj.tau.last().copied().unwrap_or(0.0),
        );
    }
    Ok(serde_json::json!({
        "peak_tau": peak,
        "peak_time_us": peak_t,
        "final_tau": traj.tau.last(),
        "kicks": traj.kick_times_us,
        "min_eigenvalue": traj.min_eigenvalue,
    }))
}

fn cmd_sweep(
    cli: &Cli,
    config: &ScenarioConfig,
    emitted: &mut Vec<String>,
) -> Result<serde_json::Value> {
    let (points, label) = if config.epsilon_grid.is_some() {
        (sweep_strength(config)?, "epsilon")
    } else if config.h_max_grid.is_some() {
        (sweep_amplitude(config)?, "h_max_rad_per_us")
    } else {
        return Err(Error::Config(
            "sweep needs epsilon_grid or h_max_grid in the config".into(),
        ));
    };
    write_sweep_csv(&cli.out.join("sweep.csv"), &points, label)?;
    emitted.push("sweep.csv".into());
    let fit = if label == "epsilon" && points.len() >= 3 {
        Some(sweep_curvature(&points)?)
    } else {
        None
    };
    if !cli.quiet {
        for p in &points {
            println!(
                "sweep: {label} = {:.4} → tau_bar = {:.6} ± {:.2e}",
                p.x, p.tau_bar, p.tau_bar_stderr
            );
        }
        if let Some(f) = &fit {
            println!(
                "sweep: fit tau_bar ≈ {:.6} + {:.3e}·x + {:.3e}·x² (slope σ {:.2e})",
                f.intercept, f.slope, f.curvature, f.slope_sigma
            );
        }
    }
    Ok(serde_json::json!({
        "points": points.iter().map(|p| {
            serde_json::json!({label: p.x, "tau_bar": p.tau_bar, "stderr": p.tau_bar_stderr})
        }).collect::<Vec<_>>(),
        "quadratic_fit": fit.map(|f| serde_json::json!({
            "intercept": f.intercept,
            "slope": f.slope,
            "curvature": f.curvature,
            "slope_sigma": f.slope_sigma,
        })),
    }))
}

fn cmd_robust(
    cli: &Cli,
    config: &ScenarioConfig,
    emitted: &mut Vec<String>,
) -> Result<serde_json::Value> {
    let report = run_robust_states(config)?;
    write_trajectory_csv(&cli.out.join("trajectory.csv"), &report.controlled)?;
    emitted.push("trajectory.csv".into());
    if !cli.quiet {
        println!(
            "robust: tau0 {:.4}, controlled lifetime {:?} µs, uncontrolled median {:?} µs, ratio {:?}",
            report.tau0,
            report.controlled_lifetime_us,
            report.median_uncontrolled_us,
            report.lifetime_ratio,
        );
        println!(
            "robust: kicked at start: {}, field energy before 0.1·t_end: {:.1}%",
            report.kicked,
            100.0 * report.early_field_energy_fraction
        );
    }
    Ok(serde_json::json!({
        "tau0": report.tau0,
        "kicked": report.kicked,
        "controlled_lifetime_us": report.controlled_lifetime_us,
        "ensemble_lifetimes_us": report.ensemble_lifetimes_us,
        "median_uncontrolled_us": report.median_uncontrolled_us,
        "lifetime_ratio": report.lifetime_ratio,
        "early_field_energy_fraction": report.early_field_energy_fraction,
    }))
}

fn cmd_fidelity(
    cli: &Cli,
    config: &ScenarioConfig,
    emitted: &mut Vec<String>,
) -> Result<serde_json::Value> {
    let (traj, track) = run_fidelity_track(config)?;
    write_trajectory_csv(&cli.out.join("trajectory.csv"), &traj)?;
    emitted.push("trajectory.csv".into());
    write_fidelity_csv(&cli.out.join("fidelity.csv"), &track)?;
    emitted.push("fidelity.csv".into());
    let argmax = |s: &[f64]| FidelityTrack::argmax(s, &track.times_us);
    let (t_i, _) = argmax(&track.initial);
    let (t_2, f2) = argmax(&track.one_pair);
    let (t_3, f3) = argmax(&track.two_pairs);
    let (t_f, ff) = argmax(&track.maximal);
    if !cli.quiet {
        println!(
            "fidelity: peaks F_2 {f2:.4} @ {t_2:.4} µs, F_3 {f3:.4} @ {t_3:.4} µs, F_f {ff:.4} @ {t_f:.4} µs"
        );
    }
    Ok(serde_json::json!({
        "argmax_times_us": { "F_i": t_i, "F_2": t_2, "F_3": t_3, "F_f": t_f },
        "peaks": { "F_2": f2, "F_3": f3, "F_f": ff },
    }))
}

fn cmd_build_op(
    cli: &Cli,
    config: &ScenarioConfig,
    emitted: &mut Vec<String>,
) -> Result<serde_json::Value> {
    let sys = QubitSystem::new(config.n_qubits)?;
    let op = ConcurrenceOperator::build(sys)?;
    let dense = op.to_dense()?;
    let trace: f64 = dense.diag().sum();
    let path = cli.out.join("operator.csv");
    let mut w = csv_writer(&path)?;
    writeln!(w, "row,col,value").map_err(io_err(&path))?;
    let mut nnz_dense = 0usize;
    for ((r, c), v) in dense.indexed_iter() {
        if *v != 0.0 {
            writeln!(w, "{r},{c},{}", fmt(*v)).map_err(io_err(&path))?;
            nnz_dense += 1;
        }
    }
    w.flush().map_err(io_err(&path))?;
    emitted.push("operator.csv".into());
    if !cli.quiet {
        println!(
            "build-op: {} qubits, kernel {}×{}, {} stored couplings, {} dense nonzeros, trace {trace}",
            config.n_qubits,
            dense.nrows(),
            dense.ncols(),
            op.nnz(),
            nnz_dense
        );
    }
    Ok(serde_json::json!({
        "n_qubits": config.n_qubits,
        "kernel_dim": dense.nrows(),
        "stored_couplings": op.nnz(),
        "dense_nonzeros": nnz_dense,
        "trace": trace,
    }))
}

// ---------------------------------------------------------------------------
// CSV emission. All floats use 16-digit scientific notation so files are
// deterministic and lossless to reparse.
// ---------------------------------------------------------------------------

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path)
        .map_err(|e| Error::Config(format!("cannot write `{}`: {e}", path.display())))?;
    Ok(std::io::BufWriter::new(f))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Config(format!("cannot write `{}`: {e}", path.display()))
}

/// `t_us,tau,h_x_1,h_y_1,h_z_1,…,h_z_N,purity` — one row per record point.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let n = traj.n_qubits;
    let mut w = csv_writer(path)?;
    let mut header = String::from("t_us,tau");
    for q in 1..=n {
        for axis in ["x", "y", "z"] {
            header.push_str(&format!(",h_{axis}_{q}"));
        }
    }
    header.push_str(",purity");
    writeln!(w, "{header}").map_err(io_err(path))?;
    for (k, t) in traj.times_us.iter().enumerate() {
        let mut row = format!("{},{}", fmt(*t), fmt(traj.tau[k]));
        for q in 0..n {
            for a in 0..3 {
                row.push(',');
                row.push_str(&fmt(traj.fields[k][q][a]));
            }
        }
        row.push(',');
        row.push_str(&fmt(traj.purity[k]));
        writeln!(w, "{row}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// `t_us,F_i,F_2,F_3,F_f` — best local-unitary overlaps per record point.
pub fn write_fidelity_csv(path: &Path, track: &FidelityTrack) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(w, "t_us,F_i,F_2,F_3,F_f").map_err(io_err(path))?;
    for (k, t) in track.times_us.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt(*t),
            fmt(track.initial[k]),
            fmt(track.one_pair[k]),
            fmt(track.two_pairs[k]),
            fmt(track.maximal[k]),
        )
        .map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// `<label>,tau_bar,tau_bar_stderr` — one row per sweep point.
pub fn write_sweep_csv(path: &Path, points: &[SweepPoint], label: &str) -> Result<()> {
    let mut w = csv_writer(path)?;
    writeln!(w, "{label},tau_bar,tau_bar_stderr").map_err(io_err(path))?;
    for p in points {
        writeln!(w, "{},{},{}", fmt(p.x), fmt(p.tau_bar), fmt(p.tau_bar_stderr))
            .map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}
