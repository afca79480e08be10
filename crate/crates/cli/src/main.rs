use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use owfsim::case::{parse_case, validate_case, SystemCase};
use owfsim::error::Error;
use owfsim::powerflow::{solve_powerflow, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
use owfsim::scenario::{load_scenario, run_simulation, write_csv, write_meta};

#[derive(Parser)]
#[command(
    name = "owfsim",
    version,
    about = "EMT simulation of small grids with offshore wind plants"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write recording.csv, recording.meta.txt and run.log.
    Run {
        scenario: PathBuf,
        /// Time step in seconds.
        #[arg(long)]
        dt: Option<f64>,
        /// End time in seconds.
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        /// Output directory, created if missing.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Comma-separated channel list, replacing the scenario's.
        #[arg(long, value_delimiter = ',')]
        channels: Option<Vec<String>>,
        /// Keep one sample every N steps.
        #[arg(long)]
        record_every: Option<usize>,
    },
    /// Check that a case file parses and can be simulated.
    Validate { case: PathBuf },
    /// Solve the power flow of a case and print bus voltages.
    Powerflow { case: PathBuf },
}

fn read_case(path: &Path) -> Result<SystemCase> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    Ok(parse_case(&text)?)
}

fn run(
    scenario: &Path,
    dt: Option<f64>,
    t_end: Option<f64>,
    out: &Path,
    channels: Option<Vec<String>>,
    record_every: Option<usize>,
) -> Result<()> {
    let mut scn = load_scenario(scenario)?;
    if let Some(dt) = dt {
        scn.dt = dt;
    }
    if let Some(t) = t_end {
        scn.t_end = t;
    }
    if let Some(ch) = channels {
        scn.channels = ch.into_iter().filter(|c| !c.is_empty()).collect();
    }
    if let Some(n) = record_every {
        scn.record_every = n;
    }
    scn.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.display().to_string(),
        msg: e.to_string(),
    })?;
    let rec = run_simulation(&scn)?;
    write_csv(&rec, &out.join("recording.csv"))?;
    write_meta(&rec, &out.join("recording.meta.txt"))?;

    let mut log = rec.meta.snapshot.clone();
    log.push('\n');
    for (t, target, what) in &rec.meta.events {
        let _ = writeln!(log, "{t:.6} {target} {what}");
    }
    let _ = writeln!(log, "max_dc_residual {:.3e}", rec.meta.max_dc_residual);
    let log_path = out.join("run.log");
    std::fs::write(&log_path, log).map_err(|e| Error::Io {
        path: log_path.display().to_string(),
        msg: e.to_string(),
    })?;
    println!(
        "{} samples x {} channels written to {}",
        rec.len(),
        rec.channels.len(),
        out.display()
    );
    Ok(())
}

fn validate(path: &Path) -> Result<()> {
    let case = read_case(path)?;
    let report = validate_case(&case);
    if report.is_runnable() {
        println!(
            "ok: {} buses, {} branches, {} loads, {} machines, {} inverters, {} wind plants",
            case.buses.len(),
            case.branches.len(),
            case.loads.len(),
            case.sg_plants.len(),
            case.gfl_plants.len(),
            case.owf_plants.len()
        );
        return Ok(());
    }
    for v in &report.violations {
        println!("violation: {v}");
    }
    Err(Error::InvalidCase(format!("{} violation(s)", report.violations.len())).into())
}

fn powerflow(path: &Path) -> Result<()> {
    let case = read_case(path)?;
    let sol = solve_powerflow(&case, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER)
        .with_context(|| format!("power flow of {}", path.display()))?;
    println!(
        "converged in {} iterations, mismatch {:.3e}",
        sol.iterations, sol.max_mismatch
    );
    println!(
        "{:>5} {:>9} {:>10} {:>9} {:>9}",
        "bus", "vm", "va_deg", "p_inj", "q_inj"
    );
    for i in 0..sol.bus_ids.len() {
        println!(
            "{:>5} {:>9.6} {:>10.4} {:>9.4} {:>9.4}",
            sol.bus_ids[i],
            sol.vm[i],
            sol.va[i].to_degrees(),
            sol.p_inj[i] + 0.0,
            sol.q_inj[i] + 0.0
        );
    }
    Ok(())
}

fn error_line(err: &anyhow::Error) -> String {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<Error>())
        .map_or("internal", Error::kind);
    let msg = format!("{err:#}")
        .replace('\\', "\\\\")
        .replace('"', "\\\"");
    format!("error: kind={kind} msg=\"{msg}\"")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            dt,
            t_end,
            out,
            channels,
            record_every,
        } => run(&scenario, dt, t_end, &out, channels, record_every),
        Command::Validate { case } => validate(&case),
        Command::Powerflow { case } => powerflow(&case),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
