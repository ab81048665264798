use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clfshape::commands;
use clfshape::config::{EnvName, ExperimentConfig, KindName, TerminalName};
use clfshape::report::{emit_mpc_report, ReportWriter};
use clfshape::sweep::{run_mpc_sweep, run_sweep_with};
use clfshape::{CliError, Result};

/// Discounted optimal control with CLF cost shaping.
#[derive(Parser)]
#[command(name = "clfshape", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; defaults describe the pendulum sweep.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Environment, overriding the config.
    #[arg(long, global = true, value_parser = parse_env)]
    env: Option<EnvName>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replace existing output files.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one cell and dump its value and policy.
    Solve(CellArgs),
    /// Run the discount sweep and write the reports.
    Sweep,
    /// Run the MPC horizon sweep.
    Mpc,
    /// Roll out the greedy policy of one cell from an initial state.
    Rollout {
        #[command(flatten)]
        cell: CellArgs,
        /// Initial state, comma separated.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        x0: Vec<f64>,
    },
    /// Check the CLF decrease and the shaped-cost bound on the grid.
    VerifyClf,
    /// Print the summaries of an existing output directory.
    Report,
}

#[derive(Args)]
struct CellArgs {
    /// Discount factor.
    #[arg(long)]
    gamma: f64,
    /// Cost kind: standard or shaped.
    #[arg(long, default_value = "shaped", value_parser = parse_kind)]
    kind: KindName,
    /// Input bound (default: the first configured one).
    #[arg(long)]
    h: Option<f64>,
}

fn parse_env(s: &str) -> std::result::Result<EnvName, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown environment {s:?}"))
}

fn parse_kind(s: &str) -> std::result::Result<KindName, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown cost kind {s:?}"))
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(env) = c.env {
        cfg.env.name = env;
    }
    if let Some(out) = &c.out {
        cfg.out_dir = out.display().to_string();
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cell_bound(cfg: &ExperimentConfig, cell: &CellArgs) -> f64 {
    cell.h.unwrap_or_else(|| cfg.input_bounds()[0])
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn print_csv(path: &Path) -> Result<()> {
    let mut rdr = csv::Reader::from_path(path)?;
    println!("{}:", path.display());
    println!("  {}", rdr.headers()?.iter().collect::<Vec<_>>().join("  "));
    for rec in rdr.records() {
        println!("  {}", rec?.iter().collect::<Vec<_>>().join("  "));
    }
    Ok(())
}

/// Runs the command; `Ok(false)` means it finished with failed cells.
fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli.common)?;
    let out = PathBuf::from(&cfg.out_dir);
    let force = cli.common.force;
    match cli.command {
        Command::Solve(cell) => {
            let h = cell_bound(&cfg, &cell);
            print_json(&commands::solve(
                &cfg,
                h,
                cell.kind,
                cell.gamma,
                &out.join("fields"),
                force,
            )?)?;
        }
        Command::Sweep => {
            let mut writer = ReportWriter::create(&out, force, cfg.dump_fields)?;
            let report = run_sweep_with(&cfg, |cell| writer.write_cell(cell))?;
            writer.finish(&report)?;
            for s in &report.summary {
                println!(
                    "{} H={} {:?}: min stabilizing gamma {:?}",
                    s.env, s.h, s.cost_kind, s.min_stabilizing_gamma
                );
            }
            return Ok(!report.has_failures());
        }
        Command::Mpc => {
            let terminals: Vec<TerminalName> = cfg.mpc.terminals.clone();
            let report = run_mpc_sweep(&cfg, &cfg.mpc.horizons, &terminals)?;
            emit_mpc_report(&report, &out, force)?;
            for s in &report.summary {
                println!(
                    "{} H={} terminal={}: min stabilizing horizon {:?}",
                    s.env,
                    s.h,
                    s.terminal.as_str(),
                    s.min_stabilizing_horizon
                );
            }
            return Ok(!report.has_failures());
        }
        Command::Rollout { cell, x0 } => {
            let h = cell_bound(&cfg, &cell);
            let path = out.join("rollout.csv");
            let steps = commands::rollout_cell(&cfg, h, cell.kind, cell.gamma, &x0, &path, force)?;
            println!("wrote {steps} steps to {}", path.display());
        }
        Command::VerifyClf => {
            let reports = commands::verify_clf(&cfg)?;
            print_json(&reports)?;
            return Ok(reports.iter().all(|r| r.is_clf_on_grid));
        }
        Command::Report => {
            let mut found = false;
            for name in ["summary.csv", "domination.csv", "mpc_summary.csv"] {
                let path = out.join(name);
                if path.exists() {
                    print_csv(&path)?;
                    found = true;
                }
            }
            if !found {
                return Err(CliError::Config(format!("no reports in {}", out.display())));
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.common.threads;
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(CliError::from)
        .and_then(|pool| pool.install(|| run(cli)));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
