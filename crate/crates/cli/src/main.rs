use anyhow::Context;
use clap::{Parser, Subcommand};
use sqz_cli::{default_config, exit_code, export, run, OutputKind, ScenarioConfig, ScenarioKind};
use sqz_core::SqzError;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "sqz", version, about = "Squeezed-light generation in nonlinear waveguides")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario described by a JSON configuration file.
    Run {
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "sqz-out")]
        out: PathBuf,
        /// Also compare against the slower independent oracle.
        #[arg(long)]
        with_oracle: bool,
        /// Override the number of time steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Override the number of grid points, keeping the spacing.
        #[arg(long)]
        grid: Option<usize>,
        /// Write per-step trace files.
        #[arg(long)]
        trace: bool,
    },
    /// Built-in scenarios.
    Scenarios {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// List scenario names.
    List,
    /// Print the default configuration of a scenario.
    Show { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = sqz_cli::thread_cap();
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: {e}");
        }
    }
    faer::set_global_parallelism(match threads {
        Some(1) => faer::Par::Seq,
        Some(n) => faer::Par::rayon(n),
        None => faer::Par::rayon(0),
    });
    match cli.command {
        Command::Scenarios { action: ScenarioAction::List } => {
            for kind in ScenarioKind::ALL {
                println!("{:<14} {}", kind.name(), kind.description());
            }
            ExitCode::SUCCESS
        }
        Command::Scenarios { action: ScenarioAction::Show { name } } => {
            match ScenarioKind::ALL.into_iter().find(|k| k.name() == name) {
                Some(kind) => {
                    println!("{}", default_config(kind).to_json());
                    ExitCode::SUCCESS
                }
                None => {
                    eprintln!("error: unknown scenario {name:?}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Run { config, out, with_oracle, steps, grid, trace } => {
            match run_command(config, out, with_oracle, steps, grid, trace) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    let code = e.downcast_ref::<SqzError>().map(exit_code).unwrap_or(1);
                    ExitCode::from(code as u8)
                }
            }
        }
    }
}

fn run_command(
    path: PathBuf,
    out: PathBuf,
    with_oracle: bool,
    steps: Option<usize>,
    grid: Option<usize>,
    trace: bool,
) -> anyhow::Result<()> {
    let mut cfg = ScenarioConfig::load(&path)?;
    cfg.oracle_compare |= with_oracle;
    if let Some(n) = steps {
        cfg.time.n_steps = n;
    }
    if let Some(n) = grid {
        cfg.grid.n_points = n;
    }
    if trace && !cfg.wants(OutputKind::Trace) {
        cfg.outputs.push(OutputKind::Trace);
    }
    let started = Instant::now();
    let report = run(&cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let files = export(&report, &out).with_context(|| format!("writing to {}", out.display()))?;
    eprintln!(
        "{} finished in {:.1} s; {} files in {}",
        cfg.scenario,
        started.elapsed().as_secs_f64(),
        files.len(),
        out.display()
    );
    println!("{}", headline(&report));
    Ok(())
}

fn headline(report: &sqz_cli::Report) -> String {
    use sqz_cli::ScenarioResult::*;
    match &report.result {
        SpdcLowgain(r) => format!(
            "<n> = {:e}  K = {:.4}  oracle rel L2 = {:e}  product correlation = {}",
            r.run.mean_photon,
            r.run.schmidt_number,
            r.oracle_relative_l2,
            r.product_correlation.map_or("n/a".into(), |c| format!("{c:.5}"))
        ),
        SfwmHomodyne(r) => format!("max |V- numerical - analytic| = {:.4} dB over {} points", r.max_abs_diff_db, r.rows.len()),
        DualpumpJsa(r) => r
            .targets
            .iter()
            .map(|t| {
                format!(
                    "target {:e}: <n> = {:e}  K = {:.4}  N_pump = {:e}  skewness = {:e}",
                    t.target, t.run.mean_photon, t.run.schmidt_number, t.pump_photon_number, t.skewness
                )
            })
            .collect::<Vec<_>>()
            .join("\n"),
        Custom(r) => format!("<n> = {:e}  K = {:.4}", r.run.mean_photon, r.run.schmidt_number),
    }
}
