use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use steinplan::bench::{
    emit_plot_data, emit_prior_demo, load_scenario, run_benchmark, run_single, write_report, BenchReport,
    PlannerEntry,
};
use steinplan::planners::PlannerKind;
use steinplan::Error;

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "STEINPLAN_THREADS";

#[derive(Parser)]
#[command(name = "steinplan", version, about = "Constrained Stein variational trajectory planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one planner on one seed.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        planner: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every planner and seed of a scenario.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write prior and posterior mean and spread of the conditioning demo.
    DemoPrior {
        #[arg(long)]
        out: PathBuf,
    },
}

fn is_validation(e: &Error) -> bool {
    matches!(e, Error::Validation(_) | Error::Config(_) | Error::Parse(_))
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer (got '{value}')")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn print_summary(report: &BenchReport) {
    println!(
        "{:<10} {:>5} {:>8} {:>22} {:>22} {:>12} {:>10}",
        "planner", "runs", "success", "length", "smoothness", "viol_mse", "time [s]"
    );
    let fmt = |s: Option<steinplan::bench::Stat>| {
        s.map_or("-".to_string(), |s| format!("{:.4} ± {:.4}", s.mean, s.std))
    };
    for a in &report.aggregates {
        println!(
            "{:<10} {:>5} {:>8.2} {:>22} {:>22} {:>12} {:>10}",
            a.planner,
            a.runs,
            a.success_rate,
            fmt(a.length),
            fmt(a.smoothness),
            a.violation_mse.map_or("-".to_string(), |s| format!("{:.2e}", s.mean)),
            a.wall_time.map_or("-".to_string(), |s| format!("{:.2}", s.mean)),
        );
    }
    for run in &report.runs {
        if let Some(e) = &run.row.error {
            println!("{} seed {}: {e}", run.row.planner, run.row.seed);
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    match cli.command {
        Command::Plan {
            scenario,
            planner,
            seed,
            out,
        } => {
            let scenario = load_scenario(&scenario)?;
            let kind: PlannerKind = planner.parse()?;
            let entry = scenario
                .planners
                .iter()
                .find(|e| e.label() == planner)
                .or_else(|| scenario.planners.iter().find(|e| e.kind == kind))
                .cloned()
                .unwrap_or_else(|| PlannerEntry::new(kind));
            let record = run_single(&scenario, &entry, seed)?;
            let report = BenchReport {
                scenario: scenario.name(),
                aggregates: steinplan::bench::aggregate(std::slice::from_ref(&record.row)),
                runs: vec![record],
            };
            write_report(&report, &out)?;
            emit_plot_data(&report, &out)?;
            print_summary(&report);
        }
        Command::Bench { scenario, out } => {
            let scenario = load_scenario(&scenario)?;
            info!("{} planners x {} seeds", scenario.planners.len(), scenario.seeds().len());
            let report = run_benchmark(&scenario, &out)?;
            emit_plot_data(&report, &out)?;
            print_summary(&report);
        }
        Command::DemoPrior { out } => {
            for path in emit_prior_demo(&out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_validation(&e) { 1 } else { 2 })
        }
    }
}
