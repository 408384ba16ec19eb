use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mistfog::config::{load_scenario, Overrides, RunMode};
use mistfog::report::{self, emit_report, failed_assertions, run_filter, run_simulate};

#[derive(Parser)]
#[command(name = "mistfog", version, about = "Sensor-side event filtering and mist/fog/cloud simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter each source and report reduction and reconstruction error.
    Filter {
        #[command(flatten)]
        common: Common,
        /// Replace the configured sources with one CSV file.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Value column for CSV sources.
        #[arg(long)]
        column: Option<String>,
    },
    /// Simulate cloud-only and filtered topologies and compare them.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// compare, cloud-only or mist-fog-cloud
        #[arg(long)]
        mode: Option<RunMode>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file; defaults to the bundled six-sensor scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Sliding window length.
    #[arg(long)]
    n: Option<usize>,
    /// Band span as a fraction.
    #[arg(long)]
    p: Option<f64>,
    /// Only print errors.
    #[arg(long)]
    quiet: bool,
    /// Fail with exit code 3 unless `path OP number` holds on the report.
    #[arg(long = "assert", value_name = "EXPR")]
    assertions: Vec<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };

    let (common, overrides, simulate) = match cli.command {
        Command::Filter { common, dataset, column } => {
            let o = Overrides { n: common.n, p: common.p, seed: common.seed, dataset, column, ..Default::default() };
            (common, o, false)
        }
        Command::Simulate { common, mode } => {
            let o = Overrides { n: common.n, p: common.p, seed: common.seed, mode, ..Default::default() };
            (common, o, true)
        }
    };

    let scenario = match load_scenario(common.config.as_deref(), &overrides) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = if simulate { run_simulate(&scenario) } else { run_filter(&scenario) };
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Err(e) = emit_report(&report, &common.out, !simulate) {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    if !common.quiet {
        print!("{}", report::summary(&report));
        println!("reports written to {}", common.out.display());
    }

    match failed_assertions(&report, &common.assertions) {
        Ok(failed) if failed.is_empty() => ExitCode::SUCCESS,
        Ok(failed) => {
            for f in failed {
                eprintln!("assertion failed: {f}");
            }
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
