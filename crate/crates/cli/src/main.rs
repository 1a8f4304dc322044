mod analyze;
mod synth;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<dib_core::Error> for Failure {
    fn from(e: dib_core::Error) -> Self {
        use dib_core::Error as E;
        let code = match &e {
            E::Ingestion { .. } | E::Csv(_) => 2,
            E::NumericalAbort { .. } => 3,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

/// Loading the data file: every failure counts as an ingestion error.
pub fn ingestion(e: dib_core::Error) -> Failure {
    Failure { code: 2, message: e.to_string() }
}

pub type CliResult<T = ()> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "dib", version, about = "Distributed information bottleneck for tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one annealed run and write a run directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// JSON with `training` and `model` sections; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed; drawn at random when neither is given.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Export confusion matrices, importance, and information-plane tables.
    Analyze {
        #[arg(long)]
        run: PathBuf,
        /// Total-KL budgets in bits, ascending.
        #[arg(long, value_delimiter = ',', default_values_t = [2.0, 4.0, 8.0, 16.0])]
        budgets: Vec<f64>,
        /// Features for confusion matrices; all when omitted.
        #[arg(long, value_delimiter = ',')]
        features: Option<Vec<String>>,
        /// Budgets for confusion matrices; the `--budgets` values when omitted.
        #[arg(long = "at-budget", value_delimiter = ',')]
        at_budget: Option<Vec<f64>>,
        /// First-contribution threshold in bits.
        #[arg(long, default_value_t = dib_core::analysis::DEFAULT_CROSSING_THRESHOLD_BITS)]
        threshold: f64,
    },
    /// Sample a discrete joint and report its exact information quantities.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = dib_core::synthetic::DEFAULT_SAMPLES)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify gradients, closed forms, and the schedule.
    Selfcheck {
        /// Fewer seeds and samples.
        #[arg(long)]
        quick: bool,
    },
}

fn selfcheck(quick: bool) -> CliResult {
    let results = dib_core::selfcheck::run_all(quick);
    let mut failed = 0;
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(Failure::config(format!("{failed} of {} checks failed", results.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Train { data, schema, config, out, seed } => train::run(&data, &schema, config.as_deref(), &out, seed),
        Command::Analyze {
            run,
            budgets,
            features,
            at_budget,
            threshold,
        } => analyze::run(&run, &budgets, features.as_deref(), at_budget.as_deref(), threshold),
        Command::Synth { spec, n, seed, out } => synth::run(&spec, n, seed, &out),
        Command::Selfcheck { quick } => selfcheck(quick),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
