use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpqkd_core::optimizer::{optimize_intensities, OptimizationProblem};
use mpqkd_core::{PairingInterval, SystemParams};
use mpqkd_sim::output::{format_number, write_results, write_trace};
use mpqkd_sim::{load_spec, run_sweep, verify_oracles, SimError};

#[derive(Parser)]
#[command(
    name = "mpqkd-sim",
    version,
    about = "Key rates of mode-pairing QKD over asymmetric channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a sweep and write it as CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output file; defaults to the config's `output`, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check the model against Monte Carlo runs and the decoy bounds.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Write the sifted pairs of the first check point here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Optimal intensities for one geometry.
    Optimize {
        /// Alice's arm, km.
        #[arg(long)]
        la: f64,
        /// Transmittance ratio eta_a / eta_b, >= 1.
        #[arg(long)]
        delta: f64,
        /// Maximal pairing interval: an integer or `inf`.
        #[arg(long)]
        lambda: String,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>, SimError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| SimError::io(path, e))
}

fn run(cli: Cli) -> Result<(), SimError> {
    match cli.command {
        Command::Run { config, out, workers } => {
            let spec = load_spec(&config)?;
            let rows = run_sweep(&spec, workers)?;
            match out.or(spec.output.clone()) {
                Some(path) => write_results(&rows, create(&path)?).map_err(|e| SimError::io(path, e)),
                None => write_results(&rows, io::stdout().lock()).map_err(|e| SimError::io("<stdout>", e)),
            }
        }
        Command::Verify { config, trace, workers } => {
            let spec = load_spec(&config)?;
            let report = verify_oracles(&spec, workers)?;
            let mut stdout = io::stdout().lock();
            for c in &report.checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                writeln!(
                    stdout,
                    "{verdict} {}: measured {} expected {}",
                    c.name,
                    format_number(c.measured),
                    format_number(c.expected)
                )
                .map_err(|e| SimError::io("<stdout>", e))?;
            }
            if let Some(path) = trace {
                write_trace(&report.trace, create(&path)?).map_err(|e| SimError::io(path, e))?;
            }
            match report.failures() {
                0 => Ok(()),
                failed => Err(SimError::VerificationFailed {
                    failed,
                    total: report.checks.len(),
                }),
            }
        }
        Command::Optimize { la, delta, lambda } => {
            let lambda: PairingInterval = lambda.parse()?;
            let problem = OptimizationProblem::new(la, delta, lambda, SystemParams::standard())?;
            let r = optimize_intensities(&problem)?;
            println!(
                "mu_a={} mu_b={} rate={}",
                format_number(r.mu_a),
                format_number(r.mu_b),
                format_number(r.rate)
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mpqkd-sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
