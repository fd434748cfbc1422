use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spde_picard::campaign::{run, Command, ExitStatus, RunConfig};
use spde_picard::Error;

#[derive(Parser)]
#[command(name = "spde-picard", version, about = "Picard and direct solvers for semilinear SPDEs with Lévy noise")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Picard campaign: iteration table, moment bound, uniqueness.
    Picard(Common),
    /// Pathwise Itô-type inequality at dt and dt/2.
    ItoCheck(Common),
    /// Strong error of the linear scalar model against its closed form.
    Benchmark(Common),
    /// Hypothesis checkers, checker self-tests and noise-layer checks.
    HypothesisCheck(Common),
    /// Direct solver path dump.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults are used for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV files and the summary.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Sub::Picard(c) => (Command::Picard, c),
        Sub::ItoCheck(c) => (Command::ItoCheck, c),
        Sub::Benchmark(c) => (Command::Benchmark, c),
        Sub::HypothesisCheck(c) => (Command::HypothesisCheck, c),
        Sub::Simulate(c) => (Command::Simulate, c),
    };
    let outcome = load(&common).and_then(|cfg| run(command, &cfg).map(|s| (cfg, s)));
    let status = match &outcome {
        Ok((cfg, summary)) => {
            for d in &summary.diagnostics {
                let tag = if d.pass { "PASS" } else { "FAIL" };
                println!("[{tag}] {}: {}", d.name, d.detail);
            }
            println!("summary written to {}", cfg.output.join("summary.txt").display());
            if summary.pass() {
                ExitStatus::Pass
            } else {
                ExitStatus::DiagnosticFailure
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Divergence { trace, .. } = e {
                let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
                if std::fs::create_dir_all(&dir).is_ok() {
                    let _ = std::fs::write(dir.join("divergence_trace.csv"), trace);
                }
            }
            ExitStatus::of_error(e)
        }
    };
    ExitCode::from(status.code() as u8)
}

fn load(common: &Common) -> spde_picard::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
    Ok(cfg)
}
