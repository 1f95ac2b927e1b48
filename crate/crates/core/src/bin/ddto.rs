use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ddto::cli::{exit_code, run, Method, RunOptions};
use ddto::io::AnchorSpec;

/// Deferred-decision trajectory optimization.
#[derive(Debug, Parser)]
#[command(name = "ddto", version)]
struct Args {
    /// qcvx, micp, scp, oracle or verify
    #[arg(value_parser = |s: &str| s.parse::<Method>().map_err(|e| e.to_string()))]
    method: Method,
    /// Scenario JSON (see docs/schema.json)
    scenario: PathBuf,
    /// Output directory, created if missing
    #[arg(long)]
    out: PathBuf,
    /// qcvx: state coincidence tolerance. micp: relative gap. scp: convergence threshold
    #[arg(long)]
    tol: Option<f64>,
    /// micp: node limit. scp: iterations per round
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Seed for generated oracle corpora
    #[arg(long)]
    seed: Option<u64>,
    /// 1-based target index or `free`
    #[arg(long, value_parser = |s: &str| AnchorSpec::parse(s).map_err(|e| e.to_string()))]
    anchor: Option<AnchorSpec>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DDTO_LOG", "error")).init();
    let a = Args::parse();
    let opts = RunOptions { tol: a.tol, max_iter: a.max_iter, seed: a.seed, anchor: a.anchor };
    match run(a.method, &a.scenario, &a.out, &opts) {
        Ok(r) if r.passed => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("ddto: verification failed, see {}", a.out.join("verify.json").display());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("ddto: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
