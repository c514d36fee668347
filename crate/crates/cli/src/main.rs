use std::process::ExitCode;

use clap::Parser;
use wigner_airy_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("WIGNER_AIRY_THREADS").ok().and_then(|v| v.parse().ok()) {
        // Ignored if the global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
