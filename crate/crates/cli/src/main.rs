use std::process::ExitCode;

use clap::Parser;
use phamp::{init_threads, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("phamp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
