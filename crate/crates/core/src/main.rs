use std::process::ExitCode;

use clap::Parser;
use mtdiag::report::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok((outcome, printed)) => {
            if let Some(line) = printed {
                println!("{line}");
            }
            for p in &outcome.artifacts {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
