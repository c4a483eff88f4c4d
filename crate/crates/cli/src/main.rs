use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let args = geodistort_cli::cli::Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(args.log_level())).init();
    match geodistort_cli::cli::dispatch(args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
