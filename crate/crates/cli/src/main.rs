use std::process::ExitCode;

use clap::Parser;
use slicemap_cli::{cmd_run, cmd_trace, cmd_validate, init_threads, Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = init_threads().and_then(|()| match &cli.command {
        Command::Run(args) => cmd_run(args).map(|_| true),
        Command::Validate(args) => cmd_validate(args).map(|(text, ok)| {
            print!("{text}");
            ok
        }),
        Command::Trace(args) => cmd_trace(args).map(|text| {
            print!("{text}");
            true
        }),
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
