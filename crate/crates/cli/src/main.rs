mod args;
mod commands;
mod error;
mod synth_cmd;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command, SynthCommand};
use error::{CliResult, EXIT_USAGE};

fn run(cli: Cli) -> CliResult<()> {
    let stamp = !cli.no_timestamp;
    match &cli.command {
        Command::Align(a) => commands::align(a),
        Command::Metrics(a) => commands::metrics(a, stamp),
        Command::Gridsearch(a) => commands::gridsearch(a),
        Command::AnalyzePeaks(a) => commands::analyze_peaks(a),
        Command::Synth(SynthCommand::Gen(a)) => synth_cmd::gen(a),
        Command::Synth(SynthCommand::Train(a)) => synth_cmd::train_cmd(a, stamp),
        Command::Synth(SynthCommand::Eval(a)) => synth_cmd::eval(a, stamp),
        Command::Synth(SynthCommand::Sweep(a)) => synth_cmd::sweep(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE as u8),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
