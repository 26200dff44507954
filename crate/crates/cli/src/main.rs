mod args;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command, SynthKind};
use crate::config::CliError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return report(CliError::usage(e.render().to_string().trim_end()));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Fit(a) => commands::fit(config::resolve(a, config, "fit")?),
        Command::Eval(a) => commands::eval(config::resolve(a, config, "eval")?),
        Command::Predict(a) => commands::predict(config::resolve(a, config, "predict")?),
        Command::Causal(a) => commands::causal(config::resolve(a, config, "causal")?),
        Command::Synth(s) => match s.kind {
            SynthKind::Warped(a) => commands::synth_warped(config::resolve(a, config, "synth warped")?),
            SynthKind::Pairs(a) => commands::synth_pairs(config::resolve(a, config, "synth pairs")?),
        },
    }
}

fn report(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.code)
}
