mod args;
mod commands;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};
use ldp_audit::AuditError;

use args::{Cli, Command};

/// An invalid flag combination or value, reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<AuditError>() {
            return if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME };
        }
    }
    EXIT_RUNTIME
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, result) = match cli.command {
        Command::Audit(flags) => ("audit", commands::audit(flags)),
        Command::Sweep(flags) => ("sweep", commands::sweep(flags)),
        Command::Ceiling(flags) => ("ceiling", commands::ceiling(flags)),
        Command::Snr(flags) => ("snr", commands::snr(flags)),
        Command::Convert(flags) => ("convert", commands::convert(flags)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.chain().any(|c| c.is::<UsageError>()) {
                let mut cmd = Cli::command();
                cmd.build();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    eprintln!("\n{}", sub.render_usage());
                }
                eprintln!("\nFor more information, try 'ldp-audit {name} --help'.");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
