mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, FileConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] gsloc::Error),
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(gsloc::Error::InvalidParameter { .. } | gsloc::Error::Config(_)) => 1,
            CliError::Data(gsloc::Error::Divergence { .. }) => 3,
            CliError::Data(_) => 2,
            CliError::NotConverged(_) => 3,
        }
    }
}

fn report(err: &CliError) -> ExitCode {
    let msg = err.to_string().replace('\n', " ");
    eprintln!("ERROR {}: {}", err.code(), msg.trim());
    ExitCode::from(err.code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            return report(&CliError::Usage(first.to_string()));
        }
    };

    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let file = match cli.global.config.as_deref().map(FileConfig::load).transpose() {
        Ok(f) => f.unwrap_or_default(),
        Err(e) => return report(&e),
    };
    let threads = cli.global.threads.or(file.threads).unwrap_or(0);
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            return report(&CliError::Usage(format!("cannot set thread count: {e}")));
        }
    }
    let ctx = commands::Context {
        seed: cli.global.seed.or(file.seed).unwrap_or(1),
        out_dir: cli
            .global
            .out_dir
            .clone()
            .or(file.out_dir.clone())
            .unwrap_or_else(|| ".".into()),
        strict: cli.global.strict || file.strict.unwrap_or(false),
    };

    match commands::run(cli.command, file, &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
