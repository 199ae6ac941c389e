//! `roughfilter` command-line driver: model catalog selection, experiment
//! pipelines and reproducible CSV/JSON artifacts with a manifest.

mod config;
mod run;

use std::process::ExitCode;

use clap::Parser;

/// Failure classes, mapped to exit codes 2 (validation), 3 (numerical
/// abort) and 1 (I/O).
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid configuration: {m}"),
            Failure::Numerical(m) => write!(f, "numerical abort: {m}"),
            Failure::Io(m) => write!(f, "i/o failure: {m}"),
        }
    }
}

impl From<roughfilter::Error> for Failure {
    fn from(e: roughfilter::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else if let roughfilter::Error::Io(m) = e {
            Failure::Io(m)
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = config::Cli::parse();
    match config::resolve(cli).and_then(|cfg| run::run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("roughfilter: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
