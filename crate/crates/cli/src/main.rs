//! `htsparse`: synthesize a corpus, train thresholds, build and search an
//! index, evaluate runs and run the ablation grid.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 training diverged.

mod args;
mod commands;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use args::Cli;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Diverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Diverged(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Diverged(m) => f.write_str(m),
        }
    }
}

/// Prefixes an error with what was being done.
pub trait Context<T> {
    fn context(self, what: impl fmt::Display) -> Result<T, Failure>;
}

impl<T> Context<T> for htsparse::Result<T> {
    fn context(self, what: impl fmt::Display) -> Result<T, Failure> {
        self.map_err(|e| match e {
            htsparse::Error::Diverged(_) => Failure::Diverged(format!("{what}: {e}")),
            _ => Failure::Data(format!("{what}: {e}")),
        })
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn context(self, what: impl fmt::Display) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(format!("{what}: {e}")))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
