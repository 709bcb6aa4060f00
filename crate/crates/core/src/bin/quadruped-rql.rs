use std::process::ExitCode;

use clap::Parser;
use quadruped_rql::cli::{run, Cli};

fn main() -> ExitCode {
    run(Cli::parse())
}
