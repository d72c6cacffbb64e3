use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use mgc_cftp_cli::{execute, Cli, CliError, RunConfig};

fn run(cfg: &RunConfig) -> Result<(), CliError> {
    match &cfg.output {
        Some(path) => execute(cfg, BufWriter::new(File::create(path)?)),
        None => execute(cfg, BufWriter::new(io::stdout().lock())),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command.into_config().and_then(|cfg| run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut err = io::stderr().lock();
            let _ = serde_json::to_writer(&mut err, &e.summary());
            let _ = writeln!(err);
            ExitCode::FAILURE
        }
    }
}
