mod audit_cmd;
mod commands;
mod config;
mod experiment;
mod fail;
mod report;

use clap::Parser;

use config::{Cli, Command};
use fail::{CliError, CliResult};

fn dispatch(cli: Cli) -> CliResult<()> {
    let (opts, cmd): (config::Opts, fn(&config::Opts) -> CliResult<()>) = match cli.command {
        Command::Gen(o) => (o, commands::cmd_gen),
        Command::Run(o) => (o, commands::cmd_run),
        Command::Compare(o) => (o, commands::cmd_compare),
        Command::Audit(o) => (o, audit_cmd::cmd_audit),
    };
    let opts = opts.resolve()?;
    if let Some(t) = opts.threads {
        if t == 0 {
            return Err(CliError::Config("threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    cmd(&opts)
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = dispatch(cli) {
        eprintln!("confperf: {e}");
        std::process::exit(e.code());
    }
}
