//! `vpc` command-line tool. Exit codes: 0 success, 2 usage or input error,
//! 3 domain error (untrainable model, grid mismatch and the like).

mod args;
mod commands;
mod config;

use clap::Parser;

use args::{Cli, Command};
use config::UsageError;
use vpc_core::VpcError;

const EXIT_USAGE: i32 = 2;
const EXIT_DOMAIN: i32 = 3;

fn exit_code(e: &anyhow::Error) -> i32 {
    if e.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match e.downcast_ref::<VpcError>() {
        Some(v) if !v.is_usage() => EXIT_DOMAIN,
        _ => EXIT_USAGE,
    }
}

fn thread_count(cli: &Cli) -> anyhow::Result<Option<usize>> {
    if let Some(n) = cli.threads {
        return Ok(Some(n));
    }
    match std::env::var("VPC_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| UsageError(format!("VPC_THREADS must be a positive integer, got {v:?}")).into()),
        Err(_) => Ok(None),
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = thread_count(cli)? {
        if n == 0 {
            return Err(UsageError("thread count must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Classify(a) => commands::classify_cmd(a),
        Command::Features(a) => commands::features(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Segments(c) => commands::segments(c),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(exit_code(&e));
    }
}
