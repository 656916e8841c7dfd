mod args;
mod commands;
mod report;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde::Serialize;
use serde_json::Value;

use args::{Cli, Command};
use report::{Failure, RunReport, Timing};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    configure_threads()?;
    let start = Instant::now();
    let seed = cli.seed;
    let (name, config, outcome) = match &cli.command {
        Command::Train(a) => ("train", echo(a, seed), commands::train(a, seed)?),
        Command::LambdaSearch(a) => ("lambda-search", echo(a, seed), commands::lambda_search(a, seed)?),
        Command::Eval(a) => ("eval", echo(a, seed), commands::eval(a)?),
        Command::Verify(a) => ("verify", echo(a, seed), commands::verify(a, seed)?),
        Command::Bench(a) => ("bench", echo(a, seed), commands::bench(a, seed)?),
        Command::Synth(a) => ("synth", echo(a, seed), commands::synth(a, seed)?),
    };
    let report = RunReport {
        command: name,
        exit_code: outcome.exit_code,
        config,
        results: outcome.results,
        artifacts: outcome.artifacts,
        timing: Timing { seconds: start.elapsed().as_secs_f64(), threads: threads() },
    };
    if let Some(path) = &cli.report {
        report.write(path)?;
    }
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        for line in &outcome.summary {
            println!("{line}");
        }
    }
    Ok(outcome.exit_code)
}

/// Every resolved flag plus the seed.
fn echo<T: Serialize>(args: &T, seed: u64) -> Value {
    let mut v = serde_json::to_value(args).expect("arguments serialize");
    if let Value::Object(map) = &mut v {
        map.insert("seed".into(), seed.into());
    }
    v
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("MMO_THREADS") else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n >= 1 => n,
        _ => return Err(Failure::config(format!("MMO_THREADS must be a positive integer, got `{raw}`"))),
    };
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::config(format!("cannot configure {n} threads: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    return rayon::current_num_threads();
    #[cfg(not(feature = "parallel"))]
    1
}
