//! Argument parsing and command dispatch.
//!
//! ```text
//! fedgen generate-data [--config PATH] [--seed N] --out DIR
//! fedgen run           [--config PATH] [--mode MODE] [--seed N] [--data DIR] --out DIR
//! fedgen evaluate      --real PATH --syn PATH --out PATH [--seed N]
//! fedgen compare       RUN_DIR... [--out PATH]
//! ```
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime
//! failure. `FEDGEN_THREADS` caps client-worker parallelism.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use crate::config::{parse_mode, RunConfig};
use crate::{compare, runs, AppError};

const USAGE: &str = "usage:
  fedgen generate-data [--config PATH] [--seed N] --out DIR
  fedgen run           [--config PATH] [--mode MODE] [--seed N] [--data DIR] --out DIR
  fedgen evaluate      --real PATH --syn PATH --out PATH [--seed N]
  fedgen compare       RUN_DIR... [--out PATH]

modes: fedehr_gen | fedavg | fedehr_no_ma | fedehr_no_da | centralized
environment: FEDGEN_THREADS caps worker parallelism
exit codes: 0 ok, 2 config error, 3 data error, 4 runtime failure";

#[derive(Debug, Default)]
struct Flags {
    config: Option<PathBuf>,
    mode: Option<String>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    data: Option<PathBuf>,
    real: Option<PathBuf>,
    syn: Option<PathBuf>,
    positional: Vec<PathBuf>,
}

fn parse_flags(args: &[String]) -> Result<Flags, AppError> {
    let mut flags = Flags::default();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let mut take = |name: &str| -> Result<String, AppError> {
            it.next()
                .cloned()
                .ok_or_else(|| AppError::config(format!("{name} needs a value")))
        };
        match arg.as_str() {
            "--config" => flags.config = Some(PathBuf::from(take("--config")?)),
            "--mode" => flags.mode = Some(take("--mode")?),
            "--seed" => {
                let v = take("--seed")?;
                flags.seed = Some(
                    v.parse::<u64>()
                        .map_err(|_| AppError::config(format!("'{v}' is not a seed")))?,
                );
            }
            "--out" => flags.out = Some(PathBuf::from(take("--out")?)),
            "--data" => flags.data = Some(PathBuf::from(take("--data")?)),
            "--real" => flags.real = Some(PathBuf::from(take("--real")?)),
            "--syn" => flags.syn = Some(PathBuf::from(take("--syn")?)),
            other if other.starts_with("--") => {
                return Err(AppError::config(format!("unknown flag '{other}'")));
            }
            other => flags.positional.push(PathBuf::from(other)),
        }
    }
    Ok(flags)
}

/// Loads the config file (or defaults), applying `--mode`/`--seed`
/// overrides. Returns the config plus the exact text echoed into run dirs.
fn load_config(flags: &Flags) -> Result<(RunConfig, String), AppError> {
    let mut config = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AppError::config(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(mode) = &flags.mode {
        config.mode = parse_mode(mode)?;
    }
    if let Some(seed) = flags.seed {
        config.seed = seed;
    }
    // overrides are part of the effective configuration, so re-serialize
    let text = config.to_text();
    Ok((config, text))
}

fn require(path: &Option<PathBuf>, flag: &str) -> Result<PathBuf, AppError> {
    path.clone()
        .ok_or_else(|| AppError::config(format!("{flag} is required")))
}

fn dispatch(args: &[String]) -> Result<(), AppError> {
    let Some(command) = args.first() else {
        return Err(AppError::config(USAGE));
    };
    let flags = parse_flags(&args[1..])?;
    match command.as_str() {
        "generate-data" => {
            let out = require(&flags.out, "--out")?;
            let (config, _) = load_config(&flags)?;
            runs::cmd_generate_data(&config, &out)
        }
        "run" => {
            let out = require(&flags.out, "--out")?;
            let (config, text) = load_config(&flags)?;
            runs::cmd_run(&config, &text, &out, flags.data.as_deref())
        }
        "evaluate" => {
            let real = require(&flags.real, "--real")?;
            let syn = require(&flags.syn, "--syn")?;
            let out = require(&flags.out, "--out")?;
            runs::cmd_evaluate(&real, &syn, &out, flags.seed.unwrap_or(42))
        }
        "compare" => {
            let dirs: Vec<&Path> = flags.positional.iter().map(|p| p.as_path()).collect();
            compare::cmd_compare(&dirs, flags.out.as_deref())
        }
        "--help" | "-h" | "help" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(AppError::config(format!("unknown command '{other}'\n{USAGE}"))),
    }
}

pub fn run(args: &[String]) -> ExitCode {
    match dispatch(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("fedgen: {err}");
            err.exit_code()
        }
    }
}
