//! Experiment harness: config parsing, subcommand dispatch, result and
//! manifest emission.
//!
//! Exit codes: 0 on success, 1 when a validation check or experiment
//! fails, 2 for bad arguments or configuration.

// Negated comparisons like `!(x > 0.0)` are used on purpose: unlike
// `x <= 0.0`, they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use thiserror::Error;


pub mod commands;
pub mod config;

use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] dpbeamsim_core::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Usage(_) => 2,
            _ => 1,
        }
    }
}

const USAGE: &str = "usage: dpbeamsim <subcommand> [--config FILE] [--seed N] [--out DIR] [--threads N]

subcommands:
  ber            BER vs SNR tables per feedback scheme
  constellation  equalized received-symbol dumps
  gain           relative beamforming-gain distributions per antenna shape
  attack         eavesdropper speed tracks, private vs non-private
  spectrogram    short-time Doppler spectrogram of the effective CSI
  validate       analytic-vs-Monte-Carlo checks (exit 1 on any failure)
  budget         advanced-composition privacy-loss table";

/// Parsed command line.
pub struct Cli {
    pub subcommand: String,
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
}

pub fn parse_args(args: &[String]) -> Result<Cli, HarnessError> {
    let mut subcommand = None;
    let mut config_path: Option<PathBuf> = None;
    let mut seed: Option<u64> = None;
    let mut out_dir = PathBuf::from("results");
    let mut threads: Option<usize> = None;

    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let mut flag_value = |name: &str| -> Result<String, HarnessError> {
            it.next()
                .cloned()
                .ok_or_else(|| HarnessError::Usage(format!("{name} requires a value")))
        };
        match arg.as_str() {
            "--config" => config_path = Some(PathBuf::from(flag_value("--config")?)),
            "--seed" => {
                seed = Some(flag_value("--seed")?.parse().map_err(|e| {
                    HarnessError::Usage(format!("--seed must be an integer: {e}"))
                })?)
            }
            "--out" => out_dir = PathBuf::from(flag_value("--out")?),
            "--threads" => {
                threads = Some(flag_value("--threads")?.parse().map_err(|e| {
                    HarnessError::Usage(format!("--threads must be an integer: {e}"))
                })?)
            }
            "--help" | "-h" => return Err(HarnessError::Usage(USAGE.into())),
            other if subcommand.is_none() && !other.starts_with('-') => {
                subcommand = Some(other.to_string())
            }
            other => {
                return Err(HarnessError::Usage(format!(
                    "unexpected argument {other:?}\n{USAGE}"
                )))
            }
        }
    }

    let subcommand =
        subcommand.ok_or_else(|| HarnessError::Usage(format!("missing subcommand\n{USAGE}")))?;
    let mut config = match config_path {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| {
                HarnessError::Config(format!("cannot read {}: {e}", path.display()))
            })?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        config.set_seed(s);
    } else {
        config.validate.seed = config.channel.seed;
    }
    dpbeamsim_core::exec::configure_threads(threads);
    Ok(Cli {
        subcommand,
        config,
        out_dir,
    })
}

pub fn dispatch(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = &cli.config;
    let out = &cli.out_dir;
    match cli.subcommand.as_str() {
        "ber" => commands::run_ber(cfg, out),
        "constellation" => commands::run_constellation(cfg, out),
        "gain" => commands::run_gain(cfg, out),
        "attack" => commands::run_attack_cmd(cfg, out),
        "spectrogram" => commands::run_spectrogram(cfg, out),
        "validate" => commands::run_validate(cfg, out),
        "budget" => commands::run_budget(cfg, out),
        other => Err(HarnessError::Usage(format!(
            "unknown subcommand {other:?}\n{USAGE}"
        ))),
    }
}

/// Full CLI entry point; returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    match parse_args(args).and_then(|cli| dispatch(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
