//! `tidal-kdv run <config> [--out DIR] [--quiet]` / `tidal-kdv validate <config>`.
//!
//! Exit codes: 0 all assertions pass, 1 assertion failure, 2 usage or
//! configuration error, 3 numerical divergence.

use clap::{Arg, ArgAction, Command};
use std::path::PathBuf;
use std::process::ExitCode;
use tidal_kdv::config::ExperimentConfig;
use tidal_kdv::experiments;

fn cli() -> Command {
    Command::new("tidal-kdv")
        .about("Spectral experiments for KdV on step-like backgrounds")
        .subcommand_required(true)
        .subcommand(
            Command::new("run")
                .about("Execute the experiment described by a config file")
                .arg(Arg::new("config").required(true).value_parser(clap::value_parser!(PathBuf)))
                .arg(
                    Arg::new("out")
                        .long("out")
                        .value_name("DIR")
                        .value_parser(clap::value_parser!(PathBuf))
                        .help("Override the output directory"),
                )
                .arg(
                    Arg::new("quiet")
                        .long("quiet")
                        .action(ArgAction::SetTrue)
                        .help("Suppress per-assertion output"),
                ),
        )
        .subcommand(
            Command::new("validate")
                .about("Parse and validate a config file without running it")
                .arg(Arg::new("config").required(true).value_parser(clap::value_parser!(PathBuf))),
        )
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    ExperimentConfig::parse(&text).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    match matches.subcommand() {
        Some(("validate", sub)) => {
            let path = sub.get_one::<PathBuf>("config").expect("required");
            match load_config(path) {
                Ok(cfg) => {
                    println!("ok: {} experiment on a {}-point grid", cfg.experiment, cfg.n);
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("invalid config: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Some(("run", sub)) => {
            let path = sub.get_one::<PathBuf>("config").expect("required");
            let out = sub.get_one::<PathBuf>("out").map(PathBuf::as_path);
            let quiet = sub.get_flag("quiet");
            let cfg = match load_config(path) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("invalid config: {e}");
                    return ExitCode::from(2);
                }
            };
            match experiments::run(&cfg, out) {
                Ok(manifest) => {
                    if !quiet {
                        for a in &manifest.assertions {
                            println!(
                                "{}: {} (value {:.6e}, threshold {:.6e}) {}",
                                a.name,
                                if a.passed { "PASS" } else { "FAIL" },
                                a.value,
                                a.threshold,
                                a.detail
                            );
                        }
                        if let Some(t) = manifest.wrap_time {
                            println!("wrap time: {t:.6}");
                        }
                    }
                    if let Some(why) = &manifest.divergence {
                        eprintln!("divergence: {why}");
                        ExitCode::from(3)
                    } else if manifest.all_passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) if e.is_divergence() => {
                    eprintln!("divergence: {e}");
                    ExitCode::from(3)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        _ => unreachable!("subcommand required"),
    }
}
