use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dcqcn_sim::sim::{run_scenario, sweep, ExitStatus, Override};
use dcqcn_sim::{Mechanism, ScenarioConfig, SimError};

#[derive(Parser)]
#[command(name = "sim", about = "Lossless CLOS fabric simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write deliveries.csv, summary.csv, run.json.
    Run {
        /// JSON file, or `paper64` for the built-in preset.
        #[arg(long)]
        scenario: String,
        /// pfc | dcqcn | dcqcn-rev (overrides the file)
        #[arg(long, value_parser = parse_mechanism)]
        cc: Option<Mechanism>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bin_ns: Option<u64>,
        /// Stop at this simulated time instead of running to drain.
        #[arg(long)]
        until_ms: Option<f64>,
    },
    /// Run one scenario per override into <out>/<name>/.
    Sweep {
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// `name=<json merge patch>`; repeatable. Defaults to the three
        /// mechanisms.
        #[arg(long = "override")]
        overrides: Vec<String>,
    },
    /// Parse and validate a scenario, then print it with defaults filled.
    Validate {
        #[arg(long)]
        scenario: String,
    },
}

fn parse_mechanism(s: &str) -> Result<Mechanism, String> {
    Mechanism::from_cli_name(s).ok_or_else(|| format!("unknown mechanism `{s}`"))
}

fn parse_override(s: &str) -> Result<Override, String> {
    let (name, patch) = s
        .split_once('=')
        .ok_or_else(|| format!("override `{s}` is not name=<json>"))?;
    let patch = serde_json::from_str(patch).map_err(|e| format!("override `{name}`: {e}"))?;
    Ok(Override {
        name: name.to_string(),
        patch,
    })
}

fn fail(status: ExitStatus, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(status.code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run {
            scenario,
            cc,
            seed,
            out,
            bin_ns,
            until_ms,
        } => {
            let mut cfg = match ScenarioConfig::load(&scenario) {
                Ok(c) => c,
                Err(e) => return fail(ExitStatus::ValidationError, e),
            };
            if let Some(m) = cc {
                cfg = cfg.with_mechanism(m);
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(b) = bin_ns {
                cfg.bin_width_ns = b;
            }
            if let Some(ms) = until_ms {
                cfg.run_until_ns = Some((ms * 1e6).round() as u64);
            }
            let result = run_scenario(&cfg, &out);
            let status = ExitStatus::of(&result);
            match result {
                Ok(rep) => {
                    if !rep.meta.drained {
                        eprintln!("warning: not drained at bound; report is truncated");
                    }
                    ExitCode::from(status.code() as u8)
                }
                Err(e @ SimError::Scenario(_)) => fail(ExitStatus::ValidationError, e),
                Err(e) => fail(status, e),
            }
        }
        Cmd::Sweep {
            scenario,
            out,
            seed,
            overrides,
        } => {
            let mut cfg = match ScenarioConfig::load(&scenario) {
                Ok(c) => c,
                Err(e) => return fail(ExitStatus::ValidationError, e),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let overrides = if overrides.is_empty() {
                Override::mechanisms()
            } else {
                match overrides.iter().map(|s| parse_override(s)).collect() {
                    Ok(v) => v,
                    Err(e) => return fail(ExitStatus::ValidationError, e),
                }
            };
            let mut worst = 0;
            for o in sweep(&cfg, &overrides, &out) {
                match &o.error {
                    None => println!("{}: exit {}", o.name, o.status.code()),
                    Some(e) => println!("{}: exit {} ({e})", o.name, o.status.code()),
                }
                worst = worst.max(o.status.code());
            }
            ExitCode::from(worst as u8)
        }
        Cmd::Validate { scenario } => match ScenarioConfig::load(&scenario) {
            Ok(cfg) => {
                println!("{}", cfg.to_json_pretty());
                ExitCode::SUCCESS
            }
            Err(e) => fail(ExitStatus::ValidationError, e),
        },
    }
}
