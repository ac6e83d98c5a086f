//! The `aronsson` command line: `run` executes a JSON experiment config or a
//! named preset and writes CSV files plus `report.json` into the output
//! directory; `presets` lists the shipped configurations.
//!
//! Exit codes: 0 when every check passes, 2 when a check fails, 1 for usage,
//! config and I/O errors.

pub mod config;
pub mod experiments;
pub mod presets;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::ExperimentConfig;
use experiments::{Context, ExperimentReport};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAIL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "aronsson", version, about = "Aronsson-equation and minimum-time experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a config file or a preset.
    Run(RunArgs),
    /// List the built-in presets.
    Presets {
        /// Print the presets, with their resolved configs, as a JSON array.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the `output` field of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub pass: bool,
    pub experiments: Vec<ExperimentReport>,
}

#[derive(Serialize)]
struct Timing {
    experiment: &'static str,
    seconds: f64,
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    match cli.command {
        Command::Presets { json } => list_presets(json),
        Command::Run(args) => match run(args) {
            Ok(code) => code,
            Err(msg) => {
                eprintln!("error: {msg}");
                EXIT_USAGE
            }
        },
    }
}

fn list_presets(json: bool) -> i32 {
    let mut out = io::stdout().lock();
    let written = if json {
        let all: Vec<serde_json::Value> = presets::NAMES
            .iter()
            .map(|n| {
                let cfg = presets::preset(n).expect("listed preset exists").resolved();
                serde_json::json!({
                    "name": n,
                    "description": presets::describe(n),
                    "config": cfg,
                })
            })
            .collect();
        serde_json::to_writer_pretty(&mut out, &all)
            .map_err(io::Error::other)
            .and_then(|_| writeln!(out))
    } else {
        presets::NAMES.iter().try_for_each(|n| {
            writeln!(out, "{n:<26}{}", presets::describe(n).expect("listed preset has a description"))
        })
    };
    if written.is_ok() {
        EXIT_PASS
    } else {
        EXIT_USAGE
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, String> {
    if let Some(name) = &args.preset {
        return presets::preset(name)
            .ok_or_else(|| format!("unknown preset '{name}' (known: {})", presets::NAMES.join(", ")));
    }
    let path = args.config.as_ref().expect("clap requires --config or --preset");
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    ExperimentConfig::from_json(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    text.push('\n');
    fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn run(args: RunArgs) -> Result<i32, String> {
    let cfg = load_config(&args)?;
    let scenario = cfg.scenario().map_err(|e| format!("invalid config: {e}"))?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output.clone());
    fs::create_dir_all(&out).map_err(|e| format!("cannot create {}: {e}", out.display()))?;
    write_json(&out.join("resolved-config.json"), &cfg.resolved())?;

    let threads = args.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| format!("cannot start {threads} threads: {e}"))?;

    let kinds = cfg.experiment.kinds();
    let (reports, timing) = pool.install(|| {
        let mut ctx = Context::new(&scenario, &out);
        let mut reports = Vec::new();
        let mut timing = Vec::new();
        for kind in kinds {
            let t0 = Instant::now();
            let report = ctx.run(kind).map_err(|e| format!("{}: {e}", kind.name()))?;
            timing.push(Timing {
                experiment: kind.name(),
                seconds: t0.elapsed().as_secs_f64(),
            });
            eprintln!("{:<16}{}", kind.name(), if report.pass { "pass" } else { "FAIL" });
            reports.push(report);
        }
        Ok::<_, String>((reports, timing))
    })?;

    let report = RunReport {
        pass: reports.iter().all(|r| r.pass),
        experiments: reports,
    };
    write_json(&out.join("report.json"), &report)?;
    write_json(&out.join("timing.json"), &timing)?;
    Ok(if report.pass { EXIT_PASS } else { EXIT_FAIL })
}
