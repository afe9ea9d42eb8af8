//! `slab <command> --config <file> [--out <dir>] [--workers k] [--validate-only]`
//!
//! Exit status: 0 success, 1 invalid input, 2 numerical or file-system
//! failure, 3 a requested acceptance assertion failed.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use slab_core::io::{write_json, Manifest};
use slab_core::SlabError;

use config::{parse_config, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Generate,
    Thresholds,
    FreeEnergy,
    Simulate,
    Mixing,
    Transit,
    Sweep,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Generate => Self::Generate,
            Cmd::Thresholds => Self::Thresholds,
            Cmd::FreeEnergy => Self::FreeEnergy,
            Cmd::Simulate => Self::Simulate,
            Cmd::Mixing => Self::Mixing,
            Cmd::Transit => Self::Transit,
            Cmd::Sweep => Self::Sweep,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "slab", version, about = "Spiked-matrix Langevin dynamics laboratory")]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `out`).
    #[arg(long, env = "SLAB_OUT_DIR")]
    out: Option<PathBuf>,
    /// Worker threads (overrides the config's `workers`).
    #[arg(long)]
    workers: Option<usize>,
    /// Parse and validate, print the effective config, and exit.
    #[arg(long)]
    validate_only: bool,
}

fn exit_code(e: &SlabError) -> u8 {
    match e {
        SlabError::Domain(_) | SlabError::Contract(_) | SlabError::Format(_) => 1,
        SlabError::Numerical(_) | SlabError::Io { .. } => 2,
    }
}

fn fail(e: &SlabError) -> ExitCode {
    eprintln!("slab: {e}");
    ExitCode::from(exit_code(e))
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command: Command = args.command.into();
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return fail(&SlabError::Io { path: args.config.clone(), source: e }),
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(w) = args.workers {
        cfg.workers = Some(w);
    }
    if let Err(e) = cfg.validate(command) {
        return fail(&e);
    }
    cfg.command = Some(command);
    if args.validate_only {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serialises"));
        return ExitCode::SUCCESS;
    }
    let out = args
        .out
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("slab-out"));
    if let Err(e) = std::fs::create_dir_all(&out) {
        return fail(&SlabError::Io { path: out, source: e });
    }
    if let Some(w) = cfg.workers {
        // Only fails if a global pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }

    let mut manifest = Manifest::new(command.name(), serde_json::to_value(&cfg).expect("config serialises"));
    let result = {
        let mut ctx = commands::Ctx { cfg: &cfg, out: &out, manifest: &mut manifest };
        commands::dispatch(command, &mut ctx)
    };
    if let Err(e) = &result {
        manifest.errors.push(e.to_string());
    }
    manifest.finish();
    if let Err(e) = write_json(&out.join("manifest.json"), &manifest) {
        return fail(&e);
    }
    match result {
        Err(e) => fail(&e),
        Ok(()) => {
            let failed: Vec<&str> = manifest.assertions.iter().filter(|a| !a.1).map(|a| a.0.as_str()).collect();
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("slab: failed assertions: {}", failed.join(", "));
                ExitCode::from(3)
            }
        }
    }
}
