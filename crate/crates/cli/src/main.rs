//! `cms`: validate, analyze, simulate and refine contractive Markov systems.
//!
//! Exit codes: 0 success, 1 invalid system document, 2 undecided verdict
//! under `--strict`, 3 I/O failure, 4 any other runtime failure, 64 usage.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::{Ctx, Outcome, UsageError};
use crate::manifest::{manifest_path_for, sha256_hex, unix_now, RunManifest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "cms", version, about = "Certificates and experiments for contractive Markov systems")]
pub struct Cli {
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Exit with status 2 when a verdict is undecided.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Write the run manifest here (default: beside `--out`, if given).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that a document describes a valid Markov system.
    Validate { spec: String },
    /// Exact certificates, the boundary operator and the existence verdict.
    Analyze {
        spec: String,
        /// Cap on boundary-operator iterations.
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Minimal closed sets of atoms.
    Subsystems { spec: String },
    /// Monte Carlo estimate of an invariant measure.
    Simulate(SimulateArgs),
    /// Evaluate the coding map on a word.
    Code(CodeArgs),
    /// Free-energy residual along a simulated path.
    Thermo(ThermoArgs),
    /// Refine a system by cutting atoms, and verify the refinement.
    Refine(RefineArgs),
    /// Re-run a manifest and compare outputs.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub spec: String,
    /// Initial state (a vertex id for subshifts); defaults to the first anchor.
    #[arg(long, allow_negative_numbers = true)]
    pub x0: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub steps: u64,
    /// Burn-in; defaults to a tenth of the steps.
    #[arg(long)]
    pub burn: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub replicas: usize,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Histogram CSV; moments and residuals go to `<stem>.moments.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Reservoir size for residuals and the L-moment check.
    #[arg(long, default_value_t = 10_000)]
    pub reservoir: usize,
    /// Comma-separated horizons for an occupation-tightness report.
    #[arg(long)]
    pub windows: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("mode").required(true).args(["exact", "depth"]))]
pub struct CodeArgs {
    pub spec: String,
    /// Recent symbols in time order, the last one being σ0.
    #[arg(long, default_value = "")]
    pub word: String,
    /// Symbols repeated forever before `--word`, in time order.
    #[arg(long)]
    pub period: Option<String>,
    #[arg(long)]
    pub exact: bool,
    /// Truncate after σ0, …, σ_{-M}.
    #[arg(long)]
    pub depth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ThermoArgs {
    pub spec: String,
    #[arg(long, default_value_t = 1)]
    pub memory: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub steps: u64,
    #[arg(long)]
    pub burn: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub x0: Option<f64>,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    pub spec: String,
    /// Cuts such as `2@1/2:left-closed`, comma-separated.
    #[arg(long)]
    pub cuts: String,
    /// Seed for the sampled coding-map words.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 20)]
    pub words: usize,
    /// Longest base word in the pushforward check.
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    /// Write the refined system document here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 64;
    }
    if let Some(e) = err.downcast_ref::<cms_core::Error>() {
        if e.is_validation() {
            return 1;
        }
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 3;
    }
    4
}

fn run_replay(path: &std::path::Path, format: Format) -> Result<Outcome> {
    let m = RunManifest::load(path)?;
    let spec_hash = sha256_hex(commands::read_document(&m.spec)?.as_bytes());
    if spec_hash != m.spec_sha256 {
        bail!("spec {} changed since the run (sha256 {} != {})", m.spec, spec_hash, m.spec_sha256);
    }
    let argv = std::iter::once("cms".to_string()).chain(m.args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| UsageError(e.to_string()))?;
    if matches!(cli.command, Command::Replay { .. }) {
        bail!(UsageError("a manifest cannot replay another replay".into()));
    }
    let mut ctx = Ctx::new(cli.format, cli.strict, true);
    let outcome = commands::dispatch(&mut ctx, &cli.command)?;
    let mut mismatches = Vec::new();
    if sha256_hex(outcome.stdout.as_bytes()) != m.stdout_sha256 {
        mismatches.push("stdout".to_string());
    }
    for o in &m.outputs {
        match ctx.written.iter().find(|w| w.path == o.path) {
            Some(w) if w.sha256 == o.sha256 => {}
            _ => mismatches.push(o.path.clone()),
        }
    }
    let identical = mismatches.is_empty();
    let stdout = match format {
        Format::Json => serde_json::to_string_pretty(&serde_json::json!({
            "manifest": path.display().to_string(),
            "command": m.command,
            "identical": identical,
            "mismatches": mismatches,
        }))? + "\n",
        Format::Text if identical => format!(
            "replay of {}: stdout and {} output file(s) identical\n",
            m.command,
            m.outputs.len()
        ),
        Format::Text => format!("replay of {}: mismatches in {}\n", m.command, mismatches.join(", ")),
    };
    if !identical {
        print!("{stdout}");
        bail!("replay differs from the recorded run");
    }
    Ok(Outcome {
        stdout,
        exit: 0,
        seed: None,
        spec: None,
    })
}

fn real_main() -> Result<u8> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return Ok(code);
        }
    };
    let started = Instant::now();
    let (_, started_unix) = unix_now();
    let mut ctx = Ctx::new(cli.format, cli.strict, false);
    let outcome = match &cli.command {
        Command::Replay { manifest } => run_replay(manifest, cli.format)?,
        other => commands::dispatch(&mut ctx, other)?,
    };
    print!("{}", outcome.stdout);

    let target = cli
        .manifest
        .clone()
        .or_else(|| ctx.written.first().map(|w| manifest_path_for(std::path::Path::new(&w.path))));
    if let (Some(target), Some(spec)) = (target, outcome.spec.as_ref()) {
        let mut args: Vec<String> = std::env::args().skip(1).collect();
        if let Some((seed, true)) = outcome.seed {
            args.push("--seed".into());
            args.push(seed.to_string());
        }
        let manifest = RunManifest {
            tool: "cms".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: commands::command_name(&cli.command).into(),
            args,
            spec: spec.label.clone(),
            spec_sha256: spec.sha256.clone(),
            seed: outcome.seed.map(|s| s.0),
            started_unix,
            wall_clock_ms: started.elapsed().as_millis() as u64,
            stdout_sha256: sha256_hex(outcome.stdout.as_bytes()),
            outputs: ctx.written.clone(),
        };
        std::fs::write(&target, serde_json::to_string_pretty(&manifest)? + "\n")?;
    }
    Ok(outcome.exit)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
