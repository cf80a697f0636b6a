//! Batch front-end: `ps`, `pps`, `verify` and `sensitivity` subcommands.
//!
//! Exit codes: 0 success, 1 configuration error, 2 verification failure,
//! 3 runtime error (grid containment, orthogonal post-selection, ...).

mod commands;
pub mod config;
mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::error::MeasureError;
use crate::io::write_atomic;
pub use config::{ConfigError, ExperimentConfig, Format};
pub use verify::{verify_report, CheckResult, VerifyReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pointer-measure", version, about = "Pointer statistics for von Neumann measurements")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides outputs.directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// RNG seed; overrides the config seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output format; overrides outputs.formats
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Pre-selected pointer profiles and means over the coupling sweep
    Ps,
    /// Pre- and post-selected pointer profiles, means and weak-value summary
    Pps,
    /// Check closed forms against brute-force evolution
    Verify,
    /// Sensitivities and their Monte-Carlo check
    Sensitivity,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Ps => "ps",
            Command::Pps => "pps",
            Command::Verify => "verify",
            Command::Sensitivity => "sensitivity",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Verification(_) => EXIT_VERIFY,
            CliError::Measure(_) | CliError::Io { .. } => EXIT_RUNTIME,
        }
    }
}

/// Written last, once every output of the command exists.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub tool_version: String,
    pub timestamp: String,
    pub seed: u64,
    pub outputs: Vec<String>,
}

/// Collects the files a command writes.
pub(crate) struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub(crate) fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        write_atomic(&path, contents).map_err(|source| CliError::Io { path, source })?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub(crate) fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn finish(self, manifest: RunManifest) -> Result<PathBuf, CliError> {
        let name = format!("{}_manifest.json", manifest.command);
        let path = self.dir.join(&name);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(&path, text.as_bytes()).map_err(|source| CliError::Io { path: path.clone(), source })?;
        Ok(path)
    }
}

/// Resolved settings shared by every command.
pub(crate) struct Run {
    pub config: ExperimentConfig,
    pub formats: Vec<Format>,
    pub seed: u64,
    pub command: &'static str,
}

impl Run {
    pub(crate) fn meta(&self) -> Vec<(&'static str, String)> {
        vec![
            ("tool", format!("pointer-measure {}", env!("CARGO_PKG_VERSION"))),
            ("command", self.command.to_string()),
            ("config_sha256", self.config.hash.clone()),
            ("seed", self.seed.to_string()),
        ]
    }

    pub(crate) fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Runs one command; returns the path of the manifest written.
pub fn execute(cli: &Cli) -> Result<PathBuf, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| ConfigError::Field {
        field: "--config".into(),
        message: "a config file is required".into(),
    })?;
    let config = ExperimentConfig::load(path)?;
    let dir = cli
        .out
        .clone()
        .or_else(|| config.directory.clone())
        .unwrap_or_else(|| PathBuf::from("output"));
    let formats = match cli.format {
        Some(FormatArg::Csv) => vec![Format::Csv],
        Some(FormatArg::Json) => vec![Format::Json],
        None => config.formats.clone(),
    };
    let seed = cli.seed.unwrap_or(config.seed);
    let run = Run { config, formats, seed, command: cli.command.name() };
    let mut out = Outputs::new(&dir)?;
    let outcome = match cli.command {
        Command::Ps => commands::cmd_ps(&run, &mut out),
        Command::Pps => commands::cmd_pps(&run, &mut out),
        Command::Sensitivity => commands::cmd_sensitivity(&run, &mut out),
        Command::Verify => verify::cmd_verify(&run, &mut out),
    };
    // Verification failures still leave a complete report and manifest.
    if let Err(e) = &outcome {
        if !matches!(e, CliError::Verification(_)) {
            return Err(outcome.unwrap_err());
        }
    }
    let manifest = RunManifest {
        command: run.command.to_string(),
        config_sha256: run.config.hash.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: chrono::Utc::now().to_rfc3339(),
        seed,
        outputs: out.files.clone(),
    };
    let manifest_path = out.finish(manifest)?;
    outcome.map(|_| manifest_path)
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(manifest) => {
            log::info!("wrote {}", manifest.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
