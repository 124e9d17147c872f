//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
//! Logs go to stderr; reports go to files and to stdout as JSON.

mod commands;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::error::Error;
use crate::io_formats::{to_canonical_string, write_json};

pub use commands::{
    CalibrateArgs, EvalBokehArgs, EvalDepthArgs, GenBenchArgs, RenderArgs, SignArg, StackArgs,
    SweepDepthArgs, ValidateBenchArgs, ValueKind,
};

pub const MANIFEST_SCHEMA: &str = "lenssweep/manifest/v1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "lenssweep",
    version,
    about = "Thin-lens bokeh rendering, synthetic benchmarks and depth from bokeh-strength sweeps"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Print the resolved run manifest and exit without running.
    #[arg(long, global = true)]
    pub manifest_only: bool,
    /// JSON object of flag values; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic bokeh benchmark from foreground and background assets.
    GenBench(GenBenchArgs),
    /// Render one bokeh image from a scene document.
    Render(RenderArgs),
    /// Render a bokeh stack directory from a scene or an image plus disparity.
    Stack(StackArgs),
    /// Recover inverse-depth offsets and depth from a bokeh stack.
    SweepDepth(SweepDepthArgs),
    /// Harmonize camera metadata of a dataset into JSONL rows.
    Calibrate(CalibrateArgs),
    /// PSNR and SSIM of a rendered image against ground truth.
    EvalBokeh(EvalBokehArgs),
    /// Depth accuracy metrics of a prediction against ground truth.
    EvalDepth(EvalDepthArgs),
    /// Check the layout and metadata of a benchmark directory.
    ValidateBench(ValidateBenchArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenBench(_) => "gen-bench",
            Command::Render(_) => "render",
            Command::Stack(_) => "stack",
            Command::SweepDepth(_) => "sweep-depth",
            Command::Calibrate(_) => "calibrate",
            Command::EvalBokeh(_) => "eval-bokeh",
            Command::EvalDepth(_) => "eval-depth",
            Command::ValidateBench(_) => "validate-bench",
        }
    }
}

/// Failure of a CLI run, carrying its exit code class.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(Error::Internal(_)) => EXIT_INTERNAL,
            CliError::Lib(_) => EXIT_DATA,
        }
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema: String,
    pub subcommand: String,
    pub tool_version: String,
    /// Parsed flags after merging the config file.
    pub config: Value,
    /// Library settings with every default filled in.
    pub resolved: Value,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
}

/// What a subcommand will read and write, computed before it runs.
pub struct Plan {
    pub resolved: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Default manifest location.
    pub manifest_path: Option<PathBuf>,
}

fn config_flag(argv: &[OsString]) -> Option<PathBuf> {
    let args: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            return args.get(i + 1).map(PathBuf::from);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// Appends config-file values for flags not given on the command line.
pub fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_flag(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Lib(Error::io(&path, e)))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Lib(Error::decode(&path, e.to_string())))?;
    let Value::Object(map) = value else {
        return Err(usage(format!(
            "--config {}: expected a JSON object of flag values",
            path.display()
        )));
    };
    let given: Vec<String> = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let mut out = argv;
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config"
            || given
                .iter()
                .any(|a| a == &flag || a.starts_with(&format!("{flag}=")))
        {
            continue;
        }
        let text = match v {
            Value::Bool(true) => {
                out.push(flag.into());
                continue;
            }
            Value::Bool(false) | Value::Null => continue,
            Value::String(s) => s,
            Value::Number(n) => n.to_string(),
            Value::Array(items) => items
                .iter()
                .map(|i| match i {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            Value::Object(_) => {
                return Err(usage(format!(
                    "config key `{key}`: nested objects are not flags"
                )))
            }
        };
        out.push(flag.into());
        out.push(text.into());
    }
    Ok(out)
}

fn init_logging(level: log::LevelFilter) {
    // Built explicitly so no environment variable changes behavior.
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .format_timestamp(None)
        .try_init();
}

fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        crate::io_formats::ensure_dir(parent)?;
    }
    write_json(manifest, path)?;
    Ok(())
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match merge_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.common.log_level);
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let jobs = cli
        .common
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let plan = commands::plan(&cli.command)?;
    let mut manifest = RunManifest {
        schema: MANIFEST_SCHEMA.to_string(),
        subcommand: cli.command.name().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: commands::config_value(&cli.command)?,
        resolved: plan.resolved,
        seed: plan.seed,
        jobs,
        inputs: plan.inputs,
        outputs: plan.outputs,
        wall_time_s: 0.0,
    };
    if cli.common.manifest_only {
        print!("{}", to_canonical_string(&manifest)?);
        return Ok(());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let report = pool.install(|| commands::execute(&cli.command))?;
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    if let Some(path) = cli.common.manifest.as_ref().or(plan.manifest_path.as_ref()) {
        write_manifest(&manifest, path)?;
    }
    if !report.is_null() {
        print!("{}", to_canonical_string(&report)?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_values_fill_missing_flags_only() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(
            &cfg,
            r#"{"seed": 7, "scenes": 2, "jpeg": true, "ks": [10, 20], "out": "x"}"#,
        )
        .unwrap();
        let argv = os(&[
            "lenssweep",
            "gen-bench",
            "--out",
            "mine",
            "--config",
            cfg.to_str().unwrap(),
        ]);
        let merged: Vec<String> = merge_config(argv)
            .unwrap()
            .into_iter()
            .map(|s| s.into_string().unwrap())
            .collect();
        assert!(merged.windows(2).any(|w| w == ["--seed", "7"]));
        assert!(merged.windows(2).any(|w| w == ["--ks", "10,20"]));
        assert!(merged.contains(&"--jpeg".to_string()));
        assert_eq!(merged.iter().filter(|a| *a == "--out").count(), 1);
    }

    #[test]
    fn exit_codes_by_error_class() {
        assert_eq!(usage("x").exit_code(), 1);
        assert_eq!(
            CliError::Lib(Error::MissingField("f".into())).exit_code(),
            2
        );
        assert_eq!(CliError::Lib(Error::Internal("bug".into())).exit_code(), 3);
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(run(["lenssweep", "validate-bench", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["lenssweep", "--help"]), EXIT_OK);
    }
}
