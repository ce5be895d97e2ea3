//! The `inferbase` command-line tool. [`run`] is the whole program; the
//! binary only forwards its arguments and standard streams.
//!
//! Every command reads a TOML run config, writes its reports into a fresh
//! directory `<out>/<command>-<config hash>` and prints the main report to
//! stdout. Exit status is 0 on success, 1 for invalid input and 2 when the
//! run itself fails.

mod commands;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use config::{AttackSpec, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Runtime(_) => "runtime",
        }
    }
}

#[derive(Parser)]
#[command(name = "inferbase", version, about = "Allowed-inference baselines and attack scoring for tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Baseline precision and coverage for every configured condition.
    Baseline(Common),
    /// Precision / prediction-rate trade-off over abstention thresholds.
    Sweep(Common),
    /// Score attack prediction files against coverage-matched baselines.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Attack file (`target_id,prediction`) for the config's only
        /// condition. Repeatable.
        #[arg(long = "attack")]
        attacks: Vec<PathBuf>,
    },
    /// Sensitivity of baselines to replicated records.
    Replicate(Common),
    /// Precision/recall tables for membership ROC points under skews.
    Roc2pr {
        #[command(flatten)]
        common: Common,
        /// ROC file with header `fpr,tpr`. Repeatable.
        #[arg(long)]
        roc: Vec<PathBuf>,
        /// Include the bundled Shokri and Carlini curves.
        #[arg(long)]
        bundled: bool,
        /// Member:non-member skew such as `1:30`. Repeatable.
        #[arg(long = "skew")]
        skews: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML, or the JSON `config` of an earlier report).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory that receives the run directory (default `runs`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

/// Parses `args` (including the program name) and runs the command.
/// Reports go to `stdout`, errors and progress to `stderr`. Returns the
/// process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = write!(stdout, "{}", e.render());
            return 0;
        }
        Err(e) => return fail(&CliError::Validation(e.to_string().trim().to_string()), stderr),
    };
    match execute(cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => fail(&e, stderr),
    }
}

fn fail(e: &CliError, stderr: &mut dyn Write) -> u8 {
    let report = ErrorReport {
        error: ErrorBody {
            kind: e.kind(),
            message: e.to_string(),
        },
    };
    let _ = writeln!(stderr, "{}", serde_json::to_string(&report).expect("error serializes"));
    e.code()
}

fn load_config(common: &Common, required: bool) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) if p.extension().is_some_and(|e| e == "json") => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Validation(format!("reading {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config: {e}")))?
        }
        Some(p) => RunConfig::load(p)?,
        None if required => return Err(CliError::Validation("--config is required".into())),
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &common.out {
        cfg.out = Some(absolute(out));
    }
    if cfg.out.is_none() {
        cfg.out = Some(absolute(Path::new("runs")));
    }
    Ok(cfg)
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<u8, CliError> {
    let (name, common, cfg, output) = match cli.command {
        Command::Baseline(common) => {
            let cfg = load_config(&common, true)?;
            let out = commands::baseline(&cfg)?;
            ("baseline", common, cfg, out)
        }
        Command::Sweep(common) => {
            let cfg = load_config(&common, true)?;
            let out = commands::sweep(&cfg)?;
            ("sweep", common, cfg, out)
        }
        Command::Compare { common, attacks } => {
            let mut cfg = load_config(&common, true)?;
            if !attacks.is_empty() {
                let [cond] = cfg.conditions.as_slice() else {
                    return Err(CliError::Validation("--attack needs a config with exactly one condition".into()));
                };
                if cond.secret == "*" {
                    return Err(CliError::Validation("--attack needs a named secret, not *".into()));
                }
                let cond = cond.clone();
                cfg.attacks.extend(attacks.iter().map(|f| AttackSpec {
                    file: absolute(f),
                    secret: cond.secret.clone(),
                    known: cond.known.clone(),
                    epsilon: cond.epsilon,
                }));
            }
            let out = commands::compare(&cfg)?;
            ("compare", common, cfg, out)
        }
        Command::Replicate(common) => {
            let cfg = load_config(&common, true)?;
            let out = commands::replicate(&cfg)?;
            ("replicate", common, cfg, out)
        }
        Command::Roc2pr {
            common,
            roc,
            bundled,
            skews,
        } => {
            let mut cfg = load_config(&common, false)?;
            cfg.roc.extend(roc.iter().map(|p| absolute(p)));
            cfg.bundled |= bundled;
            if !skews.is_empty() {
                cfg.skews = skews;
            }
            let out = commands::roc2pr(&cfg)?;
            ("roc2pr", common, cfg, out)
        }
    };

    let dir = write_run(name, &cfg, &output)?;
    let printed = match common.format {
        Format::Json => &output.json,
        Format::Csv => &output.csv,
    };
    stdout
        .write_all(printed)
        .and_then(|_| stdout.flush())
        .map_err(|e| CliError::Runtime(format!("writing stdout: {e}")))?;
    let _ = writeln!(stderr, "report written to {}", dir.display());
    Ok(if output.partial_failure { 2 } else { 0 })
}

/// Creates a new run directory and writes the report, CSV and resolved
/// config into it. Existing runs are never overwritten: a repeated run
/// gets a numbered sibling directory.
fn write_run(name: &str, cfg: &RunConfig, output: &commands::Output) -> Result<PathBuf, CliError> {
    let io = |what: &Path, e: std::io::Error| CliError::Runtime(format!("{}: {e}", what.display()));
    let root = cfg.out.clone().expect("set by load_config");
    std::fs::create_dir_all(&root).map_err(|e| io(&root, e))?;
    let stem = format!("{name}-{}", cfg.hash());
    let mut dir = root.join(&stem);
    let mut n = 1;
    loop {
        match std::fs::create_dir(&dir) {
            Ok(()) => break,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                n += 1;
                dir = root.join(format!("{stem}-{n}"));
            }
            Err(e) => return Err(io(&dir, e)),
        }
    }
    let mut config_json = serde_json::to_vec_pretty(cfg).expect("config serializes");
    config_json.push(b'\n');
    for (file, bytes) in [
        ("report.json", &output.json),
        (output.csv_name, &output.csv),
        ("config.json", &config_json),
    ] {
        let path = dir.join(file);
        let mut f = std::fs::File::create_new(&path).map_err(|e| io(&path, e))?;
        f.write_all(bytes).map_err(|e| io(&path, e))?;
    }
    Ok(dir)
}
