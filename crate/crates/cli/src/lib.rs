//! Front end for `qfc`: argument parsing, run configuration, dispatch to the
//! subcommands, artifact rendering and replay of earlier artifacts.
//!
//! Every artifact embeds the resolved run configuration and the library
//! version. CSV artifacts carry them as `#` comment lines ahead of the column
//! header; JSON artifacts as the `config` and `qfc_version` fields.

pub mod commands;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::Path;

pub use commands::Output;

/// Exit code for successful runs.
pub const EXIT_OK: i32 = 0;
/// Exit code for invalid input, configuration or unwritable paths.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for numerical failures; artifacts written so far are flagged partial.
pub const EXIT_NUMERICAL: i32 = 3;

const CONFIG_PREFIX: &str = "# config: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CausalOrder,
    Wavepacket,
    Falloff,
    Protocol,
    Detector,
    Smearing,
    SpecfunProbe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Fully resolved run: what gets embedded in artifacts and replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Command,
    pub format: Format,
    pub seed: u64,
    pub threads: usize,
    pub tolerances: BTreeMap<String, f64>,
    /// Subcommand parameters with every default filled in.
    pub params: Value,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Numerical(_) => "numerical",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) => m,
        }
    }

    /// JSON error report written to stderr.
    pub fn report(&self) -> Value {
        json!({
            "error": { "kind": self.kind(), "message": self.message() },
            "qfc_version": qfc_core::VERSION,
        })
    }
}

impl From<qfc_core::Error> for CliError {
    fn from(e: qfc_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(format!("malformed JSON: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "qfc", version, about = "Measurement interventions on a free scalar field")]
pub struct Cli {
    /// JSON parameter file (for `replay`: the artifact to re-run).
    #[arg(long, global = true)]
    pub input: Option<String>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub output: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Tolerance override `KEY=VAL`; may be repeated.
    #[arg(long = "tolerance", global = true, value_name = "KEY=VAL")]
    pub tolerances: Vec<String>,
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum CliCommand {
    /// Causal relation and linear extension of intervention regions.
    CausalOrder,
    /// On-axis 3+1d Gaussian-packet wavefunction on a (t, z) grid.
    Wavepacket,
    /// Large-time fall-off of the packet just outside the light cone.
    Falloff,
    /// Kick / measure / rotate / field protocol in a truncated box.
    Protocol,
    /// Two detectors and one field mode: E1 and the λ2² coefficient.
    Detector,
    /// Smearing functions, localisation and the no-signalling check.
    Smearing,
    /// Evaluate D_ν(z) at given complex points.
    SpecfunProbe,
    /// Re-run the configuration embedded in an artifact.
    Replay,
}

fn parse_tolerances(raw: &[String]) -> Result<BTreeMap<String, f64>, CliError> {
    let mut out = BTreeMap::new();
    for item in raw {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Validation(format!("tolerance `{item}` is not KEY=VAL")))?;
        let val: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("tolerance `{k}` has non-numeric value `{v}`")))?;
        if !val.is_finite() || val <= 0.0 {
            return Err(CliError::Validation(format!("tolerance `{k}` must be positive")));
        }
        out.insert(k.trim().to_string(), val);
    }
    Ok(out)
}

fn read_file(path: &str) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {path}: {e}")))
}

/// Builds the resolved configuration for a direct (non-replay) run.
pub fn resolve(
    command: Command,
    input_text: Option<&str>,
    format: Format,
    seed: u64,
    threads: usize,
    tolerances: BTreeMap<String, f64>,
) -> Result<RunConfig, CliError> {
    if threads == 0 {
        return Err(CliError::Validation("--threads must be at least 1".into()));
    }
    let raw: Value = match input_text {
        Some(t) => serde_json::from_str(t)?,
        None => json!({}),
    };
    let params = commands::resolve_params(command, raw)?;
    commands::check_tolerances(command, &tolerances)?;
    Ok(RunConfig {
        subcommand: command,
        format,
        seed,
        threads,
        tolerances,
        params,
    })
}

/// Extracts the embedded configuration from a CSV or JSON artifact.
pub fn config_from_artifact(text: &str) -> Result<RunConfig, CliError> {
    let trimmed = text.trim_start();
    let cfg: RunConfig = if trimmed.starts_with('{') {
        let v: Value = serde_json::from_str(trimmed)?;
        let c = v
            .get("config")
            .cloned()
            .ok_or_else(|| CliError::Validation("artifact has no embedded config".into()))?;
        serde_json::from_value(c)?
    } else {
        let line = text
            .lines()
            .take_while(|l| l.starts_with('#'))
            .find_map(|l| l.strip_prefix(CONFIG_PREFIX))
            .ok_or_else(|| CliError::Validation("artifact has no embedded config".into()))?;
        serde_json::from_str(line)?
    };
    // Re-resolve so the embedded parameters pass the same validation.
    let params = commands::resolve_params(cfg.subcommand, cfg.params.clone())?;
    if params != cfg.params {
        return Err(CliError::Validation(
            "embedded parameters are not fully resolved".into(),
        ));
    }
    commands::check_tolerances(cfg.subcommand, &cfg.tolerances)?;
    Ok(cfg)
}

/// Runs the configuration and renders the artifact text. Numerical failures
/// that still produced rows come back as `Ok` with `partial` set.
pub fn dispatch(cfg: &RunConfig) -> Result<(String, Output), CliError> {
    let out = commands::execute(cfg)?;
    Ok((render(cfg, &out)?, out))
}

/// CSV or JSON artifact text.
pub fn render(cfg: &RunConfig, out: &Output) -> Result<String, CliError> {
    let config = serde_json::to_string(cfg)?;
    match cfg.format {
        Format::Csv => {
            let mut s = String::new();
            let _ = writeln!(s, "# qfc {}", qfc_core::VERSION);
            let _ = writeln!(s, "{CONFIG_PREFIX}{config}");
            if out.partial {
                let _ = writeln!(s, "# partial: true");
            }
            let _ = writeln!(s, "{}", out.columns.join(","));
            for row in &out.rows {
                let cells: Vec<String> = row.iter().map(commands::Cell::render).collect();
                let _ = writeln!(s, "{}", cells.join(","));
            }
            Ok(s)
        }
        Format::Json => {
            let doc = json!({
                "qfc_version": qfc_core::VERSION,
                "config": serde_json::to_value(cfg)?,
                "partial": out.partial,
                "result": out.summary,
            });
            let mut s = serde_json::to_string_pretty(&doc)?;
            s.push('\n');
            Ok(s)
        }
    }
}

fn write_output(path: Option<&str>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(parent) = Path::new(p).parent() {
                if !parent.as_os_str().is_empty() && !parent.is_dir() {
                    return Err(CliError::Validation(format!(
                        "output directory {} does not exist",
                        parent.display()
                    )));
                }
            }
            std::fs::write(p, text).map_err(|e| CliError::Validation(format!("cannot write {p}: {e}")))
        }
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(CliError::Validation(format!("cannot write to stdout: {e}")))
                }
                _ => Ok(()),
            }
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::default().filter_or("QFC_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn report_error(e: &CliError) -> i32 {
    eprintln!("{}", e.report());
    e.exit_code()
}

fn run_parsed(cli: Cli) -> Result<i32, CliError> {
    let tolerances = parse_tolerances(&cli.tolerances)?;
    let cfg = match cli.command {
        CliCommand::Replay => {
            let path = cli
                .input
                .as_deref()
                .ok_or_else(|| CliError::Validation("replay needs --input <artifact>".into()))?;
            let cfg = config_from_artifact(&read_file(path)?)?;
            if cli.format.is_some_and(|f| f != cfg.format) || !tolerances.is_empty() {
                return Err(CliError::Validation(
                    "replay takes format and tolerances from the artifact".into(),
                ));
            }
            cfg
        }
        other => {
            let command = match other {
                CliCommand::CausalOrder => Command::CausalOrder,
                CliCommand::Wavepacket => Command::Wavepacket,
                CliCommand::Falloff => Command::Falloff,
                CliCommand::Protocol => Command::Protocol,
                CliCommand::Detector => Command::Detector,
                CliCommand::Smearing => Command::Smearing,
                CliCommand::SpecfunProbe => Command::SpecfunProbe,
                CliCommand::Replay => unreachable!(),
            };
            let text = cli.input.as_deref().map(read_file).transpose()?;
            resolve(
                command,
                text.as_deref(),
                cli.format.unwrap_or_default(),
                cli.seed,
                cli.threads,
                tolerances,
            )?
        }
    };
    log::info!("running {:?} with {} thread(s)", cfg.subcommand, cfg.threads);
    let (text, out) = dispatch(&cfg)?;
    write_output(cli.output.as_deref(), &text)?;
    match out.failure {
        Some(msg) => Err(CliError::Numerical(msg)),
        None => Ok(EXIT_OK),
    }
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            return report_error(&CliError::Validation(e.to_string()));
        }
    };
    match run_parsed(cli) {
        Ok(code) => code,
        Err(e) => report_error(&e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(command: Command, format: Format) -> RunConfig {
        resolve(command, None, format, 3, 1, BTreeMap::new()).unwrap()
    }

    #[test]
    fn config_survives_both_artifact_formats() {
        for format in [Format::Csv, Format::Json] {
            let c = cfg(Command::CausalOrder, format);
            let (text, _) = dispatch(&c).unwrap();
            assert_eq!(config_from_artifact(&text).unwrap(), c);
        }
    }

    #[test]
    fn artifacts_without_config_are_rejected() {
        assert!(config_from_artifact("t,z\n1,2\n").is_err());
        assert!(config_from_artifact("{\"result\": 1}").is_err());
    }

    #[test]
    fn tampered_parameters_are_rejected() {
        let c = cfg(Command::Falloff, Format::Csv);
        let (text, _) = dispatch(&c).unwrap();
        let bad = text.replace("\"samples\":16", "\"samples\":2");
        assert!(config_from_artifact(&bad).is_err());
        let unknown = text.replace("\"seed\":3", "\"seed\":3,\"extra\":1");
        assert!(config_from_artifact(&unknown).is_err());
    }

    #[test]
    fn tolerance_parsing() {
        let ok = parse_tolerances(&["quad.rel_tol=1e-9".into()]).unwrap();
        assert_eq!(ok["quad.rel_tol"], 1e-9);
        assert!(parse_tolerances(&["quad.rel_tol".into()]).is_err());
        assert!(parse_tolerances(&["quad.rel_tol=abc".into()]).is_err());
        assert!(parse_tolerances(&["quad.rel_tol=-1".into()]).is_err());
    }

    #[test]
    fn error_report_shape() {
        let e = CliError::Numerical("budget".into());
        assert_eq!(e.exit_code(), EXIT_NUMERICAL);
        assert_eq!(e.report()["error"]["kind"], json!("numerical"));
        assert_eq!(CliError::Validation("x".into()).exit_code(), EXIT_VALIDATION);
    }
}
