//! Pipeline configuration and its TOML file format.
//!
//! ```toml
//! # Either a list of trace files ...
//! traces = ["hello-world.trace"]
//! interval = "5s"              # saturation sampling interval
//! quiet_window = "60s"         # convergence window
//! default_action = "errno"     # errno | kill | trace
//! architectures = ["SCMP_ARCH_X86_64", "SCMP_ARCH_X86", "SCMP_ARCH_X32"]
//! baseline = "builtin"         # or a path to a profile JSON file
//! output_dir = "out"
//! exclude_process = ["runc:[2:INIT]"]
//! include_process = []
//! strict = false               # strict trace parsing
//!
//! # ... or a capture command (exactly one of the two).
//! [capture]
//! command = "my-tracer --output {output}"
//! duration = "15s"
//! snapshot_interval = "5s"
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::capture::CaptureSpec;
use super::PipelineError;
use crate::miner::{ProcessFilter, DEFAULT_INTERVAL_NS, DEFAULT_QUIET_WINDOW_NS};
use crate::profile_codec::{Architecture, SeccompAction};
use crate::trace_parser::ParseMode;

/// Environment variable naming the output directory when neither the command
/// line nor the config file does.
pub const OUTPUT_DIR_ENV: &str = "SANDBOX_MINER_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "sandbox-miner-out";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    Files(Vec<PathBuf>),
    Capture(CaptureSpec),
}

/// Where the baseline profile for attack-surface comparison comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// The bundled Docker default profile.
    Builtin,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PipelineConfig {
    pub source: TraceSource,
    pub interval_ns: u64,
    pub quiet_window_ns: u64,
    #[serde(serialize_with = "action_wire")]
    pub default_action: SeccompAction,
    pub architectures: Vec<Architecture>,
    pub baseline: Option<Baseline>,
    pub output_dir: PathBuf,
    pub filter: ProcessFilter,
    #[serde(serialize_with = "mode_name")]
    pub parse_mode: ParseMode,
}

fn action_wire<S: serde::Serializer>(a: &SeccompAction, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(a.wire_name())
}

fn mode_name<S: serde::Serializer>(m: &ParseMode, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(match m {
        ParseMode::Strict => "strict",
        ParseMode::Lenient => "lenient",
    })
}

impl PipelineConfig {
    /// A config over trace files with every other knob at its default.
    pub fn for_traces(traces: Vec<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            source: TraceSource::Files(traces),
            interval_ns: DEFAULT_INTERVAL_NS,
            quiet_window_ns: DEFAULT_QUIET_WINDOW_NS,
            default_action: SeccompAction::Errno,
            architectures: Architecture::defaults(),
            baseline: None,
            output_dir: output_dir.into(),
            filter: ProcessFilter::none(),
            parse_mode: ParseMode::Lenient,
        }
    }

    /// Reads a config file. `fallback_output_dir` applies when the file has
    /// no `output_dir`.
    pub fn load(path: &Path, fallback_output_dir: Option<PathBuf>) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, fallback_output_dir)
    }

    pub fn from_toml(
        text: &str,
        base_dir: &Path,
        fallback_output_dir: Option<PathBuf>,
    ) -> Result<Self, PipelineError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };

        let source = match (file.traces, file.capture) {
            (Some(_), Some(_)) => {
                return Err(PipelineError::Config(
                    "`traces` and `[capture]` are mutually exclusive".into(),
                ))
            }
            (None, None) => {
                return Err(PipelineError::Config(
                    "one of `traces` or `[capture]` is required".into(),
                ))
            }
            (Some(traces), None) => TraceSource::Files(traces.into_iter().map(resolve).collect()),
            (None, Some(c)) => TraceSource::Capture(CaptureSpec {
                command: c.command,
                duration: duration(&c.duration, "capture.duration")?,
                snapshot_interval: match &c.snapshot_interval {
                    Some(raw) => duration(raw, "capture.snapshot_interval")?,
                    None => Duration::from_nanos(DEFAULT_INTERVAL_NS),
                },
            }),
        };

        let nanos = |raw: &Option<String>, key: &str, default: u64| -> Result<u64, PipelineError> {
            match raw {
                None => Ok(default),
                Some(raw) => {
                    let d = duration(raw, key)?;
                    u64::try_from(d.as_nanos())
                        .map_err(|_| PipelineError::Config(format!("{key} is too large")))
                }
            }
        };
        let interval_ns = nanos(&file.interval, "interval", DEFAULT_INTERVAL_NS)?;
        let quiet_window_ns = nanos(&file.quiet_window, "quiet_window", DEFAULT_QUIET_WINDOW_NS)?;

        let default_action = match file.default_action.as_deref() {
            None => SeccompAction::Errno,
            Some(raw) => raw
                .parse::<SeccompAction>()
                .map_err(|e| PipelineError::Config(e.to_string()))?,
        };
        let architectures = match file.architectures {
            None => Architecture::defaults(),
            Some(list) => list
                .into_iter()
                .map(Architecture::new)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| PipelineError::Config(e.to_string()))?,
        };
        let baseline = file.baseline.map(|b| {
            if b == "builtin" {
                Baseline::Builtin
            } else {
                Baseline::File(resolve(PathBuf::from(b)))
            }
        });
        let output_dir = match file.output_dir {
            Some(dir) => resolve(dir),
            None => fallback_output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        };
        let filter = ProcessFilter {
            include: file.include_process.into_iter().collect(),
            exclude: file.exclude_process.into_iter().collect(),
        };

        Ok(PipelineConfig {
            source,
            interval_ns,
            quiet_window_ns,
            default_action,
            architectures,
            baseline,
            output_dir,
            filter,
            parse_mode: if file.strict {
                ParseMode::Strict
            } else {
                ParseMode::Lenient
            },
        })
    }
}

fn duration(raw: &str, key: &str) -> Result<Duration, PipelineError> {
    humantime::parse_duration(raw).map_err(|e| PipelineError::Config(format!("{key}: {e}")))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    traces: Option<Vec<PathBuf>>,
    capture: Option<CaptureFile>,
    interval: Option<String>,
    quiet_window: Option<String>,
    default_action: Option<String>,
    architectures: Option<Vec<String>>,
    baseline: Option<String>,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    exclude_process: Vec<String>,
    #[serde(default)]
    include_process: Vec<String>,
    #[serde(default)]
    strict: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaptureFile {
    command: String,
    duration: String,
    snapshot_interval: Option<String>,
}
