//! End-to-end mining: traces in, profile and reports out.
//!
//! [`run_pipeline`] writes these files into the output directory:
//!
//! | file            | contents                                          |
//! |-----------------|---------------------------------------------------|
//! | `mined.tsv`     | mined syscalls with first-seen timestamps         |
//! | `curve.tsv`     | saturation curve samples                          |
//! | `histogram.tsv` | per-syscall invocation counts                     |
//! | `profile.json`  | the generated seccomp profile                     |
//! | `audit.json`    | self-replay audit report                          |
//! | `diff.json`     | comparison against the baseline (when configured) |
//! | `snapshots.tsv` | mined-set size per capture snapshot (capture only)|
//! | `report.json`   | consolidated machine-readable report              |
//! | `summary.txt`   | human-readable summary                            |

pub mod capture;
pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

use crate::enforcer_sim::{replay, AuditReport};
use crate::fixtures;
use crate::miner::{
    detect_convergence, extract_syscalls, format_curve, format_histogram, format_mined_set,
    frequency_histogram, saturation_curve, Convergence, MinerError,
};
use crate::profile_codec::{
    diff_profiles, generate_profile, parse_profile, serialize_profile, ProfileDiff, ProfileError,
    SeccompProfile,
};
use crate::trace_model::{merge_logs, TraceLog};
use crate::trace_parser::{parse_trace, ParseError, ParseMode, ParseOptions};

pub use capture::{capture_adapter, CaptureError, CaptureSpec};
pub use config::{Baseline, PipelineConfig, TraceSource};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error("capture: {0}")]
    Capture(#[from] CaptureError),
    #[error(transparent)]
    Miner(#[from] MinerError),
    #[error("profile: {0}")]
    Profile(#[from] ProfileError),
    #[error("baseline {path}: {source}")]
    Baseline { path: String, source: ProfileError },
    /// Replaying the mined trace against its own profile denied something.
    /// This can only come from a bug and always aborts the run.
    #[error("self-replay denied {denied} event(s) ({names}); mined profile is inconsistent")]
    SelfReplayDenied { denied: u64, names: String },
}

/// How a successful run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineStatus {
    Success,
    /// The syscall set did not saturate within the trace.
    NotConverged,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub tool_version: &'static str,
    pub config: PipelineConfig,
    pub trace_sources: Vec<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct SnapshotGrowth {
    pub path: PathBuf,
    pub mined_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub status: PipelineStatus,
    pub mined_count: usize,
    pub converged: Convergence,
    pub profile_path: PathBuf,
    pub audit: AuditReport,
    pub diff: Option<ProfileDiff>,
    pub snapshots: Vec<SnapshotGrowth>,
    pub run_metadata: RunMetadata,
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    std::fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Parses one trace file, labelling it with the file stem unless the file
/// names its own source.
pub fn load_trace(path: &Path, mode: ParseMode) -> Result<TraceLog, PipelineError> {
    let file = std::fs::File::open(path).map_err(|source| PipelineError::Io {
        path: path.to_owned(),
        source,
    })?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let options = ParseOptions {
        mode,
        default_label: label,
        ..ParseOptions::default()
    };
    let report = parse_trace(std::io::BufReader::new(file), options).map_err(|source| PipelineError::Parse {
        path: path.to_owned(),
        source,
    })?;
    if let Some(err) = &report.first_error {
        log::warn!(
            "{}: skipped {} line(s); first problem on line {}: {}",
            path.display(),
            report.lines_skipped,
            err.line,
            err.description
        );
    }
    Ok(report.log)
}

fn load_baseline(baseline: &Baseline) -> Result<SeccompProfile, PipelineError> {
    let (label, bytes) = match baseline {
        Baseline::Builtin => (
            "builtin".to_owned(),
            fixtures::DOCKER_DEFAULT_PROFILE.as_bytes().to_vec(),
        ),
        Baseline::File(path) => (
            path.display().to_string(),
            std::fs::read(path).map_err(|source| PipelineError::Io {
                path: path.clone(),
                source,
            })?,
        ),
    };
    parse_profile(&bytes, ParseMode::Lenient).map_err(|source| PipelineError::Baseline { path: label, source })
}

/// Runs mining and enforcement checks end to end and writes every artifact
/// under `cfg.output_dir`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineReport, PipelineError> {
    let started_unix_ms = unix_ms();
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|source| PipelineError::Io {
        path: out.clone(),
        source,
    })?;

    let mut snapshots = Vec::new();
    let (log, trace_sources) = match &cfg.source {
        TraceSource::Files(paths) => {
            let mut merged: Option<TraceLog> = None;
            for path in paths {
                let log = load_trace(path, cfg.parse_mode)?;
                merged = Some(match merged {
                    None => log,
                    Some(acc) => merge_logs(&acc, &log),
                });
            }
            let sources = paths.iter().map(|p| p.display().to_string()).collect();
            (merged.unwrap_or_else(|| TraceLog::empty("")), sources)
        }
        TraceSource::Capture(spec) => {
            let paths = capture_adapter(spec, &out.join("snapshots"))?;
            let mut last = None;
            for path in &paths {
                let log = load_trace(path, cfg.parse_mode)?;
                snapshots.push(SnapshotGrowth {
                    path: path.clone(),
                    mined_count: extract_syscalls(&log, &cfg.filter).len(),
                });
                last = Some(log);
            }
            let log = last.expect("capture returns at least one snapshot");
            (log, paths.iter().map(|p| p.display().to_string()).collect())
        }
    };

    let mined = extract_syscalls(&log, &cfg.filter);
    let curve = saturation_curve(&log, cfg.interval_ns, &cfg.filter)?;
    let converged = detect_convergence(&curve, cfg.quiet_window_ns)?;
    let histogram = frequency_histogram(&log, &cfg.filter);
    write_file(&out.join("mined.tsv"), &format_mined_set(&mined))?;
    write_file(&out.join("curve.tsv"), &format_curve(&curve))?;
    write_file(&out.join("histogram.tsv"), &format_histogram(&histogram))?;
    if !snapshots.is_empty() {
        let mut table = String::from("# snapshot\tmined_count\n");
        for s in &snapshots {
            let _ = writeln!(table, "{}\t{}", s.path.display(), s.mined_count);
        }
        write_file(&out.join("snapshots.tsv"), &table)?;
    }

    let profile = generate_profile(&mined, cfg.default_action, cfg.architectures.clone())?;
    let profile_path = out.join("profile.json");
    write_file(&profile_path, &serialize_profile(&profile))?;

    let audit = replay(&profile, &cfg.filter.apply(&log), false);
    write_file(&out.join("audit.json"), &to_json(&audit))?;
    if !audit.is_clean() {
        let names: Vec<&str> = audit.denied_names.iter().map(String::as_str).collect();
        return Err(PipelineError::SelfReplayDenied {
            denied: audit.denied,
            names: names.join(", "),
        });
    }

    let diff = match &cfg.baseline {
        None => None,
        Some(baseline) => {
            let baseline = load_baseline(baseline)?;
            let diff = diff_profiles(&profile, &baseline)?;
            write_file(&out.join("diff.json"), &to_json(&diff))?;
            Some(diff)
        }
    };

    let status = if converged.is_converged() {
        PipelineStatus::Success
    } else {
        PipelineStatus::NotConverged
    };
    let report = PipelineReport {
        status,
        mined_count: mined.len(),
        converged,
        profile_path,
        audit,
        diff,
        snapshots,
        run_metadata: RunMetadata {
            tool_version: env!("CARGO_PKG_VERSION"),
            config: cfg.clone(),
            trace_sources,
            started_unix_ms,
            finished_unix_ms: unix_ms(),
        },
    };
    write_file(&out.join("report.json"), &to_json(&report))?;
    write_file(&out.join("summary.txt"), &summary(&report, &log, &histogram))?;
    Ok(report)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn seconds(ns: u64) -> String {
    format!("{:.3}s", ns as f64 / 1e9)
}

fn summary(report: &PipelineReport, log: &TraceLog, histogram: &crate::miner::FrequencyHistogram) -> String {
    let cfg = &report.run_metadata.config;
    let mut s = String::new();
    let _ = writeln!(s, "sandbox-miner {}", report.run_metadata.tool_version);
    let _ = writeln!(
        s,
        "trace: {} events over {}",
        log.len(),
        seconds(log.duration_ns())
    );
    let _ = writeln!(s, "mined syscalls: {}", report.mined_count);
    let _ = match report.converged {
        Convergence::Converged { at_ns } => writeln!(
            s,
            "saturation: converged at {} (quiet window {})",
            seconds(at_ns),
            seconds(cfg.quiet_window_ns)
        ),
        Convergence::NotConverged => writeln!(
            s,
            "saturation: NOT converged (quiet window {})",
            seconds(cfg.quiet_window_ns)
        ),
    };
    let _ = writeln!(
        s,
        "profile: {} (default {}, {} rules)",
        report.profile_path.display(),
        cfg.default_action,
        report.mined_count
    );
    let _ = writeln!(s, "self-replay: {} denials", report.audit.denied);
    if let Some(d) = &report.diff {
        let _ = writeln!(
            s,
            "baseline: {} allowed vs {} mined, {} common, reduction {:.1}%",
            d.allowed_b,
            d.allowed_a,
            d.common.len(),
            d.reduction_ratio * 100.0
        );
    }
    let top = histogram.top(10);
    if !top.is_empty() {
        let _ = writeln!(s, "most frequent:");
        for (name, count) in top {
            let _ = writeln!(s, "  {name:<24}{count}");
        }
    }
    s
}
