use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use sandbox_miner::miner::{
    detect_convergence, extract_syscalls, format_curve, format_histogram, format_mined_set,
    frequency_histogram, parse_mined_set, saturation_curve, Convergence, ProcessFilter,
};
use sandbox_miner::pipeline::config::{DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV};
use sandbox_miner::pipeline::{load_trace, run_pipeline, PipelineConfig, PipelineError, PipelineStatus};
use sandbox_miner::profile_codec::{
    diff_profiles, generate_profile, parse_profile, serialize_profile, Architecture, SeccompAction,
};
use sandbox_miner::trace_parser::{parse_trace, ParseMode, ParseOptions, DEFAULT_REORDER_WINDOW_NS};
use sandbox_miner::replay;

const EXIT_WARNING: u8 = 2;
const EXIT_ERROR: u8 = 3;
const EXIT_INCONSISTENT: u8 = 4;

/// Mine seccomp sandboxes for containers from syscall traces.
///
/// Exit status: 0 success, 2 finished with warnings (syscall set did not
/// converge), 3 error, 4 mined profile failed its own self-replay.
#[derive(Parser)]
#[command(name = "sandbox-miner", version)]
struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a trace file and print a JSON summary.
    Parse {
        file: PathBuf,
        /// Fail on the first malformed line instead of skipping it.
        #[arg(long)]
        strict: bool,
        /// Out-of-order tolerance, e.g. "1ms".
        #[arg(long, value_parser = humantime::parse_duration)]
        reorder_window: Option<Duration>,
    },
    /// Mine the syscall set, saturation curve and histogram from a trace.
    Mine {
        trace: PathBuf,
        /// Saturation sampling interval.
        #[arg(long, default_value = "5s", value_parser = humantime::parse_duration)]
        interval: Duration,
        /// No new syscall for this long counts as converged.
        #[arg(long, default_value = "60s", value_parser = humantime::parse_duration)]
        quiet_window: Duration,
        /// Ignore events from this process (repeatable).
        #[arg(long = "exclude-process", value_name = "NAME")]
        exclude: Vec<String>,
        /// Only mine events from this process (repeatable).
        #[arg(long = "include-process", value_name = "NAME")]
        include: Vec<String>,
        #[arg(long)]
        strict: bool,
        /// Directory for mined.tsv, curve.tsv and histogram.tsv.
        #[arg(short, long)]
        output_dir: Option<PathBuf>,
    },
    /// Generate a seccomp profile from a mined-set file.
    Profile {
        mined_set: PathBuf,
        #[arg(long, default_value = "errno")]
        default_action: SeccompAction,
        /// Architecture token (repeatable); defaults to x86_64, x86 and x32.
        #[arg(long = "arch", value_name = "SCMP_ARCH_*")]
        architectures: Vec<String>,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare the allow-lists of two profiles.
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Replay a trace against a profile and report what would be denied.
    Simulate {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// A killed thread's later events are skipped.
        #[arg(long)]
        stop_on_kill: bool,
        /// Where to write the JSON audit report; defaults to audit.json in
        /// the output directory.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the whole pipeline from a TOML config file.
    Run {
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(short, long)]
        output_dir: Option<PathBuf>,
    },
}

fn default_output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

fn nanos(d: Duration) -> Result<u64> {
    u64::try_from(d.as_nanos()).context("duration too large")
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

#[derive(Serialize)]
struct ParseSummary<'a> {
    source: &'a str,
    lines_read: usize,
    lines_skipped: usize,
    events: usize,
    enter_events: usize,
    distinct_syscalls: usize,
    duration_ns: u64,
    first_error: Option<LineErrorJson<'a>>,
}

#[derive(Serialize)]
struct LineErrorJson<'a> {
    line: usize,
    description: &'a str,
}

fn cmd_parse(file: &Path, strict: bool, reorder_window: Option<Duration>) -> Result<u8> {
    let f = std::fs::File::open(file).with_context(|| format!("opening {}", file.display()))?;
    let options = ParseOptions {
        mode: if strict { ParseMode::Strict } else { ParseMode::Lenient },
        reorder_window_ns: reorder_window.map(nanos).transpose()?.unwrap_or(DEFAULT_REORDER_WINDOW_NS),
        default_label: file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let report = parse_trace(BufReader::new(f), options).with_context(|| format!("parsing {}", file.display()))?;
    let log = &report.log;
    let summary = ParseSummary {
        source: log.source_label(),
        lines_read: report.lines_read,
        lines_skipped: report.lines_skipped,
        events: log.len(),
        enter_events: log.enter_events().count(),
        distinct_syscalls: extract_syscalls(log, &ProcessFilter::none()).len(),
        duration_ns: log.duration_ns(),
        first_error: report.first_error.as_ref().map(|e| LineErrorJson {
            line: e.line,
            description: &e.description,
        }),
    };
    print!("{}", json(&summary));
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_mine(
    trace: &Path,
    interval: Duration,
    quiet_window: Duration,
    exclude: Vec<String>,
    include: Vec<String>,
    strict: bool,
    output_dir: Option<PathBuf>,
) -> Result<u8> {
    let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
    let log = load_trace(trace, mode)?;
    let filter = ProcessFilter {
        include: include.into_iter().collect(),
        exclude: exclude.into_iter().collect(),
    };
    let mined = extract_syscalls(&log, &filter);
    let curve = saturation_curve(&log, nanos(interval)?, &filter)?;
    let converged = detect_convergence(&curve, nanos(quiet_window)?)?;
    let histogram = frequency_histogram(&log, &filter);

    let out = output_dir.unwrap_or_else(default_output_dir);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write(&out.join("mined.tsv"), &format_mined_set(&mined))?;
    write(&out.join("curve.tsv"), &format_curve(&curve))?;
    write(&out.join("histogram.tsv"), &format_histogram(&histogram))?;

    println!("mined {} syscalls from {} events", mined.len(), log.len());
    match converged {
        Convergence::Converged { at_ns } => {
            println!("converged at {:.3}s", at_ns as f64 / 1e9);
            Ok(0)
        }
        Convergence::NotConverged => {
            println!("not converged");
            Ok(EXIT_WARNING)
        }
    }
}

fn cmd_profile(
    mined_set: &Path,
    default_action: SeccompAction,
    architectures: Vec<String>,
    output: Option<PathBuf>,
) -> Result<u8> {
    let text = String::from_utf8(read(mined_set)?).context("mined set is not UTF-8")?;
    let mined = parse_mined_set(&text)?;
    let archs = if architectures.is_empty() {
        Architecture::defaults()
    } else {
        architectures
            .into_iter()
            .map(Architecture::new)
            .collect::<Result<Vec<_>, _>>()?
    };
    let profile = generate_profile(&mined, default_action, archs)?;
    let text = serialize_profile(&profile);
    match output {
        Some(path) => write(&path, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_diff(a: &Path, b: &Path, strict: bool) -> Result<u8> {
    let mode = if strict { ParseMode::Strict } else { ParseMode::Lenient };
    let pa = parse_profile(&read(a)?, mode).with_context(|| format!("parsing {}", a.display()))?;
    let pb = parse_profile(&read(b)?, mode).with_context(|| format!("parsing {}", b.display()))?;
    print!("{}", json(&diff_profiles(&pa, &pb)?));
    Ok(0)
}

fn cmd_simulate(profile: &Path, trace: &Path, stop_on_kill: bool, output: Option<PathBuf>) -> Result<u8> {
    let profile = parse_profile(&read(profile)?, ParseMode::Lenient)
        .with_context(|| format!("parsing {}", profile.display()))?;
    let log = load_trace(trace, ParseMode::Lenient)?;
    let report = replay(&profile, &log, stop_on_kill);
    let path = match output {
        Some(p) => p,
        None => {
            let dir = default_output_dir();
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            dir.join("audit.json")
        }
    };
    write(&path, &json(&report))?;
    print!("{}", report.human_summary(20));
    Ok(0)
}

fn cmd_run(config: &Path, output_dir: Option<PathBuf>) -> Result<u8> {
    let fallback = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
    let mut cfg = PipelineConfig::load(config, fallback)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    match run_pipeline(&cfg) {
        Ok(report) => {
            let summary = std::fs::read_to_string(cfg.output_dir.join("summary.txt")).unwrap_or_default();
            print!("{summary}");
            Ok(match report.status {
                PipelineStatus::Success => 0,
                PipelineStatus::NotConverged => EXIT_WARNING,
            })
        }
        Err(e @ PipelineError::SelfReplayDenied { .. }) => {
            eprintln!("error: {e}");
            Ok(EXIT_INCONSISTENT)
        }
        Err(e) => Err(e.into()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Cmd::Parse {
            file,
            strict,
            reorder_window,
        } => cmd_parse(&file, strict, reorder_window),
        Cmd::Mine {
            trace,
            interval,
            quiet_window,
            exclude,
            include,
            strict,
            output_dir,
        } => cmd_mine(&trace, interval, quiet_window, exclude, include, strict, output_dir),
        Cmd::Profile {
            mined_set,
            default_action,
            architectures,
            output,
        } => cmd_profile(&mined_set, default_action, architectures, output),
        Cmd::Diff { a, b, strict } => cmd_diff(&a, &b, strict),
        Cmd::Simulate {
            profile,
            trace,
            stop_on_kill,
            output,
        } => cmd_simulate(&profile, &trace, stop_on_kill, output),
        Cmd::Run { config, output_dir } => cmd_run(&config, output_dir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
