//! Browser bindings for the sandbox miner demo page.
//!
//! Each export takes plain text (a trace or a profile) and returns a JSON
//! string for the page script to render.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sandbox_miner::fixtures::{self, RUNC_INIT_PROCESS};
use sandbox_miner::miner::{frequency_histogram, saturation_curve, CurvePoint};
use sandbox_miner::profile_codec::Architecture;
use sandbox_miner::trace_parser::parse_trace_str;
use sandbox_miner::{
    detect_convergence, extract_syscalls, generate_profile, parse_profile, replay,
    serialize_profile, Convergence, ParseMode, ParseOptions, ProcessFilter, SeccompAction,
    TraceLog,
};

#[derive(Serialize)]
struct MineResult<'a> {
    events: usize,
    problem: Option<String>,
    duration_ns: u64,
    names: Vec<(&'a str, u64)>,
    curve: &'a [CurvePoint],
    convergence: Convergence,
    histogram: Vec<(&'a str, u64)>,
}

#[derive(Serialize)]
struct SimulateResult {
    total_events: u64,
    allowed: u64,
    denied: u64,
    denied_names: Vec<String>,
    log: String,
}

fn filter(exclude_init: bool) -> ProcessFilter {
    if exclude_init {
        ProcessFilter::excluding([RUNC_INIT_PROCESS])
    } else {
        ProcessFilter::none()
    }
}

/// Parses leniently; the second value describes the first bad line, if any.
fn load(trace: &str) -> Result<(TraceLog, Option<String>), String> {
    let report = parse_trace_str(trace, ParseOptions::lenient()).map_err(|e| e.to_string())?;
    let problem = report
        .first_error
        .map(|e| format!("line {}: {}", e.line, e.description));
    Ok((report.log, problem))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("result types serialize")
}

/// Mines `trace` and returns names, saturation curve, convergence and
/// histogram as JSON.
pub fn mine(trace: &str, interval_ns: u64, quiet_window_ns: u64, exclude_init: bool) -> Result<String, String> {
    let (log, problem) = load(trace)?;
    let filter = filter(exclude_init);
    let mined = extract_syscalls(&log, &filter);
    let curve = saturation_curve(&log, interval_ns, &filter).map_err(|e| e.to_string())?;
    let convergence = detect_convergence(&curve, quiet_window_ns).map_err(|e| e.to_string())?;
    let histogram = frequency_histogram(&log, &filter);
    Ok(to_json(&MineResult {
        events: log.len(),
        problem,
        duration_ns: log.duration_ns(),
        names: mined.in_discovery_order(),
        curve: curve.points(),
        convergence,
        histogram: histogram.top(usize::MAX),
    }))
}

/// Mines `trace` and returns the Docker seccomp profile text.
pub fn profile(trace: &str, default_action: &str, exclude_init: bool) -> Result<String, String> {
    let (log, _) = load(trace)?;
    let action = default_action.parse::<SeccompAction>().map_err(|e| e.to_string())?;
    let mined = extract_syscalls(&log, &filter(exclude_init));
    let profile = generate_profile(&mined, action, Architecture::defaults()).map_err(|e| e.to_string())?;
    Ok(serialize_profile(&profile))
}

/// Replays `trace` against `profile` and returns the audit summary as JSON.
pub fn simulate_trace(profile: &str, trace: &str) -> Result<String, String> {
    let profile = parse_profile(profile.as_bytes(), ParseMode::Lenient).map_err(|e| e.to_string())?;
    let (log, _) = load(trace)?;
    let report = replay(&profile, &log, false);
    Ok(to_json(&SimulateResult {
        total_events: report.total_events,
        allowed: report.allowed,
        denied: report.denied,
        denied_names: report.denied_names.iter().cloned().collect(),
        log: report.human_summary(50),
    }))
}

#[wasm_bindgen]
pub fn mine_trace(trace: &str, interval_us: f64, quiet_window_us: f64, exclude_init: bool) -> Result<String, JsError> {
    let ns = |us: f64| (us.max(0.0) * 1000.0).round() as u64;
    mine(trace, ns(interval_us), ns(quiet_window_us), exclude_init).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn generate_profile_json(trace: &str, default_action: &str, exclude_init: bool) -> Result<String, JsError> {
    profile(trace, default_action, exclude_init).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn simulate(profile_json: &str, trace: &str) -> Result<String, JsError> {
    simulate_trace(profile_json, trace).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn hello_world_trace() -> String {
    fixtures::HELLO_WORLD_TRACE.to_owned()
}

#[wasm_bindgen]
pub fn docker_default_profile() -> String {
    fixtures::DOCKER_DEFAULT_PROFILE.to_owned()
}
