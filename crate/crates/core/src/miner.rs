//! Extraction of the accessed-syscall set and its growth over time.
//!
//! Only `Enter` records count: a call that was invoked but blocked or never
//! returned still reveals that the container needs it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::trace_model::{SyscallEvent, TraceLog};
use crate::trace_parser::normalize_name;

/// Default snapshot interval: 5 s.
pub const DEFAULT_INTERVAL_NS: u64 = 5_000_000_000;
/// Default quiet window for convergence: 60 s.
pub const DEFAULT_QUIET_WINDOW_NS: u64 = 60_000_000_000;
/// Upper bound on the number of samples in one curve.
pub const MAX_CURVE_POINTS: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MinerError {
    #[error("sampling interval must be positive")]
    ZeroInterval,
    #[error("quiet window {window_ns} ns is shorter than the sampling interval {interval_ns} ns")]
    QuietWindowTooShort { window_ns: u64, interval_ns: u64 },
    #[error("curve would need {0} samples; use a coarser interval")]
    TooManyPoints(u64),
    #[error("invalid curve: {0}")]
    InvalidCurve(&'static str),
    #[error("mined set line {line}: {description}")]
    BadMinedSetLine { line: usize, description: String },
}

/// Which processes' events take part in mining.
///
/// An empty include list admits every process; the exclude list always wins.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ProcessFilter {
    pub include: BTreeSet<String>,
    pub exclude: BTreeSet<String>,
}

impl ProcessFilter {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn excluding<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ProcessFilter {
            include: BTreeSet::new(),
            exclude: names.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.include.is_empty() && self.exclude.is_empty()
    }

    pub fn accepts(&self, process_name: &str) -> bool {
        (self.include.is_empty() || self.include.contains(process_name))
            && !self.exclude.contains(process_name)
    }

    pub fn accepts_event(&self, event: &SyscallEvent) -> bool {
        self.accepts(&event.process_name)
    }

    /// The log restricted to events this filter admits.
    pub fn apply(&self, log: &TraceLog) -> TraceLog {
        if self.is_empty() {
            return log.clone();
        }
        log.retain(|e| self.accepts_event(e))
    }

    fn describe(&self) -> String {
        let mut out = String::new();
        for p in &self.include {
            let _ = write!(out, " include={p}");
        }
        for p in &self.exclude {
            let _ = write!(out, " exclude={p}");
        }
        out.trim_start().to_owned()
    }
}

/// The set of syscalls a trace exercised, with the time each first appeared.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MinedSet {
    first_seen: BTreeMap<String, u64>,
    filter_applied: Option<ProcessFilter>,
}

impl MinedSet {
    pub fn from_first_seen(first_seen: BTreeMap<String, u64>) -> Self {
        MinedSet {
            first_seen,
            filter_applied: None,
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        self.first_seen.keys().map(String::as_str)
    }

    pub fn name_set(&self) -> BTreeSet<String> {
        self.first_seen.keys().cloned().collect()
    }

    pub fn first_seen(&self) -> &BTreeMap<String, u64> {
        &self.first_seen
    }

    pub fn filter_applied(&self) -> Option<&ProcessFilter> {
        self.filter_applied.as_ref()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.first_seen.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.first_seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_seen.is_empty()
    }

    /// Names in order of first appearance, ties broken by name.
    pub fn in_discovery_order(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.first_seen.iter().map(|(n, t)| (n.as_str(), *t)).collect();
        v.sort_by_key(|&(n, t)| (t, n));
        v
    }
}

/// Collects the distinct syscalls of all `Enter` events the filter admits.
pub fn extract_syscalls(log: &TraceLog, filter: &ProcessFilter) -> MinedSet {
    let mut seen: HashMap<&str, u64> = HashMap::new();
    for event in log.enter_events() {
        if !filter.accepts_event(event) {
            continue;
        }
        // Events are sorted, so the first hit is the earliest.
        seen.entry(&*event.syscall_name).or_insert(event.timestamp_ns);
    }
    MinedSet {
        first_seen: seen.into_iter().map(|(n, t)| (n.to_owned(), t)).collect(),
        filter_applied: (!filter.is_empty()).then(|| filter.clone()),
    }
}

/// One sample of a saturation curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CurvePoint {
    pub t_ns: u64,
    pub count: usize,
}

/// Cumulative distinct-syscall counts sampled at a fixed interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SaturationCurve {
    interval_ns: u64,
    /// How far the underlying trace extends.
    extent_ns: u64,
    points: Vec<CurvePoint>,
}

impl SaturationCurve {
    /// Builds a curve from explicit samples, checking its shape.
    pub fn from_points(
        interval_ns: u64,
        extent_ns: u64,
        points: Vec<CurvePoint>,
    ) -> Result<Self, MinerError> {
        if interval_ns == 0 {
            return Err(MinerError::ZeroInterval);
        }
        if points.windows(2).any(|w| w[1].t_ns <= w[0].t_ns) {
            return Err(MinerError::InvalidCurve("sample times must increase"));
        }
        if points.windows(2).any(|w| w[1].count < w[0].count) {
            return Err(MinerError::InvalidCurve("counts must not decrease"));
        }
        Ok(SaturationCurve {
            interval_ns,
            extent_ns,
            points,
        })
    }

    pub fn interval_ns(&self) -> u64 {
        self.interval_ns
    }

    pub fn extent_ns(&self) -> u64 {
        self.extent_ns
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn final_count(&self) -> usize {
        self.points.last().map_or(0, |p| p.count)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Samples the number of distinct syscalls seen by `k * interval_ns` for
/// every `k` up to the first multiple that covers the trace duration.
///
/// A trace that yields no syscalls produces an empty curve.
pub fn saturation_curve(
    log: &TraceLog,
    interval_ns: u64,
    filter: &ProcessFilter,
) -> Result<SaturationCurve, MinerError> {
    if interval_ns == 0 {
        return Err(MinerError::ZeroInterval);
    }
    let mined = extract_syscalls(log, filter);
    let extent_ns = log.duration_ns();
    if mined.is_empty() {
        return Ok(SaturationCurve {
            interval_ns,
            extent_ns,
            points: Vec::new(),
        });
    }
    let samples = extent_ns.div_ceil(interval_ns).max(1);
    if samples > MAX_CURVE_POINTS {
        return Err(MinerError::TooManyPoints(samples));
    }
    let mut firsts: Vec<u64> = mined.first_seen.values().copied().collect();
    firsts.sort_unstable();

    let mut points = Vec::with_capacity(samples as usize);
    let mut seen = 0usize;
    for k in 1..=samples {
        let t_ns = k * interval_ns;
        while seen < firsts.len() && firsts[seen] <= t_ns {
            seen += 1;
        }
        points.push(CurvePoint { t_ns, count: seen });
    }
    Ok(SaturationCurve {
        interval_ns,
        extent_ns,
        points,
    })
}

/// Outcome of saturation detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Convergence {
    Converged { at_ns: u64 },
    NotConverged,
}

impl Convergence {
    pub fn is_converged(&self) -> bool {
        matches!(self, Convergence::Converged { .. })
    }
}

/// Finds the earliest sample `t` after which no new syscall shows up for a
/// full `quiet_window_ns`, with the trace extending past `t + quiet_window_ns`.
///
/// Samples with a zero count never qualify: an empty set is not a sandbox.
pub fn detect_convergence(
    curve: &SaturationCurve,
    quiet_window_ns: u64,
) -> Result<Convergence, MinerError> {
    if quiet_window_ns < curve.interval_ns {
        return Err(MinerError::QuietWindowTooShort {
            window_ns: quiet_window_ns,
            interval_ns: curve.interval_ns,
        });
    }
    let points = &curve.points;
    // `end` is one past the last sample inside (t, t + window].
    let mut end = 0;
    for (i, p) in points.iter().enumerate() {
        let horizon = match p.t_ns.checked_add(quiet_window_ns) {
            Some(h) if h <= curve.extent_ns => h,
            // Later samples only push the horizon further out.
            _ => break,
        };
        end = end.max(i + 1);
        while end < points.len() && points[end].t_ns <= horizon {
            end += 1;
        }
        if p.count > 0 && points[end - 1].count == p.count {
            return Ok(Convergence::Converged { at_ns: p.t_ns });
        }
    }
    Ok(Convergence::NotConverged)
}

/// Per-syscall `Enter` counts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(transparent)]
pub struct FrequencyHistogram {
    counts: BTreeMap<String, u64>,
}

impl FrequencyHistogram {
    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn get(&self, name: &str) -> u64 {
        self.counts.get(name).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// The `n` most frequent syscalls, most frequent first.
    pub fn top(&self, n: usize) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.counts.iter().map(|(k, c)| (k.as_str(), *c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v.truncate(n);
        v
    }
}

pub fn frequency_histogram(log: &TraceLog, filter: &ProcessFilter) -> FrequencyHistogram {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for event in log.enter_events().filter(|e| filter.accepts_event(e)) {
        *counts.entry(&*event.syscall_name).or_default() += 1;
    }
    FrequencyHistogram {
        counts: counts.into_iter().map(|(n, c)| (n.to_owned(), c)).collect(),
    }
}

// Report file formats. All are tab-separated text with `#` comments.

/// `name<TAB>first_seen_ns` per line, sorted by name.
pub fn format_mined_set(set: &MinedSet) -> String {
    let mut out = String::from("# name\tfirst_seen_ns\n");
    if let Some(filter) = &set.filter_applied {
        let _ = writeln!(out, "# filter: {}", filter.describe());
    }
    for (name, t) in &set.first_seen {
        let _ = writeln!(out, "{name}\t{t}");
    }
    out
}

/// Reads a mined-set file. The first field of each line is a syscall name,
/// decorated forms like `openat()` included; the optional second field is the
/// first-seen timestamp (0 when absent).
pub fn parse_mined_set(text: &str) -> Result<MinedSet, MinerError> {
    let mut first_seen = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |description: String| MinerError::BadMinedSetLine {
            line: idx + 1,
            description,
        };
        let mut fields = line.split('\t');
        let name = normalize_name(fields.next().unwrap_or_default()).map_err(|e| bad(e.to_string()))?;
        let t = match fields.next().map(str::trim) {
            None | Some("") => 0,
            Some(raw) => raw
                .parse::<u64>()
                .map_err(|_| bad(format!("bad timestamp {raw:?}")))?,
        };
        let slot = first_seen.entry(name).or_insert(t);
        *slot = (*slot).min(t);
    }
    Ok(MinedSet::from_first_seen(first_seen))
}

/// `t_ns<TAB>count` per sample, preceded by interval and extent comments.
pub fn format_curve(curve: &SaturationCurve) -> String {
    let mut out = format!(
        "# interval_ns: {}\n# extent_ns: {}\n# t_ns\tcount\n",
        curve.interval_ns, curve.extent_ns
    );
    for p in &curve.points {
        let _ = writeln!(out, "{}\t{}", p.t_ns, p.count);
    }
    out
}

/// `name<TAB>count` per line, most frequent first.
pub fn format_histogram(hist: &FrequencyHistogram) -> String {
    let mut out = String::from("# name\tcount\n");
    for (name, count) in hist.top(usize::MAX) {
        let _ = writeln!(out, "{name}\t{count}");
    }
    out
}
