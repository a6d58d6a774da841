//! Syscall trace records and the canonical line-oriented trace format.
//!
//! A trace file holds one event per line. Fields are separated by a single
//! tab character:
//!
//! ```text
//! ts_ns <TAB> process <TAB> tid <TAB> enter|exit <TAB> syscall [<TAB> payload]...
//! ```
//!
//! For `enter` records the trailing fields are the argument strings (zero or
//! more). An `exit` record carries exactly one trailing field, the return
//! value. Inside text fields a backslash escapes `\t`, `\n`, `\r` and `\\`.
//!
//! Lines starting with `#` are comments. Two comment forms carry metadata and
//! are written by [`write_trace`]:
//!
//! ```text
//! # source: <label>
//! # duration_ns: <integer>
//! ```

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use thiserror::Error;

/// Whether a record was logged on syscall entry or on return.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Enter,
    Exit,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Enter => "enter",
            Direction::Exit => "exit",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One enter or exit record of a traced system call.
///
/// Names are reference counted so that large traces share one allocation per
/// distinct process and syscall name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyscallEvent {
    /// Nanoseconds since trace start.
    pub timestamp_ns: u64,
    pub process_name: Arc<str>,
    pub thread_id: u32,
    pub syscall_name: Arc<str>,
    pub direction: Direction,
    /// Argument strings for `Enter`, a single return value for `Exit`.
    pub payload: Vec<String>,
}

impl SyscallEvent {
    pub fn enter(
        timestamp_ns: u64,
        process_name: impl Into<Arc<str>>,
        thread_id: u32,
        syscall_name: impl Into<Arc<str>>,
        args: Vec<String>,
    ) -> Self {
        SyscallEvent {
            timestamp_ns,
            process_name: process_name.into(),
            thread_id,
            syscall_name: syscall_name.into(),
            direction: Direction::Enter,
            payload: args,
        }
    }

    pub fn exit(
        timestamp_ns: u64,
        process_name: impl Into<Arc<str>>,
        thread_id: u32,
        syscall_name: impl Into<Arc<str>>,
        return_value: impl Into<String>,
    ) -> Self {
        SyscallEvent {
            timestamp_ns,
            process_name: process_name.into(),
            thread_id,
            syscall_name: syscall_name.into(),
            direction: Direction::Exit,
            payload: vec![return_value.into()],
        }
    }

    pub fn is_enter(&self) -> bool {
        self.direction == Direction::Enter
    }
}

/// The first invariant an event breaks.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventViolation {
    #[error("empty process name")]
    EmptyProcessName,
    #[error("thread id must be positive")]
    ZeroThreadId,
    #[error("empty syscall name")]
    EmptySyscallName,
    #[error("non-canonical name")]
    NonCanonicalName,
    #[error("exit payload arity")]
    ExitPayloadArity,
}

/// True when `name` is non-empty and made only of `[a-z0-9_]`.
pub fn is_canonical_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

/// Checks every event invariant, reporting the first one violated.
pub fn validate_event(event: &SyscallEvent) -> Result<(), EventViolation> {
    if event.process_name.is_empty() {
        return Err(EventViolation::EmptyProcessName);
    }
    if event.thread_id == 0 {
        return Err(EventViolation::ZeroThreadId);
    }
    if event.syscall_name.is_empty() {
        return Err(EventViolation::EmptySyscallName);
    }
    if !is_canonical_name(&event.syscall_name) {
        return Err(EventViolation::NonCanonicalName);
    }
    if event.direction == Direction::Exit && event.payload.len() != 1 {
        return Err(EventViolation::ExitPayloadArity);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("event {index}: {violation}")]
    InvalidEvent {
        index: usize,
        violation: EventViolation,
    },
    #[error("duration {duration_ns} ns is shorter than the last event at {last_ns} ns")]
    DurationTooShort { duration_ns: u64, last_ns: u64 },
}

/// An ordered, validated sequence of syscall events.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraceLog {
    events: Vec<SyscallEvent>,
    source_label: String,
    duration_ns: u64,
}

impl TraceLog {
    /// Validates every event and stably sorts them by timestamp.
    pub fn new(
        source_label: impl Into<String>,
        mut events: Vec<SyscallEvent>,
        duration_ns: u64,
    ) -> Result<Self, TraceError> {
        for (index, event) in events.iter().enumerate() {
            validate_event(event).map_err(|violation| TraceError::InvalidEvent { index, violation })?;
        }
        if !events.is_sorted_by_key(|e| e.timestamp_ns) {
            events.sort_by_key(|e| e.timestamp_ns);
        }
        let last_ns = events.last().map_or(0, |e| e.timestamp_ns);
        if duration_ns < last_ns {
            return Err(TraceError::DurationTooShort {
                duration_ns,
                last_ns,
            });
        }
        Ok(TraceLog {
            events,
            source_label: source_label.into(),
            duration_ns,
        })
    }

    /// Like [`TraceLog::new`] with the duration set to the last timestamp.
    pub fn from_events(
        source_label: impl Into<String>,
        events: Vec<SyscallEvent>,
    ) -> Result<Self, TraceError> {
        let last = events.iter().map(|e| e.timestamp_ns).max().unwrap_or(0);
        Self::new(source_label, events, last)
    }

    pub fn empty(source_label: impl Into<String>) -> Self {
        TraceLog {
            events: Vec::new(),
            source_label: source_label.into(),
            duration_ns: 0,
        }
    }

    pub fn events(&self) -> &[SyscallEvent] {
        &self.events
    }

    pub fn enter_events(&self) -> impl Iterator<Item = &SyscallEvent> {
        self.events.iter().filter(|e| e.is_enter())
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    pub fn duration_ns(&self) -> u64 {
        self.duration_ns
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<SyscallEvent> {
        self.events
    }

    /// Keeps only events matching `keep`; the duration is unchanged.
    pub fn retain(&self, mut keep: impl FnMut(&SyscallEvent) -> bool) -> TraceLog {
        TraceLog {
            events: self.events.iter().filter(|e| keep(e)).cloned().collect(),
            source_label: self.source_label.clone(),
            duration_ns: self.duration_ns,
        }
    }
}

/// Merges two sorted logs into one.
///
/// Events with equal timestamps keep their relative order, `a`'s first. The
/// result carries `a`'s label and the longer of the two durations.
pub fn merge_logs(a: &TraceLog, b: &TraceLog) -> TraceLog {
    let mut events = Vec::with_capacity(a.len() + b.len());
    let (mut left, mut right) = (a.events.iter().peekable(), b.events.iter().peekable());
    loop {
        let next = match (left.peek(), right.peek()) {
            (Some(l), Some(r)) if r.timestamp_ns < l.timestamp_ns => right.next(),
            (Some(_), _) => left.next(),
            (None, Some(_)) => right.next(),
            (None, None) => break,
        };
        events.extend(next.cloned());
    }
    TraceLog {
        events,
        source_label: a.source_label.clone(),
        duration_ns: a.duration_ns.max(b.duration_ns),
    }
}

pub(crate) fn escape_field(raw: &str, out: &mut String) {
    for c in raw.chars() {
        match c {
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\\' => out.push_str("\\\\"),
            c => out.push(c),
        }
    }
}

/// Reverses [`escape_field`]. Returns `None` on a dangling or unknown escape.
pub(crate) fn unescape_field(raw: &str) -> Option<String> {
    if !raw.contains('\\') {
        return Some(raw.to_owned());
    }
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            '\\' => '\\',
            _ => return None,
        });
    }
    Some(out)
}

/// Formats one event as a canonical trace line, without the newline.
pub fn format_event(event: &SyscallEvent) -> String {
    let mut line = String::with_capacity(48);
    line.push_str(&event.timestamp_ns.to_string());
    line.push('\t');
    escape_field(&event.process_name, &mut line);
    line.push('\t');
    line.push_str(&event.thread_id.to_string());
    line.push('\t');
    line.push_str(event.direction.as_str());
    line.push('\t');
    line.push_str(&event.syscall_name);
    for field in &event.payload {
        line.push('\t');
        escape_field(field, &mut line);
    }
    line
}

/// Writes `log` in the canonical trace format, metadata header included.
pub fn write_trace<W: Write>(log: &TraceLog, mut out: W) -> io::Result<()> {
    let mut label = String::new();
    escape_field(&log.source_label, &mut label);
    writeln!(out, "# source: {label}")?;
    writeln!(out, "# duration_ns: {}", log.duration_ns)?;
    for event in &log.events {
        writeln!(out, "{}", format_event(event))?;
    }
    out.flush()
}

pub fn trace_to_string(log: &TraceLog) -> String {
    let mut buf = Vec::new();
    write_trace(log, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("trace text is UTF-8")
}
