//! Reader for the canonical trace format described in [`crate::trace_model`].

use std::collections::HashMap;
use std::io::{self, BufRead};
use std::sync::Arc;

use thiserror::Error;

use crate::trace_model::{
    is_canonical_name, unescape_field, validate_event, Direction, SyscallEvent, TraceLog,
};

/// Default tolerance for out-of-order records: 1 ms.
pub const DEFAULT_REORDER_WINDOW_NS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Abort on the first malformed line.
    Strict,
    /// Skip malformed lines, remembering the first one.
    #[default]
    Lenient,
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub mode: ParseMode,
    /// Records older than the newest timestamp seen by more than this are
    /// out of order. Within the window they are re-sorted silently.
    pub reorder_window_ns: u64,
    /// Label used when the input has no `# source:` line.
    pub default_label: String,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            mode: ParseMode::Lenient,
            reorder_window_ns: DEFAULT_REORDER_WINDOW_NS,
            default_label: String::new(),
        }
    }
}

impl ParseOptions {
    pub fn strict() -> Self {
        ParseOptions {
            mode: ParseMode::Strict,
            ..Default::default()
        }
    }

    pub fn lenient() -> Self {
        Self::default()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.default_label = label.into();
        self
    }
}

/// A problem found on one input line (1-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseReport {
    pub log: TraceLog,
    pub lines_read: usize,
    /// Comments, blank lines and (lenient mode) malformed lines.
    pub lines_skipped: usize,
    pub first_error: Option<LineError>,
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("read failed: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: not valid UTF-8")]
    Undecodable { line: usize },
    #[error("line {line}: {description}")]
    Malformed { line: usize, description: String },
    #[error("line {line}: timestamp {timestamp_ns} is more than {window_ns} ns before {newest_ns}")]
    OutOfOrder {
        line: usize,
        timestamp_ns: u64,
        newest_ns: u64,
        window_ns: u64,
    },
    #[error("declared duration {declared_ns} ns precedes the last event at {last_ns} ns")]
    DurationTooShort { declared_ns: u64, last_ns: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NameError {
    #[error("syscall name is empty")]
    Empty,
    #[error("illegal characters in syscall name {0:?}")]
    IllegalCharacters(String),
}

/// Canonicalizes a syscall name: trims whitespace, drops a trailing `()` and
/// folds to lowercase. `"openat()"` becomes `"openat"`.
pub fn normalize_name(raw: &str) -> Result<String, NameError> {
    let trimmed = raw.trim();
    let bare = trimmed.strip_suffix("()").unwrap_or(trimmed).trim_end();
    if bare.is_empty() {
        return Err(NameError::Empty);
    }
    let name = bare.to_ascii_lowercase();
    if is_canonical_name(&name) {
        Ok(name)
    } else {
        Err(NameError::IllegalCharacters(raw.to_owned()))
    }
}

struct LineFault(String);

struct Interner(HashMap<String, Arc<str>>);

impl Interner {
    fn get(&mut self, s: &str) -> Arc<str> {
        if let Some(a) = self.0.get(s) {
            return a.clone();
        }
        let a: Arc<str> = Arc::from(s);
        self.0.insert(s.to_owned(), a.clone());
        a
    }
}

struct LineParser {
    default_label: String,
    names: Interner,
    newest_ns: Option<u64>,
    label: Option<String>,
    declared_duration: Option<u64>,
}

impl LineParser {
    fn metadata(&mut self, comment: &str) -> Result<(), LineFault> {
        let body = comment.trim_start_matches('#').trim_start();
        if let Some(label) = body.strip_prefix("source:") {
            let label = label.strip_prefix(' ').unwrap_or(label);
            let label = unescape_field(label)
                .ok_or_else(|| LineFault("bad escape in source label".into()))?;
            self.label = Some(label);
        } else if let Some(value) = body.strip_prefix("duration_ns:") {
            let ns = value
                .trim()
                .parse::<u64>()
                .map_err(|_| LineFault(format!("bad duration_ns {:?}", value.trim())))?;
            self.declared_duration = Some(ns);
        }
        Ok(())
    }

    fn event(&mut self, line: &str) -> Result<SyscallEvent, LineFault> {
        let bad = LineFault;
        let mut fields = line.split('\t');
        let mut next = |what: &str| {
            fields
                .next()
                .ok_or_else(|| bad(format!("missing {what} field")))
        };
        let ts_raw = next("timestamp")?;
        let timestamp_ns = ts_raw
            .parse::<u64>()
            .map_err(|_| bad(format!("bad timestamp {ts_raw:?}")))?;
        let process = unescape_field(next("process")?)
            .ok_or_else(|| bad("bad escape in process name".into()))?;
        let tid_raw = next("thread id")?;
        let thread_id = tid_raw
            .parse::<u32>()
            .map_err(|_| bad(format!("bad thread id {tid_raw:?}")))?;
        let direction = match next("direction")? {
            d if d.eq_ignore_ascii_case("enter") => Direction::Enter,
            d if d.eq_ignore_ascii_case("exit") => Direction::Exit,
            d => return Err(bad(format!("unknown direction {d:?}"))),
        };
        let name = normalize_name(next("syscall")?).map_err(|e| bad(e.to_string()))?;
        let payload = fields
            .map(|f| unescape_field(f).ok_or_else(|| bad("bad escape in payload".into())))
            .collect::<Result<Vec<_>, _>>()?;

        let event = SyscallEvent {
            timestamp_ns,
            process_name: self.names.get(&process),
            thread_id,
            syscall_name: self.names.get(&name),
            direction,
            payload,
        };
        validate_event(&event).map_err(|v| bad(v.to_string()))?;
        Ok(event)
    }
}

/// Parses a trace from a buffered reader.
///
/// In lenient mode every input yields a report unless the reader itself
/// fails. Records that arrive later than the reorder window allows are kept
/// and sorted into place, but are noted in `first_error`.
pub fn parse_trace<R: BufRead>(mut input: R, options: ParseOptions) -> Result<ParseReport, ParseError> {
    let strict = options.mode == ParseMode::Strict;
    let window_ns = options.reorder_window_ns;
    let mut parser = LineParser {
        default_label: options.default_label,
        names: Interner(HashMap::new()),
        newest_ns: None,
        label: None,
        declared_duration: None,
    };
    let mut events = Vec::new();
    let mut lines_read = 0usize;
    let mut lines_skipped = 0usize;
    let mut first_error: Option<LineError> = None;
    let note = |first_error: &mut Option<LineError>, line: usize, description: String| {
        first_error.get_or_insert(LineError { line, description });
    };

    let mut buf = Vec::new();
    loop {
        buf.clear();
        if input.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        lines_read += 1;
        let line_no = lines_read;
        let mut raw = buf.as_slice();
        if let Some(rest) = raw.strip_suffix(b"\n") {
            raw = rest;
        }
        if let Some(rest) = raw.strip_suffix(b"\r") {
            raw = rest;
        }
        let Ok(line) = std::str::from_utf8(raw) else {
            if strict {
                return Err(ParseError::Undecodable { line: line_no });
            }
            lines_skipped += 1;
            note(&mut first_error, line_no, "not valid UTF-8".into());
            continue;
        };

        let outcome = if line.trim().is_empty() {
            lines_skipped += 1;
            continue;
        } else if line.starts_with('#') {
            lines_skipped += 1;
            parser.metadata(line).map(|()| None)
        } else {
            parser.event(line).map(Some)
        };

        match outcome {
            Ok(Some(event)) => {
                let ts = event.timestamp_ns;
                match parser.newest_ns {
                    Some(newest) if ts.saturating_add(window_ns) < newest => {
                        if strict {
                            return Err(ParseError::OutOfOrder {
                                line: line_no,
                                timestamp_ns: ts,
                                newest_ns: newest,
                                window_ns,
                            });
                        }
                        note(
                            &mut first_error,
                            line_no,
                            format!("timestamp {ts} is more than {window_ns} ns before {newest}"),
                        );
                    }
                    Some(newest) if newest >= ts => {}
                    _ => parser.newest_ns = Some(ts),
                }
                events.push(event);
            }
            Ok(None) => {}
            Err(LineFault(description)) => {
                if strict {
                    return Err(ParseError::Malformed {
                        line: line_no,
                        description,
                    });
                }
                // Metadata comments were already counted as skipped.
                if !line.starts_with('#') {
                    lines_skipped += 1;
                }
                note(&mut first_error, line_no, description);
            }
        }
    }

    let last_ns = events.iter().map(|e| e.timestamp_ns).max().unwrap_or(0);
    let duration_ns = match parser.declared_duration {
        Some(declared) if declared < last_ns => {
            if strict {
                return Err(ParseError::DurationTooShort {
                    declared_ns: declared,
                    last_ns,
                });
            }
            note(
                &mut first_error,
                lines_read,
                format!("declared duration {declared} ns precedes the last event at {last_ns} ns"),
            );
            last_ns
        }
        Some(declared) => declared,
        None => last_ns,
    };
    let label = parser
        .label
        .take()
        .unwrap_or_else(|| parser.default_label.clone());
    let log = TraceLog::new(label, events, duration_ns)
        .expect("parsed events are validated and the duration covers them");
    Ok(ParseReport {
        log,
        lines_read,
        lines_skipped,
        first_error,
    })
}

/// Parses an in-memory trace.
pub fn parse_trace_bytes(input: &[u8], options: ParseOptions) -> Result<ParseReport, ParseError> {
    parse_trace(input, options)
}

pub fn parse_trace_str(input: &str, options: ParseOptions) -> Result<ParseReport, ParseError> {
    parse_trace(input.as_bytes(), options)
}
