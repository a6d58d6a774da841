//! Whitelist enforcement replayed over recorded traces.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use crate::profile_codec::{SeccompAction, SeccompProfile};
use crate::trace_model::TraceLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Allowed,
    DeniedErrno,
    Killed,
    Traced,
}

impl Decision {
    fn from_action(action: SeccompAction) -> Self {
        match action {
            SeccompAction::Allow => Decision::Allowed,
            SeccompAction::Errno => Decision::DeniedErrno,
            SeccompAction::Kill => Decision::Killed,
            SeccompAction::Trace => Decision::Traced,
        }
    }

    pub fn is_denial(self) -> bool {
        self != Decision::Allowed
    }

    fn short_name(self) -> &'static str {
        match self {
            Decision::Allowed => "allow",
            Decision::DeniedErrno => "errno",
            Decision::Killed => "kill",
            Decision::Traced => "trace",
        }
    }
}

/// Decision for one syscall: the action of its rule when one exists,
/// otherwise the profile's default action.
pub fn evaluate(profile: &SeccompProfile, name: &str) -> Decision {
    let action = profile
        .rule(name)
        .map_or(profile.default_action(), |r| r.action);
    Decision::from_action(action)
}

/// One denied syscall, in the spirit of an auditd `SECCOMP` message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditRecord {
    pub timestamp_ns: u64,
    pub process_name: Arc<str>,
    pub thread_id: u32,
    pub syscall_name: Arc<str>,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct AuditReport {
    /// `Enter` events that were evaluated.
    pub total_events: u64,
    pub allowed: u64,
    /// All non-allowed decisions; the three fields below break it down.
    pub denied: u64,
    pub denied_errno: u64,
    pub killed: u64,
    pub traced: u64,
    /// Events of already-killed threads that were not evaluated.
    pub skipped_after_kill: u64,
    pub denied_names: BTreeSet<String>,
    pub records: Vec<AuditRecord>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.denied == 0
    }

    /// Counts, denied names, then one line per denial (up to `max_records`).
    pub fn human_summary(&self, max_records: usize) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "evaluated: {}", self.total_events);
        let _ = writeln!(out, "allowed:   {}", self.allowed);
        let _ = writeln!(
            out,
            "denied:    {} (errno {}, kill {}, trace {})",
            self.denied, self.denied_errno, self.killed, self.traced
        );
        if self.skipped_after_kill > 0 {
            let _ = writeln!(out, "skipped after kill: {}", self.skipped_after_kill);
        }
        if self.denied_names.is_empty() {
            let _ = writeln!(out, "denied syscalls: none");
        } else {
            let names: Vec<&str> = self.denied_names.iter().map(String::as_str).collect();
            let _ = writeln!(out, "denied syscalls: {}", names.join(", "));
        }
        for r in self.records.iter().take(max_records) {
            let _ = writeln!(
                out,
                "type=SECCOMP ts_ns={} comm={:?} tid={} syscall={} action={}",
                r.timestamp_ns,
                &*r.process_name,
                r.thread_id,
                r.syscall_name,
                r.decision.short_name()
            );
        }
        if self.records.len() > max_records {
            let _ = writeln!(out, "... {} more", self.records.len() - max_records);
        }
        out
    }
}

/// Evaluates every `Enter` event of `log` in order.
///
/// With `stop_on_kill`, a `Killed` decision ends its thread: later events
/// with the same thread id are skipped and counted in `skipped_after_kill`.
pub fn replay(profile: &SeccompProfile, log: &TraceLog, stop_on_kill: bool) -> AuditReport {
    let table: HashMap<&str, Decision> = profile
        .rules()
        .iter()
        .map(|r| (r.name.as_str(), Decision::from_action(r.action)))
        .collect();
    let fallback = Decision::from_action(profile.default_action());
    let mut dead: HashSet<u32> = HashSet::new();
    let mut report = AuditReport::default();

    for event in log.enter_events() {
        if stop_on_kill && dead.contains(&event.thread_id) {
            report.skipped_after_kill += 1;
            continue;
        }
        report.total_events += 1;
        let decision = table
            .get(&*event.syscall_name)
            .copied()
            .unwrap_or(fallback);
        match decision {
            Decision::Allowed => {
                report.allowed += 1;
                continue;
            }
            Decision::DeniedErrno => report.denied_errno += 1,
            Decision::Killed => {
                report.killed += 1;
                if stop_on_kill {
                    dead.insert(event.thread_id);
                }
            }
            Decision::Traced => report.traced += 1,
        }
        report.denied += 1;
        if !report.denied_names.contains(&*event.syscall_name) {
            report.denied_names.insert(event.syscall_name.to_string());
        }
        report.records.push(AuditRecord {
            timestamp_ns: event.timestamp_ns,
            process_name: event.process_name.clone(),
            thread_id: event.thread_id,
            syscall_name: event.syscall_name.clone(),
            decision,
        });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile_codec::{Architecture, SeccompRule};
    use crate::trace_model::SyscallEvent;

    fn profile(default: SeccompAction, names: &[&str]) -> SeccompProfile {
        SeccompProfile::new(
            default,
            Architecture::defaults(),
            names.iter().map(|n| SeccompRule::allow(*n)).collect(),
        )
        .unwrap()
    }

    fn enter(ts: u64, tid: u32, name: &str) -> SyscallEvent {
        SyscallEvent::enter(ts, "p", tid, name, vec![])
    }

    #[test]
    fn evaluate_follows_rules_then_default() {
        let p = profile(SeccompAction::Errno, &["write"]);
        assert_eq!(evaluate(&p, "write"), Decision::Allowed);
        assert_eq!(evaluate(&p, "socket"), Decision::DeniedErrno);
        let p = profile(SeccompAction::Kill, &["write"]);
        assert_eq!(evaluate(&p, "socket"), Decision::Killed);
        let p = profile(SeccompAction::Trace, &["write"]);
        assert_eq!(evaluate(&p, "socket"), Decision::Traced);
    }

    #[test]
    fn empty_log_is_clean() {
        let r = replay(&profile(SeccompAction::Errno, &[]), &TraceLog::empty("e"), false);
        assert_eq!(r, AuditReport::default());
    }

    #[test]
    fn single_denial() {
        let log = TraceLog::from_events("t", vec![enter(1, 1, "write"), enter(2, 1, "socket")]).unwrap();
        let r = replay(&profile(SeccompAction::Errno, &["write"]), &log, false);
        assert_eq!((r.total_events, r.allowed, r.denied), (2, 1, 1));
        assert_eq!(r.records.len(), 1);
        assert_eq!(&*r.records[0].syscall_name, "socket");
        assert_eq!(r.records[0].decision, Decision::DeniedErrno);
        assert!(r.human_summary(10).contains("syscall=socket action=errno"));
    }

    #[test]
    fn exit_events_are_not_evaluated() {
        let log = TraceLog::from_events(
            "t",
            vec![SyscallEvent::exit(1, "p", 1, "socket", "3")],
        )
        .unwrap();
        let r = replay(&profile(SeccompAction::Kill, &[]), &log, true);
        assert_eq!(r.total_events, 0);
    }

    #[test]
    fn kill_stops_only_that_thread() {
        let log = TraceLog::from_events(
            "t",
            vec![
                enter(1, 1, "socket"),
                enter(2, 1, "write"),
                enter(3, 2, "write"),
                enter(4, 1, "socket"),
                enter(5, 2, "socket"),
            ],
        )
        .unwrap();
        let p = profile(SeccompAction::Kill, &["write"]);
        let r = replay(&p, &log, true);
        assert_eq!(r.total_events, 3);
        assert_eq!(r.skipped_after_kill, 2);
        assert_eq!((r.allowed, r.killed), (1, 2));
        assert_eq!(r.allowed + r.denied, r.total_events);

        let r = replay(&p, &log, false);
        assert_eq!(r.total_events, 5);
        assert_eq!(r.killed, 3);
        assert_eq!(r.denied_names, BTreeSet::from(["socket".to_string()]));
    }

    #[test]
    fn traced_counts_as_denial() {
        let log = TraceLog::from_events("t", vec![enter(1, 1, "ptrace")]).unwrap();
        let r = replay(&profile(SeccompAction::Trace, &["write"]), &log, true);
        assert_eq!((r.denied, r.traced), (1, 1));
        assert_eq!(r.records[0].decision, Decision::Traced);
    }

    #[test]
    fn report_json_shape() {
        let log = TraceLog::from_events("t", vec![enter(1, 3, "socket")]).unwrap();
        let r = replay(&profile(SeccompAction::Errno, &[]), &log, false);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["denied"], 1);
        assert_eq!(v["records"][0]["decision"], "denied_errno");
        assert_eq!(v["records"][0]["syscall_name"], "socket");
    }
}
