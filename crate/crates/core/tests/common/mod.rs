//! Shared generators and brute-force oracles for the integration tests.
//!
//! The oracles here deliberately avoid the library's own algorithms: they
//! recount from raw events or scan every window exhaustively.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::Rng;
use sandbox_miner::fixtures;
use sandbox_miner::miner::{CurvePoint, ProcessFilter};
use sandbox_miner::trace_model::{SyscallEvent, TraceLog};

pub const PROCESSES: [&str; 4] = ["runc:[2:INIT]", "nginx", "worker", "sh"];

/// The 24 syscalls the hello-world container is known to touch, in the
/// order they are first triggered.
pub const HELLO_WORLD_SYSCALLS: [&str; 24] = [
    "openat", "getdents64", "lstat", "close", "fcntl", "getpid", "capget", "prctl", "getuid",
    "getgid", "read", "stat", "fstat", "fchown", "setgroups", "setgid", "futex", "setuid",
    "capset", "chdir", "getppid", "execve", "write", "exit",
];

/// A 400-name syscall alphabet: every name of the bundled default profile,
/// topped up with synthetic names.
pub fn alphabet() -> Vec<Arc<str>> {
    let doc: serde_json::Value = serde_json::from_str(fixtures::DOCKER_DEFAULT_PROFILE).unwrap();
    let mut names: Vec<String> = doc["syscalls"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["name"].as_str().unwrap().to_owned())
        .collect();
    let mut i = 0;
    while names.len() < 400 {
        names.push(format!("synthetic_call_{i}"));
        i += 1;
    }
    names.truncate(400);
    names.into_iter().map(Arc::from).collect()
}

pub fn process_names() -> Vec<Arc<str>> {
    PROCESSES.iter().map(|p| Arc::from(*p)).collect()
}

/// A random valid trace of exactly `len` events drawn from `alphabet`.
pub fn random_trace<R: Rng>(
    rng: &mut R,
    len: usize,
    alphabet: &[Arc<str>],
    processes: &[Arc<str>],
) -> TraceLog {
    // A skewed pick makes some names frequent and others rare.
    let skew = rng.gen_range(1..=3);
    let mut ts = 0u64;
    let mut events = Vec::with_capacity(len);
    for _ in 0..len {
        ts += rng.gen_range(0..2_000_000);
        let mut idx = rng.gen_range(0..alphabet.len());
        for _ in 1..skew {
            idx = idx.min(rng.gen_range(0..alphabet.len()));
        }
        let pidx = rng.gen_range(0..processes.len());
        let event = if rng.gen_bool(0.7) {
            SyscallEvent {
                timestamp_ns: ts,
                process_name: processes[pidx].clone(),
                thread_id: pidx as u32 + 1,
                syscall_name: alphabet[idx].clone(),
                direction: sandbox_miner::Direction::Enter,
                payload: Vec::new(),
            }
        } else {
            SyscallEvent {
                timestamp_ns: ts,
                process_name: processes[pidx].clone(),
                thread_id: pidx as u32 + 1,
                syscall_name: alphabet[idx].clone(),
                direction: sandbox_miner::Direction::Exit,
                payload: vec!["0".to_owned()],
            }
        };
        events.push(event);
    }
    let extra = rng.gen_range(0..10_000_000);
    TraceLog::new("random", events, ts + extra).unwrap()
}

pub fn random_filter<R: Rng>(rng: &mut R) -> ProcessFilter {
    let mut f = ProcessFilter::none();
    match rng.gen_range(0..4) {
        0 => {}
        1 => {
            f.exclude.insert(PROCESSES[0].to_owned());
        }
        2 => {
            f.include.insert(PROCESSES[1].to_owned());
            f.include.insert(PROCESSES[2].to_owned());
        }
        _ => {
            f.include.insert(PROCESSES[rng.gen_range(0..PROCESSES.len())].to_owned());
            f.exclude.insert(PROCESSES[rng.gen_range(0..PROCESSES.len())].to_owned());
        }
    }
    f
}

/// Distinct `Enter` names admitted by `filter`, by direct scan.
pub fn names_by_scan(log: &TraceLog, filter: &ProcessFilter) -> BTreeSet<String> {
    log.events()
        .iter()
        .filter(|e| e.is_enter() && filter.accepts(&e.process_name))
        .map(|e| e.syscall_name.to_string())
        .collect()
}

/// Number of distinct names with an admitted `Enter` at or before `t_ns`,
/// recounted from scratch.
pub fn distinct_by_time(log: &TraceLog, filter: &ProcessFilter, t_ns: u64) -> usize {
    log.events()
        .iter()
        .filter(|e| e.is_enter() && filter.accepts(&e.process_name) && e.timestamp_ns <= t_ns)
        .map(|e| e.syscall_name.to_string())
        .collect::<BTreeSet<_>>()
        .len()
}

/// Exhaustive convergence scan: the first sample with a positive count whose
/// whole quiet window lies inside the trace and contains no growth.
pub fn convergence_by_scan(points: &[CurvePoint], extent_ns: u64, window_ns: u64) -> Option<u64> {
    'candidates: for p in points {
        if p.count == 0 {
            continue;
        }
        let Some(horizon) = p.t_ns.checked_add(window_ns) else {
            continue;
        };
        if horizon > extent_ns {
            continue;
        }
        for q in points {
            if q.t_ns > p.t_ns && q.t_ns <= horizon && q.count != p.count {
                continue 'candidates;
            }
        }
        return Some(p.t_ns);
    }
    None
}

/// A random monotone curve sampled every `interval_ns`.
pub fn random_curve_points<R: Rng>(rng: &mut R, samples: usize, interval_ns: u64) -> Vec<CurvePoint> {
    let mut count = 0usize;
    let growth_p = rng.gen_range(0.05..0.9);
    (1..=samples)
        .map(|k| {
            if rng.gen_bool(growth_p) {
                count += rng.gen_range(1..5);
            }
            CurvePoint {
                t_ns: k as u64 * interval_ns,
                count,
            }
        })
        .collect()
}
