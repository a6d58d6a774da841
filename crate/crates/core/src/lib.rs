//! Mine per-container syscall sandboxes from execution traces.
//!
//! The crate covers the whole loop: parse traces, extract the set of
//! syscalls a container touched, watch that set saturate over time, turn it
//! into a Docker seccomp profile, and replay traces against profiles to audit
//! what would have been denied.

pub mod enforcer_sim;
pub mod fixtures;
pub mod miner;
pub mod pipeline;
pub mod profile_codec;
pub mod trace_model;
pub mod trace_parser;

pub use enforcer_sim::{evaluate, replay, AuditRecord, AuditReport, Decision};
pub use miner::{
    detect_convergence, extract_syscalls, frequency_histogram, saturation_curve, Convergence,
    FrequencyHistogram, MinedSet, ProcessFilter, SaturationCurve,
};
pub use profile_codec::{
    diff_profiles, generate_profile, parse_profile, serialize_profile, ProfileDiff, SeccompAction,
    SeccompProfile, SeccompRule,
};
pub use trace_model::{merge_logs, validate_event, Direction, SyscallEvent, TraceLog};
pub use trace_parser::{normalize_name, parse_trace, ParseMode, ParseOptions, ParseReport};
