mod common;

use std::collections::BTreeSet;

use sandbox_miner::fixtures::{self, RUNC_INIT_PROCESS};
use sandbox_miner::profile_codec::Architecture;
use sandbox_miner::trace_model::SyscallEvent;
use sandbox_miner::trace_parser::parse_trace_str;
use sandbox_miner::{
    diff_profiles, evaluate, extract_syscalls, generate_profile, parse_profile, replay,
    serialize_profile, Decision, ParseMode, ParseOptions, ProcessFilter, SeccompAction, TraceLog,
};

use common::HELLO_WORLD_SYSCALLS;

fn hello_log() -> TraceLog {
    parse_trace_str(fixtures::HELLO_WORLD_TRACE, ParseOptions::strict())
        .unwrap()
        .log
}

#[test]
fn mines_the_24_reference_syscalls() {
    let mined = extract_syscalls(&hello_log(), &ProcessFilter::none());
    let expected: BTreeSet<String> = HELLO_WORLD_SYSCALLS.iter().map(|s| s.to_string()).collect();
    assert_eq!(mined.name_set(), expected);
    let order: Vec<&str> = mined.in_discovery_order().into_iter().map(|(n, _)| n).collect();
    assert_eq!(order, HELLO_WORLD_SYSCALLS);
}

#[test]
fn profile_matches_golden_file() {
    let mined = extract_syscalls(&hello_log(), &ProcessFilter::none());
    let profile = generate_profile(&mined, SeccompAction::Errno, Architecture::defaults()).unwrap();
    let golden = include_str!("golden/hello-world.profile.json");
    assert_eq!(serialize_profile(&profile), golden);
    assert_eq!(parse_profile(golden.as_bytes(), ParseMode::Strict).unwrap(), profile);
}

#[test]
fn mined_profile_blocks_socket() {
    let mined = extract_syscalls(&hello_log(), &ProcessFilter::none());
    let profile = generate_profile(&mined, SeccompAction::Errno, Architecture::defaults()).unwrap();
    assert_eq!(evaluate(&profile, "write"), Decision::Allowed);
    assert_eq!(evaluate(&profile, "socket"), Decision::DeniedErrno);

    let default = parse_profile(fixtures::DOCKER_DEFAULT_PROFILE.as_bytes(), ParseMode::Strict).unwrap();
    assert_eq!(evaluate(&default, "socket"), Decision::Allowed);

    let attack = TraceLog::from_events("attack", vec![
        SyscallEvent::enter(10, "hello", 7, "write", vec![]),
        SyscallEvent::enter(20, "hello", 7, "socket", vec!["2".into(), "1".into(), "0".into()]),
    ])
    .unwrap();
    let report = replay(&profile, &attack, false);
    assert_eq!((report.allowed, report.denied, report.denied_errno), (1, 1, 1));
    assert_eq!(report.denied_names, BTreeSet::from(["socket".to_owned()]));
    assert!(replay(&default, &attack, false).is_clean());
}

#[test]
fn excluding_runtime_init_leaves_the_payload() {
    let filter = ProcessFilter::excluding([RUNC_INIT_PROCESS]);
    let mined = extract_syscalls(&hello_log(), &filter);
    assert_eq!(mined.names().collect::<Vec<_>>(), ["exit", "write"]);
}

#[test]
fn bundled_default_is_canonical() {
    let default = parse_profile(fixtures::DOCKER_DEFAULT_PROFILE.as_bytes(), ParseMode::Strict).unwrap();
    assert_eq!(serialize_profile(&default), fixtures::DOCKER_DEFAULT_PROFILE);
    assert!(default.allowed().len() > 300);
    assert!(default.is_whitelist());
    assert_eq!(default.default_action(), SeccompAction::Errno);
}

#[test]
fn every_mined_name_is_in_the_default() {
    let mined = extract_syscalls(&hello_log(), &ProcessFilter::none());
    let profile = generate_profile(&mined, SeccompAction::Errno, Architecture::defaults()).unwrap();
    let default = parse_profile(fixtures::DOCKER_DEFAULT_PROFILE.as_bytes(), ParseMode::Strict).unwrap();
    let diff = diff_profiles(&profile, &default).unwrap();
    assert!(diff.only_in_a.is_empty());
    assert_eq!(diff.common.len(), 24);
    assert_eq!(diff.only_in_b.len(), default.allowed().len() - 24);
}

#[test]
fn self_replay_is_clean() {
    let log = hello_log();
    let mined = extract_syscalls(&log, &ProcessFilter::none());
    let profile = generate_profile(&mined, SeccompAction::Kill, Architecture::defaults()).unwrap();
    let report = replay(&profile, &log, true);
    assert!(report.is_clean());
    assert_eq!(report.total_events as usize, log.enter_events().count());
}
