//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs under `cargo test` with a custom harness (see Cargo.toml) so the
//! verdict lines are always printed.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sandbox_miner::fixtures;
use sandbox_miner::miner::SaturationCurve;
use sandbox_miner::profile_codec::{parse_profile_report, Architecture, SeccompRule};
use sandbox_miner::trace_parser::parse_trace_str;
use sandbox_miner::{
    detect_convergence, diff_profiles, evaluate, extract_syscalls, generate_profile, parse_profile,
    replay, serialize_profile, Convergence, Decision, ParseMode, ParseOptions, ProcessFilter,
    SeccompAction, SeccompProfile,
};

use common::{
    alphabet, convergence_by_scan, process_names, random_curve_points, random_filter, random_trace,
    HELLO_WORLD_SYSCALLS,
};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const FIG2_PROFILE: &str = r#"{
	"defaultAction": "SCMP_ACT_ERRNO",
	"architectures": [
		"SCMP_ARCH_X86_64",
		"SCMP_ARCH_X86",
		"SCMP_ARCH_X32"
	],
	"syscalls": [
		{
			"name": "accept",
			"action": "SCMP_ACT_ALLOW",
			"args": []
		},
		{
			"name": "accept4",
			"action": "SCMP_ACT_ALLOW",
			"args": []
		}
	]
}
"#;

fn hello_world_profile() -> SeccompProfile {
    let log = parse_trace_str(fixtures::HELLO_WORLD_TRACE, ParseOptions::strict())
        .unwrap()
        .log;
    let mined = extract_syscalls(&log, &ProcessFilter::none());
    generate_profile(&mined, SeccompAction::Errno, Architecture::defaults()).unwrap()
}

/// 1. The bundled hello-world trace mines exactly the 24 known syscalls.
fn ac1_hello_world_golden() -> Verdict {
    let start = Instant::now();
    let log = parse_trace_str(fixtures::HELLO_WORLD_TRACE, ParseOptions::strict())
        .map_err(|e| e.to_string())?
        .log;
    let mined = extract_syscalls(&log, &ProcessFilter::none());
    let profile = generate_profile(&mined, SeccompAction::Errno, Architecture::defaults())
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let expected: BTreeSet<String> = HELLO_WORLD_SYSCALLS.iter().map(|s| s.to_string()).collect();
    check(expected.len() == 24, || "reference list is not 24 names".into())?;
    check(mined.name_set() == expected, || {
        format!("mined set differs: {:?}", mined.name_set().symmetric_difference(&expected).collect::<Vec<_>>())
    })?;
    check(profile.rules().len() == 24, || format!("{} rules", profile.rules().len()))?;
    check(
        profile.rules().iter().all(|r| r.action == SeccompAction::Allow),
        || "non-Allow rule".into(),
    )?;
    check(profile.default_action() == SeccompAction::Errno, || {
        "default action is not SCMP_ACT_ERRNO".into()
    })?;
    check(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("24/24 names, 24 Allow rules, default SCMP_ACT_ERRNO, {elapsed:?}"))
}

/// 2. Replaying a trace against the profile mined from it denies nothing.
fn ac2_self_consistency() -> Verdict {
    const TRACES: usize = 1000;
    const MAX_LEN: usize = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let names = alphabet();
    check(names.len() == 400, || format!("alphabet has {} symbols", names.len()))?;
    let procs = process_names();

    let start = Instant::now();
    let mut events = 0usize;
    let mut longest = 0usize;
    for i in 0..TRACES {
        let len = match i {
            0 => 0,
            1 => MAX_LEN,
            _ => rng.gen_range(0..=MAX_LEN),
        };
        let log = random_trace(&mut rng, len, &names, &procs);
        let filter = random_filter(&mut rng);
        let mined = extract_syscalls(&log, &filter);
        let action = *[SeccompAction::Errno, SeccompAction::Kill, SeccompAction::Trace]
            .choose(&mut rng)
            .unwrap();
        let profile = generate_profile(&mined, action, Architecture::defaults()).map_err(|e| e.to_string())?;
        let report = replay(&profile, &filter.apply(&log), rng.gen_bool(0.5));
        check(report.denied == 0, || {
            format!("trace {i}: {} denials ({:?})", report.denied, report.denied_names)
        })?;
        check(report.allowed == report.total_events, || format!("trace {i}: tally mismatch"))?;
        events += len;
        longest = longest.max(len);
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{TRACES} traces, {events} events (longest {longest}), 0 denials, {elapsed:?}"
    ))
}

fn random_profile<R: Rng>(rng: &mut R, names: &[std::sync::Arc<str>]) -> (SeccompProfile, BTreeSet<String>) {
    let k = rng.gen_range(0..=names.len());
    let allowed: BTreeSet<String> = names
        .choose_multiple(rng, k)
        .map(|n| n.to_string())
        .collect();
    let default = *[SeccompAction::Errno, SeccompAction::Kill, SeccompAction::Trace]
        .choose(rng)
        .unwrap();
    let rules = allowed.iter().map(SeccompRule::allow).collect();
    let profile = SeccompProfile::new(default, Architecture::defaults(), rules).unwrap();
    (profile, allowed)
}

/// 3. evaluate agrees with set membership in the allow-list.
fn ac3_whitelist_soundness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let names = alphabet();
    let mut pairs = 0;
    for _ in 0..1000 {
        let (profile, allowed) = random_profile(&mut rng, &names);
        let denial = match profile.default_action() {
            SeccompAction::Errno => Decision::DeniedErrno,
            SeccompAction::Kill => Decision::Killed,
            SeccompAction::Trace => Decision::Traced,
            SeccompAction::Allow => unreachable!(),
        };
        for _ in 0..5 {
            let name = names.choose(&mut rng).unwrap();
            let expected = if allowed.contains(&**name) { Decision::Allowed } else { denial };
            let got = evaluate(&profile, name);
            check(got == expected, || format!("{name}: got {got:?}, want {expected:?}"))?;
            pairs += 1;
        }
        let outsider = format!("not_in_alphabet_{}", rng.gen::<u16>());
        check(evaluate(&profile, &outsider) == denial, || format!("{outsider} was allowed"))?;
        pairs += 1;
    }
    Ok(format!("{pairs} (profile, name) pairs agree with set membership"))
}

/// 4. parse and serialize are mutually inverse and deterministic.
fn ac4_codec_round_trip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let names = alphabet();
    let all_archs = ["SCMP_ARCH_X86_64", "SCMP_ARCH_X86", "SCMP_ARCH_X32", "SCMP_ARCH_AARCH64", "SCMP_ARCH_ARM"];

    let round_trip = |p: &SeccompProfile, label: &str| -> Result<(), String> {
        let first = serialize_profile(p);
        let second = serialize_profile(p);
        check(first == second, || format!("{label}: serialization not repeatable"))?;
        let parsed = parse_profile(first.as_bytes(), ParseMode::Strict).map_err(|e| format!("{label}: {e}"))?;
        check(&parsed == p, || format!("{label}: parse(serialize(p)) != p"))?;
        check(serialize_profile(&parsed) == first, || format!("{label}: bytes changed on re-serialize"))
    };

    let mut count = 0;
    for i in 0..1000 {
        let k = rng.gen_range(0..60);
        let mut rules: Vec<SeccompRule> = names
            .choose_multiple(&mut rng, k)
            .map(|n| SeccompRule {
                name: n.to_string(),
                action: *SeccompAction::ALL.choose(&mut rng).unwrap(),
            })
            .collect();
        let mut default = *SeccompAction::ALL.choose(&mut rng).unwrap();
        if default == SeccompAction::Allow && rules.iter().all(|r| r.action == SeccompAction::Allow) {
            default = SeccompAction::Kill;
        }
        let n_archs = rng.gen_range(0..=all_archs.len());
        let archs: Vec<Architecture> = all_archs
            .choose_multiple(&mut rng, n_archs)
            .map(|a| Architecture::new(*a).unwrap())
            .collect();
        let p1 = SeccompProfile::new(default, archs.clone(), rules.clone()).map_err(|e| e.to_string())?;
        rules.shuffle(&mut rng);
        let p2 = SeccompProfile::new(default, archs, rules).map_err(|e| e.to_string())?;
        round_trip(&p1, &format!("random profile {i}"))?;
        check(serialize_profile(&p1) == serialize_profile(&p2), || {
            format!("random profile {i}: rule order leaked into output")
        })?;
        count += 1;
    }

    let fig2 = parse_profile_report(FIG2_PROFILE.as_bytes(), ParseMode::Strict).map_err(|e| e.to_string())?;
    check(fig2.warnings.is_empty(), || "warnings on the reference snippet".into())?;
    round_trip(&fig2.profile, "reference snippet")?;
    round_trip(&hello_world_profile(), "hello-world profile")?;
    let bundled = parse_profile(fixtures::DOCKER_DEFAULT_PROFILE.as_bytes(), ParseMode::Strict).map_err(|e| e.to_string())?;
    check(serialize_profile(&bundled) == fixtures::DOCKER_DEFAULT_PROFILE, || {
        "bundled default profile is not in canonical form".into()
    })?;
    Ok(format!("{count} random profiles + reference snippet + fixtures round-trip byte-identically"))
}

/// 5. detect_convergence matches an exhaustive scan.
fn ac5_convergence_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let (mut converged, mut not_converged) = (0, 0);
    for i in 0..1000 {
        let interval = rng.gen_range(1..=10u64) * 1_000_000_000;
        let samples = rng.gen_range(0..120);
        let points = random_curve_points(&mut rng, samples, interval);
        let last = points.last().map_or(0, |p| p.t_ns);
        let extent = last.saturating_sub(rng.gen_range(0..interval));
        let window = interval * rng.gen_range(1..=20);
        let curve = SaturationCurve::from_points(interval, extent, points.clone()).map_err(|e| e.to_string())?;
        let got = detect_convergence(&curve, window).map_err(|e| e.to_string())?;
        let want = match convergence_by_scan(&points, extent, window) {
            Some(at_ns) => Convergence::Converged { at_ns },
            None => Convergence::NotConverged,
        };
        check(got == want, || format!("curve {i}: got {got:?}, oracle {want:?}"))?;
        if got.is_converged() {
            converged += 1;
        } else {
            not_converged += 1;
        }
    }
    check(converged > 50 && not_converged > 50, || {
        format!("unbalanced sample: {converged} converged, {not_converged} not")
    })?;
    Ok(format!("1000 curves agree ({converged} converged, {not_converged} not)"))
}

/// 6. The mined hello-world sandbox is far smaller than Docker's default.
fn ac6_attack_surface() -> Verdict {
    let mined = hello_world_profile();
    let baseline = parse_profile(fixtures::DOCKER_DEFAULT_PROFILE.as_bytes(), ParseMode::Strict).map_err(|e| e.to_string())?;

    // Count the fixture's allowed names straight from the JSON.
    let doc: serde_json::Value = serde_json::from_str(fixtures::DOCKER_DEFAULT_PROFILE).map_err(|e| e.to_string())?;
    let default_count = doc["syscalls"]
        .as_array()
        .ok_or("no syscalls array")?
        .iter()
        .filter(|r| r["action"] == "SCMP_ACT_ALLOW")
        .map(|r| r["name"].as_str().unwrap_or_default())
        .collect::<BTreeSet<_>>()
        .len();

    let diff = diff_profiles(&mined, &baseline).map_err(|e| e.to_string())?;
    check(diff.allowed_a == 24, || format!("mined allows {}", diff.allowed_a))?;
    check(diff.allowed_b == default_count, || {
        format!("diff counts {} baseline names, fixture has {default_count}", diff.allowed_b)
    })?;
    check(default_count > 300, || format!("default profile allows only {default_count}"))?;
    check(diff.allowed_a < diff.allowed_b, || "no reduction".into())?;
    check(diff.common.len() == 24 && diff.only_in_a.is_empty(), || {
        format!("mined names outside the default: {:?}", diff.only_in_a)
    })?;
    let expected_ratio = (default_count - 24) as f64 / default_count as f64;
    check((diff.reduction_ratio - expected_ratio).abs() < 1e-12, || {
        format!("reduction {} != {expected_ratio}", diff.reduction_ratio)
    })?;
    Ok(format!(
        "mined 24 < default {default_count}; reduction {:.2}%",
        diff.reduction_ratio * 100.0
    ))
}

/// 7. Desk-scale stand-in: replaying a million events stays under 5 s.
fn ac7_replay_throughput() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    let names = alphabet();
    let log = random_trace(&mut rng, 1_000_000, &names, &process_names());
    let (profile, _) = random_profile(&mut rng, &names);

    let start = Instant::now();
    let report = replay(&profile, &log, true);
    let elapsed = start.elapsed();
    check(report.allowed + report.denied == report.total_events, || "tally mismatch".into())?;
    check(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "replayed {} events ({} enter) in {elapsed:?}",
        log.len(),
        report.total_events + report.skipped_after_kill
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("AC1 hello-world golden", ac1_hello_world_golden),
        ("AC2 self-consistency", ac2_self_consistency),
        ("AC3 whitelist soundness", ac3_whitelist_soundness),
        ("AC4 codec round trip", ac4_codec_round_trip),
        ("AC5 convergence vs brute force", ac5_convergence_oracle),
        ("AC6 attack-surface reduction", ac6_attack_surface),
        ("AC7 replay throughput (10^6 events)", ac7_replay_throughput),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match std::panic::catch_unwind(run) {
            Ok(Ok(detail)) => println!("[PASS] {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("[FAIL] {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("[FAIL] {name}: panicked");
            }
        }
    }
    println!(
        "[NOTE] not reproducible at desk scale: the eight-container syscall counts, \
         the two-minute saturation wall-clock, the 30 live false-alarm use cases and \
         the TPS overhead all need live Docker hosts and benchmark tools; AC7 is the \
         throughput smoke check that stands in for them"
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
