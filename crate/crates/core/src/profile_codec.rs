//! Docker seccomp profiles: generation from mined sets, the canonical JSON
//! encoding, parsing, and allow-list comparison.
//!
//! The encoding is the name-per-rule layout Docker accepts through
//! `docker run --security-opt seccomp=<file>`:
//!
//! ```json
//! {
//!   "defaultAction": "SCMP_ACT_ERRNO",
//!   "architectures": [
//!     "SCMP_ARCH_X86_64"
//!   ],
//!   "syscalls": [
//!     {
//!       "name": "write",
//!       "action": "SCMP_ACT_ALLOW",
//!       "args": []
//!     }
//!   ]
//! }
//! ```
//!
//! Keys always appear in this order, rules are sorted by name, indentation is
//! two spaces and the document ends with a newline.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::miner::MinedSet;
use crate::trace_model::is_canonical_name;
use crate::trace_parser::{normalize_name, ParseMode};

/// Architectures emitted when none are requested.
pub const DEFAULT_ARCHITECTURES: [&str; 3] = ["SCMP_ARCH_X86_64", "SCMP_ARCH_X86", "SCMP_ARCH_X32"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SeccompAction {
    Allow,
    Errno,
    Kill,
    Trace,
}

impl SeccompAction {
    pub const ALL: [SeccompAction; 4] = [
        SeccompAction::Allow,
        SeccompAction::Errno,
        SeccompAction::Kill,
        SeccompAction::Trace,
    ];

    pub fn wire_name(self) -> &'static str {
        match self {
            SeccompAction::Allow => "SCMP_ACT_ALLOW",
            SeccompAction::Errno => "SCMP_ACT_ERRNO",
            SeccompAction::Kill => "SCMP_ACT_KILL",
            SeccompAction::Trace => "SCMP_ACT_TRACE",
        }
    }

    pub fn from_wire(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.wire_name() == token)
    }
}

impl fmt::Display for SeccompAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

/// Accepts wire tokens (`SCMP_ACT_KILL`) and short forms (`kill`).
impl FromStr for SeccompAction {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(a) = Self::from_wire(s) {
            return Ok(a);
        }
        match s.to_ascii_lowercase().as_str() {
            "allow" => Ok(SeccompAction::Allow),
            "errno" => Ok(SeccompAction::Errno),
            "kill" => Ok(SeccompAction::Kill),
            "trace" => Ok(SeccompAction::Trace),
            _ => Err(ProfileError::UnknownAction(s.to_owned())),
        }
    }
}

impl Serialize for SeccompAction {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.wire_name())
    }
}

/// A libseccomp architecture token such as `SCMP_ARCH_X86_64`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Architecture(String);

impl Architecture {
    pub fn new(token: impl Into<String>) -> Result<Self, ProfileError> {
        let token = token.into();
        let valid = token
            .strip_prefix("SCMP_ARCH_")
            .is_some_and(|rest| {
                !rest.is_empty()
                    && rest
                        .bytes()
                        .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_')
            });
        if valid {
            Ok(Architecture(token))
        } else {
            Err(ProfileError::BadArchitecture(token))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn defaults() -> Vec<Architecture> {
        DEFAULT_ARCHITECTURES
            .iter()
            .map(|a| Architecture((*a).to_owned()))
            .collect()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One syscall rule. Argument constraints are not supported, so a rule is
/// just a name and an action.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SeccompRule {
    pub name: String,
    pub action: SeccompAction,
}

impl SeccompRule {
    pub fn allow(name: impl Into<String>) -> Self {
        SeccompRule {
            name: name.into(),
            action: SeccompAction::Allow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("missing field {0:?}")]
    MissingField(&'static str),
    #[error("field {0:?} has the wrong type")]
    WrongType(String),
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("duplicate rule for {0:?}")]
    DuplicateRule(String),
    #[error("invalid syscall name {0:?}")]
    BadRuleName(String),
    #[error("rule {0:?} has argument constraints, which are not supported")]
    ArgsNotSupported(String),
    #[error("invalid architecture token {0:?}")]
    BadArchitecture(String),
    #[error("architecture list is empty")]
    EmptyArchitectures,
    #[error("default action SCMP_ACT_ALLOW cannot back an allow-list")]
    VacuousAllowList,
    #[error("profile is not an allow-list: rule {0:?} is not SCMP_ACT_ALLOW")]
    NotWhitelist(String),
}

/// A validated seccomp profile.
///
/// Rules are kept sorted by name with no duplicates, so equal profiles
/// serialize to identical bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeccompProfile {
    default_action: SeccompAction,
    architectures: Vec<Architecture>,
    rules: Vec<SeccompRule>,
}

impl SeccompProfile {
    pub fn new(
        default_action: SeccompAction,
        architectures: Vec<Architecture>,
        mut rules: Vec<SeccompRule>,
    ) -> Result<Self, ProfileError> {
        for rule in &rules {
            if !is_canonical_name(&rule.name) {
                return Err(ProfileError::BadRuleName(rule.name.clone()));
            }
        }
        rules.sort_by(|a, b| a.name.cmp(&b.name));
        if let Some(w) = rules.windows(2).find(|w| w[0].name == w[1].name) {
            return Err(ProfileError::DuplicateRule(w[0].name.clone()));
        }
        if default_action == SeccompAction::Allow
            && rules.iter().all(|r| r.action == SeccompAction::Allow)
        {
            return Err(ProfileError::VacuousAllowList);
        }
        Ok(SeccompProfile {
            default_action,
            architectures,
            rules,
        })
    }

    pub fn default_action(&self) -> SeccompAction {
        self.default_action
    }

    pub fn architectures(&self) -> &[Architecture] {
        &self.architectures
    }

    pub fn rules(&self) -> &[SeccompRule] {
        &self.rules
    }

    pub fn rule(&self, name: &str) -> Option<&SeccompRule> {
        self.rules
            .binary_search_by(|r| r.name.as_str().cmp(name))
            .ok()
            .map(|i| &self.rules[i])
    }

    /// Names with an Allow rule.
    pub fn allowed(&self) -> BTreeSet<String> {
        self.rules
            .iter()
            .filter(|r| r.action == SeccompAction::Allow)
            .map(|r| r.name.clone())
            .collect()
    }

    pub fn is_whitelist(&self) -> bool {
        self.rules.iter().all(|r| r.action == SeccompAction::Allow)
    }
}

/// Turns a mined set into an allow-list: one Allow rule per name.
pub fn generate_profile(
    mined: &MinedSet,
    default_action: SeccompAction,
    architectures: Vec<Architecture>,
) -> Result<SeccompProfile, ProfileError> {
    if default_action == SeccompAction::Allow {
        return Err(ProfileError::VacuousAllowList);
    }
    if architectures.is_empty() {
        return Err(ProfileError::EmptyArchitectures);
    }
    if mined.is_empty() {
        log::warn!("mined set is empty; the generated profile denies every syscall");
    }
    let rules = mined.names().map(SeccompRule::allow).collect();
    SeccompProfile::new(default_action, architectures, rules)
}

#[derive(Serialize)]
struct WireProfile<'a> {
    #[serde(rename = "defaultAction")]
    default_action: SeccompAction,
    architectures: &'a [Architecture],
    syscalls: Vec<WireRule<'a>>,
}

#[derive(Serialize)]
struct WireRule<'a> {
    name: &'a str,
    action: SeccompAction,
    args: [(); 0],
}

/// Canonical JSON encoding of a profile.
pub fn serialize_profile(profile: &SeccompProfile) -> String {
    let wire = WireProfile {
        default_action: profile.default_action,
        architectures: &profile.architectures,
        syscalls: profile
            .rules
            .iter()
            .map(|r| WireRule {
                name: &r.name,
                action: r.action,
                args: [],
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&wire).expect("profile encoding cannot fail");
    text.push('\n');
    text
}

/// A parsed profile plus everything lenient parsing chose to ignore.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedProfile {
    pub profile: SeccompProfile,
    pub warnings: Vec<String>,
}

/// Parses a profile, logging any lenient-mode warnings.
pub fn parse_profile(input: &[u8], mode: ParseMode) -> Result<SeccompProfile, ProfileError> {
    let parsed = parse_profile_report(input, mode)?;
    for w in &parsed.warnings {
        log::warn!("{w}");
    }
    Ok(parsed.profile)
}

/// Parses a profile document.
///
/// Strict mode accepts only the canonical layout. Lenient mode also takes
/// the multi-name rule entries (`"names": [...]`) and `archMap` of current
/// Docker releases: unknown keys are ignored, argument constraints are
/// dropped (widening the rule to its bare name), and for duplicated names the
/// first rule wins.
pub fn parse_profile_report(input: &[u8], mode: ParseMode) -> Result<ParsedProfile, ProfileError> {
    let strict = mode == ParseMode::Strict;
    let doc: Value = serde_json::from_slice(input).map_err(|e| ProfileError::Json(e.to_string()))?;
    let top = doc
        .as_object()
        .ok_or_else(|| ProfileError::WrongType("<document>".into()))?;
    let mut warnings = Vec::new();

    for key in top.keys() {
        if !matches!(key.as_str(), "defaultAction" | "architectures" | "syscalls") {
            if strict {
                return Err(ProfileError::UnknownKey(key.clone()));
            }
            if key != "archMap" {
                warnings.push(format!("ignoring unknown top-level key {key:?}"));
            }
        }
    }

    let default_action = match top.get("defaultAction") {
        None => return Err(ProfileError::MissingField("defaultAction")),
        Some(v) => action_of(v, "defaultAction")?,
    };

    let architectures = match (top.get("architectures"), top.get("archMap")) {
        (Some(v), _) => string_list(v, "architectures")?
            .into_iter()
            .map(Architecture::new)
            .collect::<Result<Vec<_>, _>>()?,
        (None, Some(map)) if !strict => arch_map(map)?,
        (None, _) => Vec::new(),
    };

    let entries = match top.get("syscalls") {
        Some(Value::Array(entries)) => entries.as_slice(),
        Some(_) => return Err(ProfileError::WrongType("syscalls".into())),
        None if strict => return Err(ProfileError::MissingField("syscalls")),
        None => {
            warnings.push("no \"syscalls\" field; profile has no rules".into());
            &[]
        }
    };

    let mut rules: Vec<SeccompRule> = Vec::new();
    let mut seen = BTreeSet::new();
    for entry in entries {
        let obj = entry
            .as_object()
            .ok_or_else(|| ProfileError::WrongType("syscalls[]".into()))?;
        for (name, action) in rule_entries(obj, strict, &mut warnings)? {
            if !seen.insert(name.clone()) {
                if strict {
                    return Err(ProfileError::DuplicateRule(name));
                }
                warnings.push(format!("duplicate rule for {name:?}; keeping the first"));
                continue;
            }
            rules.push(SeccompRule { name, action });
        }
    }

    let profile = SeccompProfile::new(default_action, architectures, rules)?;
    Ok(ParsedProfile { profile, warnings })
}

fn action_of(v: &Value, field: &str) -> Result<SeccompAction, ProfileError> {
    let token = v
        .as_str()
        .ok_or_else(|| ProfileError::WrongType(field.to_owned()))?;
    SeccompAction::from_wire(token).ok_or_else(|| ProfileError::UnknownAction(token.to_owned()))
}

fn string_list(v: &Value, field: &str) -> Result<Vec<String>, ProfileError> {
    let wrong = || ProfileError::WrongType(field.to_owned());
    v.as_array()
        .ok_or_else(wrong)?
        .iter()
        .map(|s| s.as_str().map(str::to_owned).ok_or_else(wrong))
        .collect()
}

fn arch_map(v: &Value) -> Result<Vec<Architecture>, ProfileError> {
    let wrong = || ProfileError::WrongType("archMap".into());
    let mut out = Vec::new();
    for entry in v.as_array().ok_or_else(wrong)? {
        let obj = entry.as_object().ok_or_else(wrong)?;
        if let Some(a) = obj.get("architecture") {
            out.push(a.as_str().ok_or_else(wrong)?.to_owned());
        }
        if let Some(subs) = obj.get("subArchitectures") {
            out.extend(string_list(subs, "archMap")?);
        }
    }
    let mut archs = Vec::new();
    for token in out {
        let arch = Architecture::new(token)?;
        if !archs.contains(&arch) {
            archs.push(arch);
        }
    }
    Ok(archs)
}

fn rule_entries(
    obj: &Map<String, Value>,
    strict: bool,
    warnings: &mut Vec<String>,
) -> Result<Vec<(String, SeccompAction)>, ProfileError> {
    let raw_names: Vec<String> = match (obj.get("name"), obj.get("names")) {
        (Some(n), _) => vec![n
            .as_str()
            .ok_or_else(|| ProfileError::WrongType("name".into()))?
            .to_owned()],
        (None, Some(list)) if !strict => string_list(list, "names")?,
        _ => return Err(ProfileError::MissingField("name")),
    };
    let label = raw_names.join(",");

    for key in obj.keys() {
        let known = matches!(key.as_str(), "name" | "action" | "args");
        if !known {
            if strict {
                return Err(ProfileError::UnknownKey(format!("{label}.{key}")));
            }
            if key != "names" {
                warnings.push(format!("ignoring key {key:?} on rule {label}"));
            }
        }
    }

    let action = match obj.get("action") {
        Some(v) => action_of(v, "action")?,
        None => return Err(ProfileError::MissingField("action")),
    };

    match obj.get("args") {
        None | Some(Value::Null) => {}
        Some(Value::Array(a)) if a.is_empty() => {}
        Some(Value::Array(_)) => {
            if strict {
                return Err(ProfileError::ArgsNotSupported(label));
            }
            warnings.push(format!("dropping argument constraints on rule {label}"));
        }
        Some(_) => return Err(ProfileError::WrongType("args".into())),
    }

    raw_names
        .into_iter()
        .map(|raw| {
            let name = if strict {
                if !is_canonical_name(&raw) {
                    return Err(ProfileError::BadRuleName(raw));
                }
                raw
            } else {
                normalize_name(&raw).map_err(|_| ProfileError::BadRuleName(raw))?
            };
            Ok((name, action))
        })
        .collect()
}

/// Partition of two allow-lists.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileDiff {
    pub only_in_a: BTreeSet<String>,
    pub only_in_b: BTreeSet<String>,
    pub common: BTreeSet<String>,
    pub allowed_a: usize,
    pub allowed_b: usize,
    /// Share of `b`'s allow-list that `a` does not grant; 0 when `b` is empty.
    pub reduction_ratio: f64,
}

/// Compares two allow-lists, typically a mined profile `a` against a
/// baseline `b`.
pub fn diff_profiles(a: &SeccompProfile, b: &SeccompProfile) -> Result<ProfileDiff, ProfileError> {
    for p in [a, b] {
        if let Some(r) = p.rules.iter().find(|r| r.action != SeccompAction::Allow) {
            return Err(ProfileError::NotWhitelist(r.name.clone()));
        }
    }
    let (allowed_a, allowed_b) = (a.allowed(), b.allowed());
    let common: BTreeSet<String> = allowed_a.intersection(&allowed_b).cloned().collect();
    let only_in_a: BTreeSet<String> = allowed_a.difference(&allowed_b).cloned().collect();
    let only_in_b: BTreeSet<String> = allowed_b.difference(&allowed_a).cloned().collect();
    let reduction_ratio = if allowed_b.is_empty() {
        0.0
    } else {
        only_in_b.len() as f64 / allowed_b.len() as f64
    };
    Ok(ProfileDiff {
        only_in_a,
        only_in_b,
        common,
        allowed_a: allowed_a.len(),
        allowed_b: allowed_b.len(),
        reduction_ratio,
    })
}
