//! Parser for the INI-like unit-file text format, plus the canonical
//! serializer used for round-trip checks and fixture generation.
//!
//! Recognized sections are `[Unit]`, `[Service]`, and `[Install]`; section
//! and key names are case-sensitive. Lines starting with `#` or `;` are
//! comments, whitespace around `=` is trimmed, values are unquoted.
//! Unknown keys inside known sections are warnings for forward
//! compatibility; unknown sections and keys outside any section are errors.

use std::collections::BTreeMap;
#[cfg(debug_assertions)]
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use crate::unit::{
    validate_unit, DependencyKind, Diagnostic, ServiceType, UnitFile, UnitName, UnitSet,
};

#[cfg(debug_assertions)]
static PARSE_CALLS: AtomicU64 = AtomicU64::new(0);

/// Number of `parse_unit` invocations since process start (debug builds
/// only). Lets tests assert that cache decoding never re-enters the parser.
#[cfg(debug_assertions)]
pub fn parse_invocations() -> u64 {
    PARSE_CALLS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorReason {
    UnknownSection,
    MalformedKey,
    DuplicateSection,
    BadValue,
    MissingSection,
}

impl ParseErrorReason {
    fn as_str(self) -> &'static str {
        match self {
            ParseErrorReason::UnknownSection => "unknown section",
            ParseErrorReason::MalformedKey => "malformed key",
            ParseErrorReason::DuplicateSection => "duplicate section",
            ParseErrorReason::BadValue => "bad value",
            ParseErrorReason::MissingSection => "missing section",
        }
    }
}

/// A hard parse failure. `line` is 1-based and points into the source text.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{file}:{line}: {}: {detail}", reason.as_str())]
pub struct ParseError {
    pub file: String,
    pub line: usize,
    pub reason: ParseErrorReason,
    pub detail: String,
}

impl ParseError {
    fn new(file: &str, line: usize, reason: ParseErrorReason, detail: impl Into<String>) -> Self {
        ParseError {
            file: file.to_string(),
            line,
            reason,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Unit,
    Service,
    Install,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Section::Unit => "Unit",
            Section::Service => "Service",
            Section::Install => "Install",
        }
    }
}

const DEP_KEYS: [(&str, DependencyKind); 4] = [
    ("Before", DependencyKind::OrderBefore),
    ("After", DependencyKind::OrderAfter),
    ("Requires", DependencyKind::Strong),
    ("Wants", DependencyKind::Weak),
];

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

/// Parse one unit file. Returns the unit plus non-fatal warnings
/// (duplicate scalar keys, unknown keys, misplaced dependency keys).
pub fn parse_unit(text: &str, name: &UnitName) -> Result<(UnitFile, Vec<Diagnostic>), ParseError> {
    #[cfg(debug_assertions)]
    PARSE_CALLS.fetch_add(1, Ordering::Relaxed);

    let file = name.as_str();
    let mut warnings: Vec<Diagnostic> = Vec::new();
    let warn = |warnings: &mut Vec<Diagnostic>, line: usize, msg: String| {
        warnings.push(Diagnostic::warning(
            Some(name.clone()),
            format!("{file}:{line}: {msg}"),
        ));
    };

    let mut section: Option<Section> = None;
    let mut seen_sections: Vec<Section> = Vec::new();

    let mut unit_deps: Vec<(DependencyKind, UnitName)> = Vec::new();
    let mut wanted_by: Vec<(DependencyKind, UnitName)> = Vec::new();
    // Scalar keys: last occurrence wins, with a warning on the repeat.
    let mut scalars: BTreeMap<&'static str, (String, usize)> = BTreeMap::new();
    let mut set_scalar = |warnings: &mut Vec<Diagnostic>,
                          key: &'static str,
                          value: String,
                          line: usize| {
        if scalars.insert(key, (value, line)).is_some() {
            warnings.push(Diagnostic::warning(
                Some(name.clone()),
                format!("{file}:{line}: duplicate key {key} overrides earlier value"),
            ));
        }
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(sect_name) = rest.strip_suffix(']') else {
                return Err(ParseError::new(
                    file,
                    lineno,
                    ParseErrorReason::MalformedKey,
                    format!("unterminated section header {line:?}"),
                ));
            };
            let sect = match sect_name {
                "Unit" => Section::Unit,
                "Service" => Section::Service,
                "Install" => Section::Install,
                other => {
                    return Err(ParseError::new(
                        file,
                        lineno,
                        ParseErrorReason::UnknownSection,
                        format!("[{other}]"),
                    ))
                }
            };
            if seen_sections.contains(&sect) {
                return Err(ParseError::new(
                    file,
                    lineno,
                    ParseErrorReason::DuplicateSection,
                    format!("[{}]", sect.name()),
                ));
            }
            seen_sections.push(sect);
            section = Some(sect);
            continue;
        }

        let Some(sect) = section else {
            return Err(ParseError::new(
                file,
                lineno,
                ParseErrorReason::MalformedKey,
                format!("key outside any section: {line:?}"),
            ));
        };
        let Some((key, value)) = line.split_once('=') else {
            return Err(ParseError::new(
                file,
                lineno,
                ParseErrorReason::MalformedKey,
                format!("expected key=value, got {line:?}"),
            ));
        };
        let key = key.trim_end();
        let value = value.trim_start();
        if key.is_empty() {
            return Err(ParseError::new(
                file,
                lineno,
                ParseErrorReason::MalformedKey,
                "empty key",
            ));
        }

        let parse_targets = |value: &str| -> Result<Vec<UnitName>, ParseError> {
            value
                .split_whitespace()
                .map(|t| {
                    UnitName::parse(t).map_err(|e| {
                        ParseError::new(file, lineno, ParseErrorReason::BadValue, e.to_string())
                    })
                })
                .collect()
        };

        match (sect, key) {
            (Section::Unit, "Description") => {
                set_scalar(&mut warnings, "Description", value.to_string(), lineno);
            }
            (Section::Unit, _) if DEP_KEYS.iter().any(|(k, _)| *k == key) => {
                let kind = DEP_KEYS.iter().find(|(k, _)| *k == key).unwrap().1;
                for target in parse_targets(value)? {
                    unit_deps.push((kind, target));
                }
            }
            (Section::Service, "Type") => {
                set_scalar(&mut warnings, "Type", value.to_string(), lineno);
            }
            (Section::Service, "ExecStart") => {
                set_scalar(&mut warnings, "ExecStart", value.to_string(), lineno);
            }
            (Section::Service, _) if DEP_KEYS.iter().any(|(k, _)| *k == key) => {
                // Whether ordering keys may appear in [Service] is left open
                // by the format; we reject them there and keep going.
                warn(
                    &mut warnings,
                    lineno,
                    format!("dependency key {key} is not allowed in [Service]; ignored"),
                );
            }
            (Section::Install, "WantedBy") => {
                for target in parse_targets(value)? {
                    wanted_by.push((DependencyKind::WantedBy, target));
                }
            }
            (Section::Unit | Section::Service, "X-Sim-Duration") => {
                set_scalar(&mut warnings, "X-Sim-Duration", value.to_string(), lineno);
            }
            (Section::Unit | Section::Service, "X-Sim-ForkPoint") => {
                set_scalar(&mut warnings, "X-Sim-ForkPoint", value.to_string(), lineno);
            }
            (Section::Unit | Section::Service, "X-Sim-Deferred") => {
                set_scalar(&mut warnings, "X-Sim-Deferred", value.to_string(), lineno);
            }
            (Section::Unit | Section::Service, "X-Sim-Priority") => {
                set_scalar(&mut warnings, "X-Sim-Priority", value.to_string(), lineno);
            }
            (Section::Unit | Section::Service, "X-Boot-Critical-Hint") => {
                set_scalar(
                    &mut warnings,
                    "X-Boot-Critical-Hint",
                    value.to_string(),
                    lineno,
                );
            }
            (sect, key) => {
                warn(
                    &mut warnings,
                    lineno,
                    format!("unknown key {key} in [{}]; ignored", sect.name()),
                );
            }
        }
    }

    if seen_sections.is_empty() {
        return Err(ParseError::new(
            file,
            1,
            ParseErrorReason::MissingSection,
            "no sections found",
        ));
    }

    let mut unit = UnitFile::new(name.clone());
    if let Some((v, _)) = scalars.get("Description") {
        unit.description = v.clone();
    }
    if let Some((v, line)) = scalars.get("Type") {
        unit.service_type = match v.to_ascii_lowercase().as_str() {
            "simple" => ServiceType::Simple,
            "forking" => ServiceType::Forking,
            "oneshot" => ServiceType::Oneshot,
            other => {
                return Err(ParseError::new(
                    file,
                    *line,
                    ParseErrorReason::BadValue,
                    format!("unknown service type {other:?}"),
                ))
            }
        };
    }
    if let Some((v, _)) = scalars.get("ExecStart") {
        unit.exec_start = Some(v.clone());
    }
    if let Some((v, line)) = scalars.get("X-Sim-Duration") {
        unit.exec_duration = v.parse().map_err(|_| {
            ParseError::new(
                file,
                *line,
                ParseErrorReason::BadValue,
                format!("X-Sim-Duration must be a nonnegative integer, got {v:?}"),
            )
        })?;
    }
    if let Some((v, line)) = scalars.get("X-Sim-Priority") {
        unit.priority = v.parse().map_err(|_| {
            ParseError::new(
                file,
                *line,
                ParseErrorReason::BadValue,
                format!("X-Sim-Priority must be an integer, got {v:?}"),
            )
        })?;
    }
    if let Some((v, line)) = scalars.get("X-Sim-Deferred") {
        unit.deferred = parse_bool(v).ok_or_else(|| {
            ParseError::new(
                file,
                *line,
                ParseErrorReason::BadValue,
                format!("X-Sim-Deferred must be a boolean, got {v:?}"),
            )
        })?;
    }
    if let Some((v, line)) = scalars.get("X-Boot-Critical-Hint") {
        unit.boot_critical_hint = parse_bool(v).ok_or_else(|| {
            ParseError::new(
                file,
                *line,
                ParseErrorReason::BadValue,
                format!("X-Boot-Critical-Hint must be a boolean, got {v:?}"),
            )
        })?;
    }
    match scalars.get("X-Sim-ForkPoint") {
        Some((v, line)) => {
            let fp: u64 = v.parse().map_err(|_| {
                ParseError::new(
                    file,
                    *line,
                    ParseErrorReason::BadValue,
                    format!("X-Sim-ForkPoint must be a nonnegative integer, got {v:?}"),
                )
            })?;
            if unit.service_type == ServiceType::Forking {
                unit.fork_point = Some(fp);
            } else {
                warn(
                    &mut warnings,
                    *line,
                    "X-Sim-ForkPoint ignored for non-forking unit".to_string(),
                );
            }
        }
        None => {
            if unit.service_type == ServiceType::Forking {
                unit.fork_point = Some(0);
            }
        }
    }

    unit.deps = unit_deps;
    unit.deps.extend(wanted_by);

    for d in validate_unit(&unit) {
        warnings.push(d);
    }
    Ok((unit, warnings))
}

/// Failure modes of `parse_tree`. Individual file failures become
/// diagnostics; only a tree with no parseable units fails outright.
#[derive(Debug, thiserror::Error)]
pub enum TreeError {
    #[error("empty unit tree")]
    Empty,
    #[error("no units parsed")]
    NoValidUnits { diagnostics: Vec<Diagnostic> },
}

/// Content digest of a source tree: SHA-256 over (name, text) pairs sorted
/// by name, with length framing. Insertion order cannot affect the result.
pub fn tree_digest(sources: &BTreeMap<UnitName, String>) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for (name, text) in sources {
        let n = name.as_str().as_bytes();
        hasher.update((n.len() as u64).to_le_bytes());
        hasher.update(n);
        hasher.update((text.len() as u64).to_le_bytes());
        hasher.update(text.as_bytes());
    }
    hasher.finalize().into()
}

/// Parse every source in the tree, aggregating per-file diagnostics and
/// flagging dangling dependency targets.
pub fn parse_tree(
    sources: &BTreeMap<UnitName, String>,
) -> Result<(UnitSet, Vec<Diagnostic>), TreeError> {
    if sources.is_empty() {
        return Err(TreeError::Empty);
    }
    let mut diagnostics = Vec::new();
    let mut units = BTreeMap::new();
    for (name, text) in sources {
        match parse_unit(text, name) {
            Ok((unit, warnings)) => {
                diagnostics.extend(warnings);
                units.insert(name.clone(), unit);
            }
            Err(e) => {
                diagnostics.push(Diagnostic::error(Some(name.clone()), e.to_string()));
            }
        }
    }
    if units.is_empty() {
        return Err(TreeError::NoValidUnits { diagnostics });
    }
    let set = UnitSet::new(units, tree_digest(sources));
    for target in set.dangling_targets() {
        diagnostics.push(Diagnostic::warning(
            Some(target.clone()),
            "dependency target does not resolve within the unit tree".to_string(),
        ));
    }
    Ok((set, diagnostics))
}

/// Render a unit back to canonical text. Parsing the result yields a unit
/// equal to the input field-for-field.
pub fn to_canonical_text(unit: &UnitFile) -> String {
    let mut out = String::from("[Unit]\n");
    if !unit.description.is_empty() {
        out.push_str(&format!("Description={}\n", unit.description));
    }
    for (kind, target) in &unit.deps {
        let key = match kind {
            DependencyKind::OrderBefore => "Before",
            DependencyKind::OrderAfter => "After",
            DependencyKind::Strong => "Requires",
            DependencyKind::Weak => "Wants",
            DependencyKind::WantedBy => continue,
        };
        out.push_str(&format!("{key}={target}\n"));
    }
    if unit.exec_duration != 0 {
        out.push_str(&format!("X-Sim-Duration={}\n", unit.exec_duration));
    }
    if let Some(fp) = unit.fork_point {
        out.push_str(&format!("X-Sim-ForkPoint={fp}\n"));
    }
    if unit.deferred {
        out.push_str("X-Sim-Deferred=true\n");
    }
    if unit.priority != 0 {
        out.push_str(&format!("X-Sim-Priority={}\n", unit.priority));
    }
    if unit.boot_critical_hint {
        out.push_str("X-Boot-Critical-Hint=true\n");
    }
    if unit.service_type != ServiceType::Simple || unit.exec_start.is_some() {
        out.push_str("\n[Service]\n");
        if unit.service_type != ServiceType::Simple {
            out.push_str(&format!("Type={}\n", unit.service_type.as_str()));
        }
        if let Some(exec) = &unit.exec_start {
            out.push_str(&format!("ExecStart={exec}\n"));
        }
    }
    let wanted: Vec<_> = unit
        .deps
        .iter()
        .filter(|(k, _)| *k == DependencyKind::WantedBy)
        .collect();
    if !wanted.is_empty() {
        out.push_str("\n[Install]\n");
        for (_, target) in wanted {
            out.push_str(&format!("WantedBy={target}\n"));
        }
    }
    out
}
