//! Domain types shared by every other module: unit names, dependency kinds,
//! parsed unit files, and unit sets. No I/O here, and no algorithms beyond
//! invariant checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// The recognized unit kinds. Anything else is rejected at parse time so the
/// scheduler semantics stay closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UnitKind {
    Service,
    Mount,
    Socket,
    Target,
}

impl UnitKind {
    pub fn suffix(self) -> &'static str {
        match self {
            UnitKind::Service => "service",
            UnitKind::Mount => "mount",
            UnitKind::Socket => "socket",
            UnitKind::Target => "target",
        }
    }

    pub fn from_suffix(s: &str) -> Option<UnitKind> {
        match s {
            "service" => Some(UnitKind::Service),
            "mount" => Some(UnitKind::Mount),
            "socket" => Some(UnitKind::Socket),
            "target" => Some(UnitKind::Target),
            _ => None,
        }
    }
}

/// A unit name like `dbus.service` or `multi-user.target`: a non-empty base
/// plus a recognized suffix. Ordering is lexicographic on the full name, which
/// every deterministic traversal in this crate relies on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UnitName {
    full: String,
    kind: UnitKind,
}

/// Why a candidate unit name was rejected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BadUnitName {
    #[error("unit name {0:?} has no suffix")]
    NoSuffix(String),
    #[error("unit name {0:?} has an empty base")]
    EmptyBase(String),
    #[error("unit name {0:?} has unrecognized suffix {1:?}")]
    UnknownSuffix(String, String),
}

impl UnitName {
    pub fn parse(s: &str) -> Result<UnitName, BadUnitName> {
        let (base, suffix) = s
            .rsplit_once('.')
            .ok_or_else(|| BadUnitName::NoSuffix(s.to_string()))?;
        if base.is_empty() {
            return Err(BadUnitName::EmptyBase(s.to_string()));
        }
        let kind = UnitKind::from_suffix(suffix)
            .ok_or_else(|| BadUnitName::UnknownSuffix(s.to_string(), suffix.to_string()))?;
        Ok(UnitName {
            full: s.to_string(),
            kind,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.full
    }

    pub fn kind(&self) -> UnitKind {
        self.kind
    }

    pub fn base(&self) -> &str {
        self.full.rsplit_once('.').map(|(b, _)| b).unwrap_or("")
    }
}

impl fmt::Display for UnitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.full)
    }
}

impl TryFrom<String> for UnitName {
    type Error = BadUnitName;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        UnitName::parse(&s)
    }
}

impl From<UnitName> for String {
    fn from(n: UnitName) -> String {
        n.full
    }
}

/// When a service is considered ready for its dependents.
///
/// `Simple` is ready as soon as it starts, `Forking` when its start command
/// reaches the fork point, `Oneshot` when the start command completes.
/// Non-service units always behave as `Oneshot` regardless of this field.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum ServiceType {
    #[default]
    Simple,
    Forking,
    Oneshot,
}

impl ServiceType {
    pub fn as_str(self) -> &'static str {
        match self {
            ServiceType::Simple => "simple",
            ServiceType::Forking => "forking",
            ServiceType::Oneshot => "oneshot",
        }
    }
}

/// The dependency relations a unit may declare.
///
/// `Strong` means "launch B after A is ready"; `Weak` means "launch B not
/// before launching A"; `OrderBefore`/`OrderAfter` constrain start order
/// only; `WantedBy` attaches a unit to a target group. Further relation
/// types exist in real service managers but are not modeled here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DependencyKind {
    Strong,
    Weak,
    OrderBefore,
    OrderAfter,
    WantedBy,
}

/// Diagnostic severity. Errors make `analyze` exit nonzero; warnings do not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Warning,
    Error,
}

/// A single finding attached to a unit (or to the tree as a whole).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub unit: Option<UnitName>,
    pub message: String,
}

impl Diagnostic {
    pub fn error(unit: Option<UnitName>, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            severity: Severity::Error,
            unit,
            message: message.into(),
        }
    }

    pub fn warning(unit: Option<UnitName>, message: impl Into<String>) -> Diagnostic {
        Diagnostic {
            severity: Severity::Warning,
            unit,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        match &self.unit {
            Some(u) => write!(f, "{sev}: {u}: {}", self.message),
            None => write!(f, "{sev}: {}", self.message),
        }
    }
}

/// One parsed unit description.
///
/// `exec_duration`, `fork_point`, `deferred`, and `priority` are simulation
/// metadata carried via `X-Sim-*` extension keys; the artifact simulates
/// launches instead of executing `ExecStart`. `boot_critical_hint` lets a
/// fixture mark units it expects the group isolator to find, and must never
/// be read by the isolator itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitFile {
    pub name: UnitName,
    pub description: String,
    /// Declared relations in source order: non-install deps first, then
    /// `WantedBy` entries (the canonical serializer relies on this split).
    pub deps: Vec<(DependencyKind, UnitName)>,
    pub service_type: ServiceType,
    /// Retained verbatim, never executed.
    pub exec_start: Option<String>,
    /// Simulated run time of the start command, in milliseconds.
    pub exec_duration: u64,
    /// Offset of the fork point in milliseconds; present iff `Forking`.
    pub fork_point: Option<u64>,
    pub deferred: bool,
    pub boot_critical_hint: bool,
    /// Higher wins when units contend for a free worker slot.
    pub priority: i32,
}

impl UnitFile {
    /// A unit with the given name and every other field defaulted.
    pub fn new(name: UnitName) -> UnitFile {
        UnitFile {
            name,
            description: String::new(),
            deps: Vec::new(),
            service_type: ServiceType::Simple,
            exec_start: None,
            exec_duration: 0,
            fork_point: None,
            deferred: false,
            boot_critical_hint: false,
            priority: 0,
        }
    }

    /// Readiness semantics actually applied by the scheduler: non-service
    /// units are ready when their action completes, whatever `Type=` says.
    pub fn effective_type(&self) -> ServiceType {
        if self.name.kind() == UnitKind::Service {
            self.service_type
        } else {
            ServiceType::Oneshot
        }
    }

    /// Duration from start to readiness under `effective_type`, in ms.
    pub fn readiness_duration(&self) -> u64 {
        match self.effective_type() {
            ServiceType::Simple => 0,
            ServiceType::Forking => self.fork_point.unwrap_or(0),
            ServiceType::Oneshot => self.exec_duration,
        }
    }
}

/// Check every `UnitFile` invariant. An empty result means the unit is valid;
/// findings are the output, not failures.
pub fn validate_unit(unit: &UnitFile) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let name = unit.name.clone();
    for (_, target) in &unit.deps {
        if *target == unit.name {
            out.push(Diagnostic::error(
                Some(name.clone()),
                "self-dependency".to_string(),
            ));
        }
    }
    match (unit.service_type, unit.fork_point) {
        (ServiceType::Forking, Some(fp)) => {
            if fp > unit.exec_duration {
                out.push(Diagnostic::error(
                    Some(name.clone()),
                    format!(
                        "fork point {fp} ms exceeds exec duration {} ms",
                        unit.exec_duration
                    ),
                ));
            }
        }
        (ServiceType::Forking, None) => {
            out.push(Diagnostic::error(
                Some(name.clone()),
                "forking unit has no fork point".to_string(),
            ));
        }
        (_, Some(_)) => {
            out.push(Diagnostic::error(
                Some(name.clone()),
                "fork point set on a non-forking unit".to_string(),
            ));
        }
        (_, None) => {}
    }
    out
}

/// An immutable collection of units plus the content digest of the source
/// texts it was built from. Safe to share read-only across threads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitSet {
    units: BTreeMap<UnitName, UnitFile>,
    source_digest: [u8; 32],
}

impl UnitSet {
    pub fn new(units: BTreeMap<UnitName, UnitFile>, source_digest: [u8; 32]) -> UnitSet {
        UnitSet {
            units,
            source_digest,
        }
    }

    pub fn units(&self) -> &BTreeMap<UnitName, UnitFile> {
        &self.units
    }

    pub fn get(&self, name: &UnitName) -> Option<&UnitFile> {
        self.units.get(name)
    }

    pub fn contains(&self, name: &UnitName) -> bool {
        self.units.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &UnitName> {
        self.units.keys()
    }

    pub fn source_digest(&self) -> &[u8; 32] {
        &self.source_digest
    }

    /// Dependency targets referenced by some unit but absent from the set.
    /// Lookup is total over the closure once these are accounted for.
    pub fn dangling_targets(&self) -> BTreeSet<UnitName> {
        let mut out = BTreeSet::new();
        for unit in self.units.values() {
            for (_, target) in &unit.deps {
                if !self.units.contains_key(target) {
                    out.insert(target.clone());
                }
            }
        }
        out
    }

    /// Replace a unit's record, keeping the digest. Used by deferral marking,
    /// which changes simulation flags without touching source identity.
    pub fn with_unit(mut self, unit: UnitFile) -> UnitSet {
        self.units.insert(unit.name.clone(), unit);
        self
    }
}
