//! Seed-controlled generation of unit corpora: random dependency graphs for
//! property suites and plain-text unit trees for parser and cache
//! benchmarks. Everything is keyed off an explicit seed so failures
//! reproduce exactly.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::parse::to_canonical_text;
use crate::unit::{DependencyKind, ServiceType, UnitFile, UnitName, UnitSet};
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct GenOptions {
    pub units: usize,
    /// Probability of a dependency between any ordered pair of units.
    pub edge_probability: f64,
    /// Restrict declarations so the normalized graph is a DAG (edges only
    /// run from lower to higher generation index).
    pub dag_only: bool,
    pub max_duration_ms: u64,
    /// Allow Forking/Simple besides Oneshot.
    pub mixed_types: bool,
    pub max_priority: i32,
    /// Probability a unit is marked deferred at generation time.
    pub deferred_probability: f64,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            units: 8,
            edge_probability: 0.25,
            dag_only: true,
            max_duration_ms: 50,
            mixed_types: true,
            max_priority: 3,
            deferred_probability: 0.0,
        }
    }
}

fn unit_name(i: usize) -> UnitName {
    UnitName::parse(&format!("svc{i:03}.service")).unwrap()
}

/// Generate a random unit set. With `dag_only`, every normalized edge runs
/// from a lower-index unit to a higher-index one, so the graph (weak edges
/// included) is acyclic by construction.
pub fn random_unit_set(seed: u64, opts: &GenOptions) -> UnitSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut units: Vec<UnitFile> = (0..opts.units)
        .map(|i| {
            let mut u = UnitFile::new(unit_name(i));
            u.exec_duration = rng.gen_range(0..=opts.max_duration_ms);
            u.service_type = if opts.mixed_types {
                match rng.gen_range(0..3) {
                    0 => ServiceType::Simple,
                    1 => ServiceType::Forking,
                    _ => ServiceType::Oneshot,
                }
            } else {
                ServiceType::Oneshot
            };
            if u.service_type == ServiceType::Forking {
                u.fork_point = Some(rng.gen_range(0..=u.exec_duration));
            }
            u.priority = rng.gen_range(0..=opts.max_priority);
            u.deferred = rng.gen_bool(opts.deferred_probability);
            u
        })
        .collect();

    for hi in 1..opts.units {
        for lo in 0..hi {
            if !rng.gen_bool(opts.edge_probability) {
                continue;
            }
            // Edge lo -> hi, declared through one of the five relation
            // spellings.
            let (declarer, dep) = match rng.gen_range(0..5) {
                0 => (hi, (DependencyKind::Strong, unit_name(lo))),
                1 => (hi, (DependencyKind::Weak, unit_name(lo))),
                2 => (hi, (DependencyKind::OrderAfter, unit_name(lo))),
                3 => (lo, (DependencyKind::OrderBefore, unit_name(hi))),
                _ => (lo, (DependencyKind::WantedBy, unit_name(hi))),
            };
            units[declarer].deps.push(dep);
        }
    }

    if !opts.dag_only {
        // Sprinkle back edges to manufacture cycles.
        for _ in 0..(opts.units.max(2) / 2) {
            let a = rng.gen_range(0..opts.units);
            let b = rng.gen_range(0..opts.units);
            if a == b {
                continue;
            }
            let kind = match rng.gen_range(0..4) {
                0 => DependencyKind::Strong,
                1 => DependencyKind::Weak,
                2 => DependencyKind::OrderAfter,
                _ => DependencyKind::OrderBefore,
            };
            units[a].deps.push((kind, unit_name(b)));
        }
    }

    set_from_units(units)
}

/// Assemble a set from in-memory units, deriving the digest from their
/// canonical texts so equal content hashes equally.
pub fn set_from_units(units: Vec<UnitFile>) -> UnitSet {
    let sources: BTreeMap<UnitName, String> = units
        .iter()
        .map(|u| (u.name.clone(), to_canonical_text(u)))
        .collect();
    let digest = crate::parse::tree_digest(&sources);
    let map = units.into_iter().map(|u| (u.name.clone(), u)).collect();
    UnitSet::new(map, digest)
}

/// A strong chain `svc000 <- svc001 <- ...`, every unit Oneshot with the
/// given duration.
pub fn chain_units(n: usize, duration_ms: u64) -> Vec<UnitFile> {
    (0..n)
        .map(|i| {
            let mut u = UnitFile::new(unit_name(i));
            u.service_type = ServiceType::Oneshot;
            u.exec_duration = duration_ms;
            if i > 0 {
                u.deps.push((DependencyKind::Strong, unit_name(i - 1)));
            }
            u
        })
        .collect()
}

/// Generate `n` parseable unit-file texts shaped like production unit
/// files: header comments, descriptions, multi-target dependency lines, and
/// simulation metadata.
pub fn generate_corpus(seed: u64, n: usize) -> BTreeMap<UnitName, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    for i in 0..n {
        let name = unit_name(i);
        let mut text = format!(
            "# unit description for service {i}\n\
             # maintained by the platform services team\n\n[Unit]\n"
        );
        text.push_str(&format!(
            "Description=generated service {i} handling workload shard {}\n",
            rng.gen_range(0..64)
        ));
        if i > 0 && rng.gen_bool(0.6) {
            let dep = unit_name(rng.gen_range(0..i));
            let key = ["Requires", "Wants", "After"][rng.gen_range(0..3)];
            text.push_str(&format!("{key}={dep}\n"));
        }
        if i > 2 && rng.gen_bool(0.5) {
            let a = unit_name(rng.gen_range(0..i));
            let b = unit_name(rng.gen_range(0..i));
            text.push_str(&format!("After={a} {b}\n"));
        }
        text.push_str(&format!("X-Sim-Duration={}\n", rng.gen_range(1..200)));
        if rng.gen_bool(0.3) {
            text.push_str(&format!("X-Sim-Priority={}\n", rng.gen_range(0..5)));
        }
        text.push_str("\n[Service]\n");
        let ty = ["simple", "oneshot"][rng.gen_range(0..2)];
        text.push_str(&format!("Type={ty}\n"));
        text.push_str(&format!(
            "ExecStart=/usr/bin/svc{i:03} --shard {} --verbose\n",
            rng.gen_range(0..64)
        ));
        out.insert(name, text);
    }
    out
}
