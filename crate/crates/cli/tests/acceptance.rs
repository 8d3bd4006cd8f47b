//! Acceptance suite: one test per criterion, each printing a verdict line.
//! Run with `cargo test -p bb-cli --test acceptance -- --nocapture` to see
//! every line; tolerances are pinned in the constants below.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use bb_core::cache::{decode_cache, encode_cache, CacheError};
use bb_core::gen::{chain_units, generate_corpus, random_unit_set, set_from_units, GenOptions};
use bb_core::graph::{build_graph, detect_cycles, isolate_bb_group, EdgeKind, ServiceGraph};
use bb_core::parse::parse_tree;
use bb_core::sim::{simulate_boot, DeferPolicy, Micros, ScheduleTrace, SimConfig};
use bb_core::unit::{Severity, UnitFile, UnitName, UnitSet};
use bb_sync::{bench_contention, BenchMode, GracePeriodDomain, SyncMode};

const TOTAL_TOLERANCE: f64 = 0.10; // criterion 1: +-10% of 8.1 s / 3.5 s
const ISOLATION_START_RATIO: f64 = 0.5; // criterion 2
const SYNC_SAVING_US: Micros = 2_801_600; // criterion 3: 136 * 20.6 ms
const ORACLE_INSTANCES: usize = 200; // criterion 4
const SAFETY_INSTANCES: usize = 1_000; // criterion 5
const CYCLE_INSTANCES: usize = 500; // criterion 6
const GROUP_INSTANCES: usize = 500; // criterion 7
const CACHE_INSTANCES: usize = 500; // criterion 8
const CACHE_SPEEDUP_MIN: f64 = 5.0; // criterion 8
const STRESS_SECTIONS: u64 = 1_000_000; // criterion 9
const STRESS_TOGGLES: usize = 1_000; // criterion 9
const CONTENTION_RATIO: f64 = 3.0; // criterion 10: boosted <= conventional/3
const COVERAGE_CALLERS: usize = 16; // criterion 11

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn load_fixture_set(dir: &Path) -> UnitSet {
    let mut sources = BTreeMap::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.unwrap();
        if !entry.file_type().is_file() {
            continue;
        }
        let Ok(name) = UnitName::parse(entry.file_name().to_str().unwrap()) else {
            continue;
        };
        sources.insert(name, std::fs::read_to_string(entry.path()).unwrap());
    }
    parse_tree(&sources).unwrap().0
}

fn name(s: &str) -> UnitName {
    UnitName::parse(s).unwrap()
}

fn verdict(criterion: &str, detail: String) {
    println!("acceptance: {criterion}: PASS — {detail}");
}

// ---------------------------------------------------------------------
// Criterion 1: calibrated end-to-end reproduction through the CLI.
// ---------------------------------------------------------------------

#[test]
fn criterion_01_calibrated_reproduction() {
    let tmp = tempfile::tempdir().unwrap();
    let tv = fixtures().join("tv");
    let conf = tv.join("sim.conf");
    let t0 = Instant::now();
    let mut totals = Vec::new();
    for flag in ["off", "on"] {
        let out_path = tmp.path().join(format!("{flag}.json"));
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_bb"))
            .args([
                "simulate",
                tv.to_str().unwrap(),
                "--config",
                conf.to_str().unwrap(),
                "--bb",
                flag,
                "--out",
                out_path.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{out:?}");
        let trace = ScheduleTrace::from_json(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
        totals.push(trace.boot_completed_at);
    }
    let elapsed = t0.elapsed();

    let off_ms = totals[0] as f64 / 1000.0;
    let on_ms = totals[1] as f64 / 1000.0;
    assert!(
        (off_ms - 8100.0).abs() <= 8100.0 * TOTAL_TOLERANCE,
        "bb off total {off_ms} ms outside 8100 +-10%"
    );
    assert!(
        (on_ms - 3500.0).abs() <= 3500.0 * TOTAL_TOLERANCE,
        "bb on total {on_ms} ms outside 3500 +-10%"
    );
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    verdict(
        "criterion 01 (calibrated reproduction)",
        format!("bb off {off_ms:.1} ms, bb on {on_ms:.1} ms, runtime {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------
// Criterion 2: the ipc-hub isolation case study.
// ---------------------------------------------------------------------

#[test]
fn criterion_02_isolation_case_study() {
    let t0 = Instant::now();
    let set = load_fixture_set(&fixtures().join("dbus-isolation"));
    let completion = BTreeSet::from([name("dbus.service")]);
    let dbus = name("dbus.service");

    let baseline_cfg = SimConfig::default(); // conventional overhead, no group
    let baseline = simulate_boot(&set, &baseline_cfg, &completion).unwrap();

    let graph = build_graph(&set);
    let group = isolate_bb_group(&graph, &completion).unwrap();
    let boosted_cfg = SimConfig {
        bb_group: Some(group),
        defer_policy: DeferPolicy::DeferAll,
        rcu_overhead_per_start_us: bb_core::sim::RCU_OVERHEAD_BOOSTED_US,
        ..SimConfig::default()
    };
    let isolated = simulate_boot(&set, &boosted_cfg, &completion).unwrap();

    let base_start = baseline.unit(&dbus).unwrap().started_at;
    let iso_start = isolated.unit(&dbus).unwrap().started_at;
    let ratio = iso_start as f64 / base_start as f64;
    let elapsed = t0.elapsed();
    assert!(
        ratio <= ISOLATION_START_RATIO,
        "isolated start {iso_start} us vs baseline {base_start} us: ratio {ratio:.2} > 0.5"
    );
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    verdict(
        "criterion 02 (isolation case study)",
        format!(
            "ipc hub start {:.1} ms isolated vs {:.1} ms baseline (ratio {ratio:.2})",
            iso_start as f64 / 1000.0,
            base_start as f64 / 1000.0
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 3: per-service sync saving identity, exact in microseconds.
// ---------------------------------------------------------------------

#[test]
fn criterion_03_sync_saving_identity() {
    let set = set_from_units(chain_units(136, 10));
    let completion = BTreeSet::from([name("svc135.service")]);
    let mut totals = Vec::new();
    for overhead in [
        bb_core::sim::RCU_OVERHEAD_CONVENTIONAL_US,
        bb_core::sim::RCU_OVERHEAD_BOOSTED_US,
    ] {
        let cfg = SimConfig {
            rcu_overhead_per_start_us: overhead,
            workers: 1,
            ..SimConfig::default()
        };
        totals.push(
            simulate_boot(&set, &cfg, &completion)
                .unwrap()
                .boot_completed_at,
        );
    }
    let diff = totals[0] - totals[1];
    assert_eq!(
        diff, SYNC_SAVING_US,
        "expected exactly {SYNC_SAVING_US} us of saving, got {diff}"
    );
    verdict(
        "criterion 03 (sync saving identity)",
        format!("136 units x 20.6 ms = {} us exactly", diff),
    );
}

// ---------------------------------------------------------------------
// Criterion 4: scheduler agrees with brute-force schedule enumeration.
// ---------------------------------------------------------------------

/// Scheduling semantics reduced to plain data for the oracle.
struct OracleInput {
    n: usize,
    ready_preds: Vec<Vec<usize>>,
    start_preds: Vec<Vec<usize>>,
    readiness_duration: Vec<Micros>,
    priority: Vec<i32>,
    names: Vec<UnitName>,
    workers: usize,
    overhead: Micros,
}

fn oracle_input(set: &UnitSet, graph: &ServiceGraph, workers: usize, overhead: Micros) -> OracleInput {
    let names: Vec<UnitName> = graph.nodes().to_vec();
    let idx: BTreeMap<&UnitName, usize> = names.iter().enumerate().map(|(i, n)| (n, i)).collect();
    let n = names.len();
    let mut ready_preds = vec![Vec::new(); n];
    let mut start_preds = vec![Vec::new(); n];
    for e in graph.edges() {
        let f = idx[&e.from];
        let t = idx[&e.to];
        match e.kind {
            EdgeKind::Strong | EdgeKind::WantedBy => ready_preds[t].push(f),
            EdgeKind::Ordering | EdgeKind::Weak => start_preds[t].push(f),
        }
    }
    OracleInput {
        n,
        ready_preds,
        start_preds,
        readiness_duration: names
            .iter()
            .map(|nm| bb_core::sim::ms_to_us(set.get(nm).unwrap().readiness_duration()))
            .collect(),
        priority: names.iter().map(|nm| set.get(nm).unwrap().priority).collect(),
        names,
        workers,
        overhead,
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
struct OracleState {
    now: Micros,
    // Claim time per unit; None when still waiting.
    claims: Vec<Option<Micros>>,
}

impl OracleInput {
    fn started(&self, claims: &[Option<Micros>], i: usize) -> Option<Micros> {
        claims[i].map(|c| c + self.overhead)
    }

    fn ready(&self, claims: &[Option<Micros>], i: usize) -> Option<Micros> {
        self.started(claims, i).map(|s| s + self.readiness_duration[i])
    }

    fn eligible_at(&self, claims: &[Option<Micros>], i: usize, now: Micros) -> bool {
        claims[i].is_none()
            && self.ready_preds[i]
                .iter()
                .all(|&p| self.ready(claims, p).map_or(false, |t| t <= now))
            && self.start_preds[i]
                .iter()
                .all(|&p| self.started(claims, p).map_or(false, |t| t <= now))
    }

    fn busy_at(&self, claims: &[Option<Micros>], now: Micros) -> usize {
        (0..self.n)
            .filter(|&i| {
                claims[i].map_or(false, |c| c <= now)
                    && self.ready(claims, i).map_or(false, |r| r > now)
            })
            .count()
    }

    fn next_event(&self, claims: &[Option<Micros>], now: Micros) -> Option<Micros> {
        let mut next = None;
        for i in 0..self.n {
            for t in [self.started(claims, i), self.ready(claims, i)] {
                if let Some(t) = t {
                    if t > now {
                        next = Some(next.map_or(t, |n: Micros| n.min(t)));
                    }
                }
            }
        }
        next
    }

    fn makespan(&self, claims: &[Option<Micros>]) -> Micros {
        (0..self.n)
            .filter_map(|i| self.ready(claims, i))
            .max()
            .unwrap_or(0)
    }

    /// All completion times reachable by any work-conserving schedule.
    fn enumerate_feasible(&self) -> BTreeSet<Micros> {
        let mut outcomes = BTreeSet::new();
        let mut seen = BTreeSet::new();
        let mut stack = vec![OracleState {
            now: 0,
            claims: vec![None; self.n],
        }];
        while let Some(state) = stack.pop() {
            if !seen.insert(state.clone()) {
                continue;
            }
            let candidates: Vec<usize> = (0..self.n)
                .filter(|&i| self.eligible_at(&state.claims, i, state.now))
                .collect();
            let free = self.workers.saturating_sub(self.busy_at(&state.claims, state.now));
            if free > 0 && !candidates.is_empty() {
                for i in candidates {
                    let mut next = state.clone();
                    next.claims[i] = Some(state.now);
                    stack.push(next);
                }
                continue;
            }
            match self.next_event(&state.claims, state.now) {
                Some(t) => stack.push(OracleState {
                    now: t,
                    claims: state.claims,
                }),
                None => {
                    if state.claims.iter().all(|c| c.is_some()) {
                        outcomes.insert(self.makespan(&state.claims));
                    }
                    // A stuck partial schedule cannot happen on a DAG with
                    // work conservation; dropping it would be a bug.
                    assert!(
                        state.claims.iter().all(|c| c.is_some()),
                        "oracle wedged with unclaimed units"
                    );
                }
            }
        }
        outcomes
    }

    /// The one schedule selected by the claim rule: priority first (higher
    /// wins), then name. Recomputed from scratch each step; shares nothing
    /// with the simulator's event loop.
    fn priority_schedule(&self) -> Micros {
        let mut claims: Vec<Option<Micros>> = vec![None; self.n];
        let mut now = 0;
        loop {
            loop {
                let free = self.workers.saturating_sub(self.busy_at(&claims, now));
                if free == 0 {
                    break;
                }
                let pick = (0..self.n)
                    .filter(|&i| self.eligible_at(&claims, i, now))
                    .min_by_key(|&i| (-self.priority[i], self.names[i].clone()));
                match pick {
                    Some(i) => claims[i] = Some(now),
                    None => break,
                }
            }
            match self.next_event(&claims, now) {
                Some(t) => now = t,
                None => break,
            }
        }
        assert!(claims.iter().all(|c| c.is_some()));
        self.makespan(&claims)
    }
}

#[test]
fn criterion_04_scheduler_oracle() {
    let t0 = Instant::now();
    for seed in 0..ORACLE_INSTANCES as u64 {
        let units = 2 + (seed as usize % 5); // up to 6
        let workers = 1 + (seed as usize % 2); // up to 2
        let overhead = if seed % 2 == 0 { 0 } else { 700 };
        let set = random_unit_set(
            seed,
            &GenOptions {
                units,
                edge_probability: 0.4,
                max_duration_ms: 30,
                ..GenOptions::default()
            },
        );
        let cfg = SimConfig {
            workers,
            rcu_overhead_per_start_us: overhead,
            ..SimConfig::default()
        };
        let completion: BTreeSet<UnitName> = set.names().cloned().collect();
        let trace = simulate_boot(&set, &cfg, &completion).unwrap();

        let graph = build_graph(&set);
        let oracle = oracle_input(&set, &graph, workers, overhead);
        let feasible = oracle.enumerate_feasible();
        let by_rule = oracle.priority_schedule();

        assert!(
            feasible.contains(&trace.boot_completed_at),
            "seed {seed}: completion {} not among feasible {:?}",
            trace.boot_completed_at,
            feasible
        );
        assert_eq!(
            trace.boot_completed_at, by_rule,
            "seed {seed}: simulator disagrees with the independent executor"
        );
    }
    let elapsed = t0.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    verdict(
        "criterion 04 (scheduler oracle)",
        format!("{ORACLE_INSTANCES} instances agree with schedule enumeration in {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------
// Criterion 5: ordering safety and determinism over random graphs.
// ---------------------------------------------------------------------

#[test]
fn criterion_05_ordering_safety() {
    for seed in 0..SAFETY_INSTANCES as u64 {
        let set = random_unit_set(
            seed,
            &GenOptions {
                units: 3 + (seed as usize % 10),
                edge_probability: 0.3,
                ..GenOptions::default()
            },
        );
        let cfg = SimConfig {
            workers: 1 + (seed as usize % 4),
            rcu_overhead_per_start_us: [0, 500, 23_700][seed as usize % 3],
            ..SimConfig::default()
        };
        let names: Vec<&UnitName> = set.names().collect();
        let completion = BTreeSet::from([names[seed as usize % names.len()].clone()]);
        let trace = simulate_boot(&set, &cfg, &completion).unwrap();

        let graph = build_graph(&set);
        for e in graph.edges() {
            let from = trace.unit(&e.from).unwrap();
            let to = trace.unit(&e.to).unwrap();
            match e.kind {
                EdgeKind::Strong | EdgeKind::WantedBy => assert!(
                    from.ready_at <= to.started_at,
                    "seed {seed}: strong violation {} -> {}",
                    e.from,
                    e.to
                ),
                EdgeKind::Ordering | EdgeKind::Weak => assert!(
                    from.started_at <= to.started_at,
                    "seed {seed}: ordering violation {} -> {}",
                    e.from,
                    e.to
                ),
            }
        }
        if seed % 10 == 0 {
            let again = simulate_boot(&set, &cfg, &completion).unwrap();
            assert_eq!(trace.to_json(), again.to_json(), "seed {seed}: nondeterminism");
        }
    }
    verdict(
        "criterion 05 (ordering safety)",
        format!("{SAFETY_INSTANCES} random graphs, zero violations, traces byte-identical"),
    );
}

// ---------------------------------------------------------------------
// Criterion 6: cycle detection vs brute force; the cross-group fixture.
// ---------------------------------------------------------------------

fn brute_force_cycles(g: &ServiceGraph) -> BTreeSet<(Vec<String>, Severity)> {
    let nodes: Vec<&UnitName> = g.nodes().iter().collect();
    let idx: BTreeMap<&UnitName, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut arcs = BTreeSet::new();
    let mut hard = BTreeSet::new();
    for e in g.edges() {
        let a = (idx[&e.from], idx[&e.to]);
        arcs.insert(a);
        if e.kind.is_hard() {
            hard.insert(a);
        }
    }
    let n = nodes.len();
    let mut found = BTreeSet::new();
    for start in 0..n {
        let mut stack = vec![vec![start]];
        while let Some(path) = stack.pop() {
            let last = *path.last().unwrap();
            for next in 0..n {
                if !arcs.contains(&(last, next)) {
                    continue;
                }
                if next == start && path.len() >= 2 {
                    let all_hard = path
                        .iter()
                        .zip(path.iter().cycle().skip(1))
                        .take(path.len())
                        .all(|(&a, &b)| hard.contains(&(a, b)));
                    found.insert((
                        path.iter().map(|&i| nodes[i].to_string()).collect(),
                        if all_hard { Severity::Error } else { Severity::Warning },
                    ));
                } else if next > start && !path.contains(&next) {
                    let mut p = path.clone();
                    p.push(next);
                    stack.push(p);
                }
            }
        }
    }
    found
}

#[test]
fn criterion_06_cycle_oracle() {
    for seed in 0..CYCLE_INSTANCES as u64 {
        let set = random_unit_set(
            seed,
            &GenOptions {
                units: 3 + (seed as usize % 8), // up to 10
                edge_probability: 0.35,
                dag_only: false,
                ..GenOptions::default()
            },
        );
        let g = build_graph(&set);
        let got: BTreeSet<(Vec<String>, Severity)> = detect_cycles(&g)
            .cycles
            .into_iter()
            .map(|c| (c.nodes.iter().map(|n| n.to_string()).collect(), c.severity))
            .collect();
        assert_eq!(got, brute_force_cycles(&g), "seed {seed}");
    }

    let set = load_fixture_set(&fixtures().join("groups-cycle"));
    let report = detect_cycles(&build_graph(&set));
    assert_eq!(report.cycles.len(), 1, "expected exactly one cross-group cycle");
    assert_eq!(report.cycles[0].nodes.len(), 3);
    verdict(
        "criterion 06 (cycle oracle)",
        format!("{CYCLE_INSTANCES} instances match brute force; fixture reports 1 cycle"),
    );
}

// ---------------------------------------------------------------------
// Criterion 7: group invariants and schedule-invariant removal.
// ---------------------------------------------------------------------

#[test]
fn criterion_07_group_invariants() {
    use bb_core::unit::DependencyKind;

    for seed in 0..GROUP_INSTANCES as u64 {
        let set = random_unit_set(
            seed,
            &GenOptions {
                units: 10,
                edge_probability: 0.25,
                ..GenOptions::default()
            },
        );
        let g = build_graph(&set);
        let names: Vec<&UnitName> = set.names().collect();
        let c1 = BTreeSet::from([names[seed as usize % names.len()].clone()]);
        let c2 = BTreeSet::from([names[(seed as usize * 5 + 2) % names.len()].clone()]);

        // Union closure.
        let m1 = isolate_bb_group(&g, &c1).unwrap().members;
        let m2 = isolate_bb_group(&g, &c2).unwrap().members;
        let union: BTreeSet<UnitName> = c1.union(&c2).cloned().collect();
        let mu = isolate_bb_group(&g, &union).unwrap().members;
        assert_eq!(
            mu,
            m1.union(&m2).cloned().collect::<BTreeSet<_>>(),
            "seed {seed}: union closure"
        );

        // Monotonicity: strong edge into a member only grows the group.
        let member = m1.iter().next().unwrap().clone();
        let mut units: Vec<UnitFile> = set.units().values().cloned().collect();
        units.push(UnitFile::new(name("zz-extra.service")));
        for u in units.iter_mut() {
            if u.name == member {
                u.deps
                    .push((DependencyKind::Strong, name("zz-extra.service")));
            }
        }
        let grown = isolate_bb_group(&build_graph(&set_from_units(units)), &c1)
            .unwrap()
            .members;
        assert!(grown.is_superset(&m1), "seed {seed}: monotonicity");
        assert!(grown.contains(&name("zz-extra.service")), "seed {seed}");
    }

    // Removal invariance, checked through the simulator on <=10-node sets.
    for seed in 0..150u64 {
        let set = random_unit_set(
            seed,
            &GenOptions {
                units: 10,
                edge_probability: 0.3,
                ..GenOptions::default()
            },
        );
        let names: Vec<&UnitName> = set.names().collect();
        let completion = BTreeSet::from([names[(seed as usize * 13 + 5) % names.len()].clone()]);
        let graph = build_graph(&set);
        let group = isolate_bb_group(&graph, &completion).unwrap();
        let cfg = SimConfig {
            workers: 2,
            rcu_overhead_per_start_us: 700,
            bb_group: Some(group.clone()),
            defer_policy: DeferPolicy::DeferAll,
            ..SimConfig::default()
        };
        let full = simulate_boot(&set, &cfg, &completion).unwrap();

        let reduced_units: Vec<UnitFile> = set
            .units()
            .values()
            .filter(|u| group.members.contains(&u.name))
            .map(|u| {
                let mut u = u.clone();
                u.deps.retain(|(_, t)| group.members.contains(t));
                u
            })
            .collect();
        let reduced = simulate_boot(&set_from_units(reduced_units), &cfg, &completion).unwrap();
        for m in &group.members {
            assert_eq!(
                full.unit(m).unwrap().ready_at,
                reduced.unit(m).unwrap().ready_at,
                "seed {seed}: member {m} readiness changed when outsiders were removed"
            );
        }
    }
    verdict(
        "criterion 07 (group invariants)",
        format!("{GROUP_INSTANCES} instances: monotone + union-closed; removal leaves members untouched"),
    );
}

// ---------------------------------------------------------------------
// Criterion 8: cache round-trip, corruption detection, decode speedup.
// ---------------------------------------------------------------------

#[test]
fn criterion_08_preparser() {
    // Round-trip identity over random sets.
    for seed in 0..CACHE_INSTANCES as u64 {
        let set = random_unit_set(
            seed,
            &GenOptions {
                units: 1 + (seed as usize % 25),
                edge_probability: 0.3,
                dag_only: seed % 2 == 0,
                deferred_probability: 0.2,
                ..GenOptions::default()
            },
        );
        assert_eq!(decode_cache(&encode_cache(&set)).unwrap(), set, "seed {seed}");
    }

    // Any single corrupted payload byte is detected: exhaustive on a small
    // image, sampled across a large one.
    let small = random_unit_set(1, &GenOptions { units: 3, ..GenOptions::default() });
    let image = encode_cache(&small);
    let payload = 50..image.len() - 8;
    for pos in payload.clone() {
        let mut c = image.clone();
        c[pos] ^= 0xa5;
        assert!(matches!(decode_cache(&c), Err(CacheError::Corrupt(_))), "byte {pos}");
    }

    let sources = generate_corpus(0, 250);
    let (set, _) = parse_tree(&sources).unwrap();
    let big = encode_cache(&set);
    for pos in (50..big.len() - 8).step_by(97) {
        let mut c = big.clone();
        c[pos] ^= 0x01;
        assert!(matches!(decode_cache(&c), Err(CacheError::Corrupt(_))), "byte {pos}");
    }

    // Decoding the 250-unit cache must beat parsing the corpus from text by
    // at least 5x. Samples interleave so load drift hits both sides alike;
    // compare the medians.
    let mut parse_samples = Vec::new();
    let mut decode_samples = Vec::new();
    for _ in 0..15 {
        let t = Instant::now();
        std::hint::black_box(parse_tree(&sources).unwrap());
        parse_samples.push(t.elapsed());
        let t = Instant::now();
        std::hint::black_box(decode_cache(&big).unwrap());
        decode_samples.push(t.elapsed());
    }
    parse_samples.sort();
    decode_samples.sort();
    let parse_time = parse_samples[parse_samples.len() / 2];
    let decode_time = decode_samples[decode_samples.len() / 2];
    let speedup = parse_time.as_secs_f64() / decode_time.as_secs_f64();
    assert!(
        speedup >= CACHE_SPEEDUP_MIN,
        "decode {decode_time:?} vs parse {parse_time:?}: only {speedup:.1}x"
    );
    verdict(
        "criterion 08 (pre-parser)",
        format!(
            "{CACHE_INSTANCES} round trips; every byte flip detected; decode {speedup:.1}x faster ({decode_time:?} vs {parse_time:?})"
        ),
    );
}

// ---------------------------------------------------------------------
// Criterion 9: grace-period safety stress with canary reclamation.
// ---------------------------------------------------------------------

struct CanaryArena {
    alive: Vec<std::sync::atomic::AtomicBool>,
    current: std::sync::atomic::AtomicUsize,
    violations: std::sync::atomic::AtomicU64,
    sections: std::sync::atomic::AtomicU64,
}

fn stress_phase(
    readers: usize,
    writers: usize,
    updates_per_writer: usize,
    min_sections: u64,
    mode: Option<SyncMode>,
    toggles: usize,
) -> (u64, u64) {
    use std::sync::atomic::Ordering::SeqCst;

    let domain = GracePeriodDomain::new(readers);
    domain.set_conventional_timeout(Duration::from_secs(60));
    if let Some(m) = mode {
        domain.set_mode(m);
    }
    let arena = CanaryArena {
        alive: (0..writers * updates_per_writer + 1)
            .map(|i| std::sync::atomic::AtomicBool::new(i == 0))
            .collect(),
        current: std::sync::atomic::AtomicUsize::new(0),
        violations: std::sync::atomic::AtomicU64::new(0),
        sections: std::sync::atomic::AtomicU64::new(0),
    };
    let next_slot = std::sync::atomic::AtomicUsize::new(1);
    let writers_done = std::sync::atomic::AtomicBool::new(false);

    std::thread::scope(|s| {
        for _ in 0..readers {
            s.spawn(|| {
                let slot = domain.register_reader().unwrap();
                let mut local = 0u64;
                loop {
                    {
                        let _g = slot.enter();
                        let idx = arena.current.load(SeqCst);
                        if !arena.alive[idx].load(SeqCst) {
                            arena.violations.fetch_add(1, SeqCst);
                        }
                    }
                    local += 1;
                    if local % 512 == 0 {
                        arena.sections.fetch_add(512, SeqCst);
                        if writers_done.load(SeqCst)
                            && arena.sections.load(SeqCst) >= min_sections
                        {
                            break;
                        }
                        std::thread::yield_now();
                    }
                }
            });
        }
        if toggles > 0 {
            s.spawn(|| {
                let mut flip = false;
                for _ in 0..toggles {
                    flip = !flip;
                    domain.set_mode(if flip { SyncMode::Boosted } else { SyncMode::Conventional });
                    std::thread::sleep(Duration::from_micros(200));
                }
            });
        }
        let mut handles = Vec::new();
        for _ in 0..writers {
            handles.push(s.spawn(|| {
                for _ in 0..updates_per_writer {
                    let next = next_slot.fetch_add(1, SeqCst);
                    arena.alive[next].store(true, SeqCst);
                    let old = arena.current.swap(next, SeqCst);
                    domain.synchronize().unwrap();
                    arena.alive[old].store(false, SeqCst); // reclaim
                }
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        writers_done.store(true, SeqCst);
    });

    (
        arena.violations.load(std::sync::atomic::Ordering::SeqCst),
        arena.sections.load(std::sync::atomic::Ordering::SeqCst),
    )
}

#[test]
fn criterion_09_grace_period_safety() {
    let t0 = Instant::now();
    let per_phase = STRESS_SECTIONS / 3 + 1;
    let mut total_sections = 0;
    for (mode, toggles) in [
        (Some(SyncMode::Conventional), 0),
        (Some(SyncMode::Boosted), 0),
        (None, STRESS_TOGGLES),
    ] {
        let (violations, sections) = stress_phase(8, 4, 120, per_phase, mode, toggles);
        assert_eq!(violations, 0, "use-after-reclaim observed ({mode:?})");
        total_sections += sections;
    }
    let elapsed = t0.elapsed();
    assert!(total_sections >= STRESS_SECTIONS);
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    verdict(
        "criterion 09 (grace-period safety)",
        format!("{total_sections} sections, zero violations, {STRESS_TOGGLES} toggles, {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------
// Criterion 10: contention direction (environment-sensitive, needs >= 4
// hardware threads per its own statement).
// ---------------------------------------------------------------------

#[test]
fn criterion_10_contention_direction() {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);

    let contended_conv = bench_contention(8, 16, 15, BenchMode::Conventional).unwrap();
    let contended_boost = bench_contention(8, 16, 15, BenchMode::Boosted).unwrap();
    let un_conv = bench_contention(1, 1, 200, BenchMode::Conventional).unwrap();
    let un_boost = bench_contention(1, 1, 200, BenchMode::Boosted).unwrap();

    let detail = format!(
        "contended mean {} vs {} ns; uncontended burn {} spins vs {} switches",
        contended_conv.mean_ns, contended_boost.mean_ns, un_conv.cpu_burn_proxy,
        un_boost.cpu_burn_proxy
    );

    if threads < 4 {
        println!(
            "acceptance: criterion 10 (contention direction): SKIPPED — requires >= 4 hardware \
             threads, found {threads}; informational: {detail}"
        );
        return;
    }
    assert!(
        (contended_boost.mean_ns as f64) <= contended_conv.mean_ns as f64 / CONTENTION_RATIO,
        "boosted {} ns not <= 1/3 of conventional {} ns",
        contended_boost.mean_ns,
        contended_conv.mean_ns
    );
    assert!(
        un_conv.cpu_burn_proxy <= un_boost.cpu_burn_proxy,
        "uncontended spin burn {} exceeds boosted switch burn {}",
        un_conv.cpu_burn_proxy,
        un_boost.cpu_burn_proxy
    );
    verdict("criterion 10 (contention direction)", detail);
}

// ---------------------------------------------------------------------
// Criterion 11: snapshot coverage bounds grace periods.
// ---------------------------------------------------------------------

#[test]
fn criterion_11_snapshot_coverage() {
    let mut total_covered = 0u64;
    for attempt in 0..10 {
        let domain = GracePeriodDomain::new(4);
        let barrier = std::sync::Barrier::new(COVERAGE_CALLERS);
        let mut covered = 0u64;
        let mut executed = 0u64;
        std::thread::scope(|s| {
            let mut handles = Vec::new();
            for _ in 0..COVERAGE_CALLERS {
                let domain = &domain;
                let barrier = &barrier;
                handles.push(s.spawn(move || {
                    barrier.wait();
                    domain.synchronize_boosted()
                }));
            }
            for h in handles {
                let stats = h.join().unwrap();
                if stats.covered_by_snapshot {
                    covered += 1;
                    assert!(!stats.grace_period_executed);
                } else {
                    executed += 1;
                }
            }
        });
        assert!(
            domain.grace_periods() <= COVERAGE_CALLERS as u64,
            "more grace periods than callers"
        );
        assert_eq!(domain.grace_periods(), executed);
        total_covered += covered;
        if total_covered >= 1 {
            verdict(
                "criterion 11 (snapshot coverage)",
                format!(
                    "attempt {attempt}: {executed} grace periods for {COVERAGE_CALLERS} callers, {covered} covered"
                ),
            );
            return;
        }
    }
    panic!("no caller ever returned via snapshot coverage");
}
