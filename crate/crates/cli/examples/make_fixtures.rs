//! Regenerate the checked-in fixture trees under `fixtures/`.
//!
//! Usage: `cargo run -p bb-cli --example make_fixtures [--check]`
//!
//! `--check` additionally simulates the tv fixture both ways and prints the
//! calibration numbers the acceptance suite relies on.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use bb_core::graph::{build_graph, isolate_bb_group};
use bb_core::parse::to_canonical_text;
use bb_core::sim::config::SimConfigFile;
use bb_core::sim::simulate_boot;
use bb_core::unit::{DependencyKind, ServiceType, UnitFile, UnitName};

fn name(s: &str) -> UnitName {
    UnitName::parse(s).unwrap()
}

fn unit(n: &str) -> UnitFile {
    UnitFile::new(name(n))
}

fn write_units(dir: &Path, units: &[UnitFile]) {
    std::fs::create_dir_all(dir).unwrap();
    for u in units {
        let path = dir.join(u.name.as_str());
        std::fs::write(path, to_canonical_text(u)).unwrap();
    }
}

/// The seven boot-critical services: mount -> socket -> ipc hub -> three
/// hardware pipelines -> the channel app.
fn tv7_units() -> Vec<UnitFile> {
    let mut var_mount = unit("var.mount");
    var_mount.description = "Mount the /var directory".into();
    var_mount.exec_duration = 500;

    let mut socket = unit("socket.service");
    socket.description = "Socket setup".into();
    socket.service_type = ServiceType::Oneshot;
    socket.exec_duration = 350;
    socket.deps = vec![(DependencyKind::Strong, name("var.mount"))];

    let mut dbus = unit("dbus.service");
    dbus.description = "IPC message bus".into();
    dbus.service_type = ServiceType::Oneshot;
    dbus.exec_duration = 650;
    dbus.deps = vec![(DependencyKind::Strong, name("socket.service"))];

    let mut pipeline = |n: &str, dur: u64, fork: u64| {
        let mut u = unit(n);
        u.description = format!("{} pipeline", &n[..n.len() - 8]);
        u.service_type = ServiceType::Forking;
        u.exec_duration = dur;
        u.fork_point = Some(fork);
        u.deps = vec![(DependencyKind::Strong, name("dbus.service"))];
        u.boot_critical_hint = true;
        u
    };
    let tuner = pipeline("tuner.service", 1200, 700);
    let hdmi = pipeline("hdmi.service", 1100, 680);
    let demux = pipeline("demux.service", 1150, 690);

    let mut fasttv = unit("fasttv.service");
    fasttv.description = "Fast channel display".into();
    fasttv.service_type = ServiceType::Oneshot;
    fasttv.exec_duration = 800;
    fasttv.deps = vec![
        (DependencyKind::Strong, name("tuner.service")),
        (DependencyKind::Strong, name("hdmi.service")),
        (DependencyKind::Strong, name("demux.service")),
    ];

    let mut out = vec![var_mount, socket, dbus, tuner, hdmi, demux, fasttv];
    for u in &mut out {
        u.boot_critical_hint = true;
        u.exec_start = Some(format!("/usr/bin/{}", u.name.base()));
    }
    out
}

/// The full 136-unit tree: the seven critical services plus 129 outsiders
/// with assorted chains and a dozen ordering declarations onto var.mount.
fn tv_units() -> Vec<UnitFile> {
    let mut units = tv7_units();

    // A dozen services that want to start before the critical mount.
    for i in 0..12 {
        let mut u = unit(&format!("eager{i:02}.service"));
        u.description = format!("eager app {i}");
        u.service_type = ServiceType::Oneshot;
        u.exec_duration = 110;
        u.deps = vec![(DependencyKind::OrderBefore, name("var.mount"))];
        u.priority = 5;
        u.exec_start = Some(format!("/usr/bin/eager{i:02}"));
        units.push(u);
    }

    // The remaining 117 services: chains of three across name groups that
    // straddle the member names alphabetically.
    let prefixes = ["app", "net", "media", "sys", "ui", "update", "voice", "widget", "zz"];
    let mut made = 0;
    'outer: for chain in 0.. {
        for (p, prefix) in prefixes.iter().enumerate() {
            if made == 117 {
                break 'outer;
            }
            let depth = chain % 3;
            let mut u = unit(&format!("{prefix}{chain:02}.service"));
            u.description = format!("{prefix} service {chain}");
            u.service_type = if (chain + p) % 4 == 0 {
                ServiceType::Simple
            } else {
                ServiceType::Oneshot
            };
            u.exec_duration = 50 + ((chain * 37 + p * 53) % 160) as u64;
            if u.service_type == ServiceType::Simple {
                // Daemons hold no worker after start; give them some run
                // time for chart realism.
                u.exec_duration += 300;
            }
            if depth > 0 && chain >= 1 {
                let parent = format!("{prefix}{:02}.service", chain - 1);
                u.deps = vec![(DependencyKind::Strong, name(&parent))];
            }
            if (chain + p) % 5 == 0 {
                u.deps
                    .push((DependencyKind::Weak, name("widget00.service")));
            }
            // Teams bump their own priorities to look fast; isolation is
            // what keeps this from hurting the critical chain.
            u.priority = ((chain + p) % 3) as i32;
            u.exec_start = Some(format!("/usr/bin/{prefix}{chain:02}"));
            units.push(u);
            made += 1;
        }
    }
    assert_eq!(units.len(), 136);
    units
}

const TV_SIM_CONF: &str = "\
# Boot simulation settings for the tv fixture. Plain sections describe the
# conventional boot; Boosted sections and the bb switch cover the fast path.
[Sim]
Workers=4
Seed=0
Completion=fasttv.service
RcuOverheadConventional=23.7
RcuOverheadBoosted=3.1

[KernelPhase]
memory-init=370
rootfs-mount=110
driver-setup=218

[KernelPhaseBoosted]
memory-init=110
rootfs-mount=75
driver-setup=218

[InitTasks]
enable-logging=28 deferrable
setup-kernel-module=28 deferrable
setup-hostname=13 deferrable
setup-machine-id=9 deferrable
setup-loopback=17 deferrable
test-directory=29 deferrable
job-engine=71

[TextParseTasks]
load-services=150
parse-dependencies=231

[BootstrapTasks]
journal-remount=496 deferrable
module-initcalls=428 deferrable
";

const DBUS_SIM_CONF: &str = "\
[Sim]
Workers=4
Seed=0
Completion=dbus.service
RcuOverheadConventional=23.7
RcuOverheadBoosted=3.1
";

fn dbus_isolation_units() -> Vec<UnitFile> {
    let mut var_mount = unit("var.mount");
    var_mount.description = "Mount the /var directory".into();
    var_mount.exec_duration = 60;

    let mut dbus = unit("dbus.service");
    dbus.description = "IPC message bus".into();
    dbus.service_type = ServiceType::Oneshot;
    dbus.exec_duration = 90;
    dbus.deps = vec![(DependencyKind::Strong, name("var.mount"))];

    let mut units = vec![var_mount, dbus];
    for i in 0..12 {
        let mut u = unit(&format!("app{i:02}.service"));
        u.description = format!("app {i} wants to look fast");
        u.service_type = ServiceType::Oneshot;
        u.exec_duration = 100 + (i * 7) % 40;
        u.deps = vec![(DependencyKind::OrderBefore, name("var.mount"))];
        units.push(u);
    }
    units
}

fn cycle_units() -> Vec<UnitFile> {
    let mut a = unit("a.service");
    a.deps = vec![(DependencyKind::Strong, name("b.service"))];
    let mut b = unit("b.service");
    b.deps = vec![(DependencyKind::Strong, name("a.service"))];
    vec![a, b]
}

/// A new service in one team's group, required by another team's service
/// whose group already orders itself before the newcomer: one cycle
/// spanning the two groups.
fn groups_cycle_units() -> Vec<UnitFile> {
    let mut c = unit("c.service");
    c.description = "newcomer in group a".into();
    let mut a1 = unit("a1.service");
    a1.description = "group b service requiring the newcomer".into();
    a1.deps = vec![
        (DependencyKind::Strong, name("c.service")),
        (DependencyKind::OrderBefore, name("b1.service")),
    ];
    let mut b1 = unit("b1.service");
    b1.description = "group b service ordered before the newcomer".into();
    b1.deps = vec![(DependencyKind::OrderBefore, name("c.service"))];
    vec![c, a1, b1]
}

fn main() {
    let check = std::env::args().any(|a| a == "--check");
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");

    write_units(&root.join("tv7"), &tv7_units());
    write_units(&root.join("tv"), &tv_units());
    std::fs::write(root.join("tv/sim.conf"), TV_SIM_CONF).unwrap();
    write_units(&root.join("dbus-isolation"), &dbus_isolation_units());
    std::fs::write(root.join("dbus-isolation/sim.conf"), DBUS_SIM_CONF).unwrap();
    write_units(&root.join("cycle"), &cycle_units());
    write_units(&root.join("groups-cycle"), &groups_cycle_units());
    println!("fixtures written to {}", root.display());

    if check {
        let units = tv_units();
        let map = units
            .iter()
            .map(|u| (u.name.clone(), u.clone()))
            .collect::<std::collections::BTreeMap<_, _>>();
        let set = bb_core::unit::UnitSet::new(map, [0; 32]);
        let file = SimConfigFile::parse(TV_SIM_CONF).unwrap();
        let completion: BTreeSet<UnitName> = file.completion.clone();

        let off = simulate_boot(&set, &file.assemble(false, None), &completion).unwrap();
        let graph = build_graph(&set);
        let group = isolate_bb_group(&graph, &completion).unwrap();
        let on = simulate_boot(&set, &file.assemble(true, Some(group)), &completion).unwrap();

        let mut msg = String::new();
        let _ = writeln!(
            msg,
            "bb off: {:.1} ms (target 8100 +-810)",
            off.boot_completed_at as f64 / 1000.0
        );
        let _ = writeln!(
            msg,
            "bb on:  {:.1} ms (target 3500 +-350)",
            on.boot_completed_at as f64 / 1000.0
        );
        for p in off.phases.iter().zip(on.phases.iter()) {
            let _ = writeln!(
                msg,
                "  {:<10} {:>9.1} -> {:>9.1} ms",
                p.0.label,
                (p.0.end_us - p.0.start_us) as f64 / 1000.0,
                (p.1.end_us - p.1.start_us) as f64 / 1000.0
            );
        }
        print!("{msg}");
    }
}
