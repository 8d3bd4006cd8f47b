//! End-to-end checks of the command-line surface: exit codes, JSON mode,
//! cache transparency, and the fixture-root environment variable.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bb() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bb"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn run(args: &[&str]) -> Output {
    bb().args(args).output().expect("spawn bb")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn parse_clean_tree_exits_zero() {
    let out = run(&["parse", fixtures().join("tv7").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(stdout(&out).contains("parsed 7 units"));
}

#[test]
fn analyze_cycle_fixture_exits_two() {
    let out = run(&["analyze", fixtures().join("cycle").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("cycle: a.service -> b.service"));
}

#[test]
fn analyze_cross_group_fixture_reports_exactly_one_cycle() {
    let out = run(&[
        "--json",
        "analyze",
        fixtures().join("groups-cycle").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let cycles = doc["cycles"]["cycles"].as_array().unwrap();
    assert_eq!(cycles.len(), 1);
    assert_eq!(cycles[0]["nodes"].as_array().unwrap().len(), 3);
}

#[test]
fn isolate_tv7_prints_the_seven_members() {
    let out = run(&[
        "isolate",
        fixtures().join("tv7").to_str().unwrap(),
        "--completion",
        "fasttv.service",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for member in [
        "var.mount",
        "socket.service",
        "dbus.service",
        "tuner.service",
        "hdmi.service",
        "demux.service",
        "fasttv.service",
    ] {
        assert!(text.contains(member), "missing {member} in:\n{text}");
    }
    assert!(text.contains("7 members"));
}

#[test]
fn usage_errors_exit_one() {
    let out = run(&["parse", "--definitely-not-a-flag"]);
    assert_eq!(out.status.code(), Some(1));
    // No directory argument and no BB_FIXTURES.
    let out = bb()
        .args(["parse"])
        .env_remove("BB_FIXTURES")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    // Unknown completion target is a usage problem too.
    let out = run(&[
        "isolate",
        fixtures().join("tv7").to_str().unwrap(),
        "--completion",
        "ghost.service",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn io_failures_exit_three() {
    let out = run(&["parse", "/definitely/not/a/path"]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(&["chart", "/definitely/not/a/trace.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn simulating_a_cyclic_tree_exits_four() {
    let out = run(&[
        "simulate",
        fixtures().join("cycle").to_str().unwrap(),
        "--completion",
        "a.service",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn bb_fixtures_env_is_the_default_root() {
    let out = bb()
        .args(["parse"])
        .env("BB_FIXTURES", fixtures().join("tv7"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("parsed 7 units"));
}

#[test]
fn simulate_uses_and_rebuilds_the_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let cache = tmp.path().join("units.bbpp");
    let tv = fixtures().join("tv");
    let conf = tv.join("sim.conf");

    // First run builds the cache.
    let out = run(&[
        "simulate",
        tv.to_str().unwrap(),
        "--config",
        conf.to_str().unwrap(),
        "--cache",
        cache.to_str().unwrap(),
        "--bb",
        "on",
        "--out",
        tmp.path().join("a.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(cache.exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cache miss"));

    // Second run hits it.
    let out = run(&[
        "simulate",
        tv.to_str().unwrap(),
        "--config",
        conf.to_str().unwrap(),
        "--cache",
        cache.to_str().unwrap(),
        "--bb",
        "on",
        "--out",
        tmp.path().join("b.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cache hit"));

    // Identical runs produce byte-identical traces.
    let a = std::fs::read(tmp.path().join("a.json")).unwrap();
    let b = std::fs::read(tmp.path().join("b.json")).unwrap();
    assert_eq!(a, b);

    // Corrupt the cache: the run still succeeds and rebuilds it.
    let mut bytes = std::fs::read(&cache).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    std::fs::write(&cache, &bytes).unwrap();
    let out = run(&[
        "simulate",
        tv.to_str().unwrap(),
        "--config",
        conf.to_str().unwrap(),
        "--cache",
        cache.to_str().unwrap(),
        "--bb",
        "on",
        "--out",
        tmp.path().join("c.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stale"), "{stderr}");
    let c = std::fs::read(tmp.path().join("c.json")).unwrap();
    assert_eq!(a, c);
}

#[test]
fn compare_and_chart_round_trip_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let tv = fixtures().join("tv");
    let conf = tv.join("sim.conf");
    let off = tmp.path().join("off.json");
    let on = tmp.path().join("on.json");

    for (flag, path) in [("off", &off), ("on", &on)] {
        let out = run(&[
            "simulate",
            tv.to_str().unwrap(),
            "--config",
            conf.to_str().unwrap(),
            "--bb",
            flag,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{out:?}");
    }

    let report_path = tmp.path().join("tv.compare.json");
    let out = run(&[
        "--json",
        "compare",
        off.to_str().unwrap(),
        on.to_str().unwrap(),
        "--out",
        report_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let saved = doc["total_saved_us"].as_i64().unwrap();
    assert!(saved > 0, "boosting saved {saved} us");
    // Phase savings sum exactly to the total.
    let phase_sum: i64 = doc["phases"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["saved_us"].as_i64().unwrap())
        .sum();
    assert_eq!(phase_sum, saved);

    let svg = tmp.path().join("on.svg");
    let out = run(&[
        "chart",
        on.to_str().unwrap(),
        "--format",
        "svg",
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let svg_text = std::fs::read_to_string(&svg).unwrap();
    assert!(svg_text.starts_with("<svg"));
    assert!(svg_text.contains("fasttv.service"));

    let out = run(&["chart", on.to_str().unwrap(), "--format", "text"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("boot timeline"));
}

#[test]
fn bench_sync_emits_table_and_json() {
    let out = run(&[
        "bench-sync", "--readers", "1", "--syncers", "1", "--iters", "5", "--mode", "boosted",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("grace periods"));

    let out = run(&[
        "--json",
        "bench-sync",
        "--readers",
        "1",
        "--syncers",
        "1",
        "--iters",
        "5",
        "--mode",
        "toggle",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["samples"].as_u64(), Some(5));
    assert_eq!(doc["mode"].as_str(), Some("toggle"));
}

#[test]
fn json_mode_is_machine_parseable_for_every_data_subcommand() {
    let tv7 = fixtures().join("tv7");
    for args in [
        vec!["--json", "parse", tv7.to_str().unwrap()],
        vec!["--json", "analyze", tv7.to_str().unwrap()],
        vec![
            "--json",
            "isolate",
            tv7.to_str().unwrap(),
            "--completion",
            "fasttv.service",
        ],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        serde_json::from_str::<serde_json::Value>(&stdout(&out))
            .unwrap_or_else(|e| panic!("{args:?} stdout not JSON: {e}"));
    }
}
