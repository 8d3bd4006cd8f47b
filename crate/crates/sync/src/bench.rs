//! Contention benchmark harness: n reader threads churn read-side sections
//! while m synchronizer threads each run k grace-period waits. Latency
//! distributions come out in nanoseconds; the CPU-burn proxy is the spin
//! count for the conventional algorithm and the voluntary context-switch
//! count for the boosted one. Shapes (sample counts, coverage bookkeeping)
//! are reproducible; absolute latencies of course are not.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering::SeqCst};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::domain::{GracePeriodDomain, SyncError, SyncMode};

/// Upper bound on readers + synchronizers a single bench run may spawn.
pub const MAX_BENCH_THREADS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchMode {
    Conventional,
    Boosted,
    /// Flip the domain mode on a fixed cadence while synchronizers dispatch
    /// through `synchronize`, exercising the runtime switch.
    Toggle,
}

impl BenchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchMode::Conventional => "conventional",
            BenchMode::Boosted => "boosted",
            BenchMode::Toggle => "toggle",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: String,
    pub readers: usize,
    pub synchronizers: usize,
    pub iterations: usize,
    pub samples: usize,
    pub mean_ns: u64,
    pub median_ns: u64,
    pub p99_ns: u64,
    pub min_ns: u64,
    pub max_ns: u64,
    /// Spin-loop iterations across the run (conventional burn).
    pub spin_iterations: u64,
    /// Sleeps plus yields across the run (boosted burn).
    pub context_switches: u64,
    /// The mode-appropriate burn figure: spins for conventional, context
    /// switches for boosted, their sum for toggle.
    pub cpu_burn_proxy: u64,
    pub grace_periods: u64,
    pub snapshot_covered: u64,
    pub timeouts: u64,
    pub reader_sections: u64,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Aligned text table, one metric per row.
    pub fn to_table(&self) -> String {
        let rows = [
            ("mode", self.mode.clone()),
            ("readers", self.readers.to_string()),
            ("synchronizers", self.synchronizers.to_string()),
            ("iterations", self.iterations.to_string()),
            ("samples", self.samples.to_string()),
            ("mean (ns)", self.mean_ns.to_string()),
            ("median (ns)", self.median_ns.to_string()),
            ("p99 (ns)", self.p99_ns.to_string()),
            ("min (ns)", self.min_ns.to_string()),
            ("max (ns)", self.max_ns.to_string()),
            ("spin iterations", self.spin_iterations.to_string()),
            ("context switches", self.context_switches.to_string()),
            ("cpu burn proxy", self.cpu_burn_proxy.to_string()),
            ("grace periods", self.grace_periods.to_string()),
            ("snapshot covered", self.snapshot_covered.to_string()),
            ("timeouts", self.timeouts.to_string()),
            ("reader sections", self.reader_sections.to_string()),
        ];
        let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<w$}  {v}\n"))
            .collect()
    }
}

/// Run the harness. Readers churn until every synchronizer finishes its k
/// iterations.
pub fn bench_contention(
    readers: usize,
    synchronizers: usize,
    iterations: usize,
    mode: BenchMode,
) -> Result<BenchReport, SyncError> {
    assert!(readers >= 1 && synchronizers >= 1 && iterations >= 1);
    if readers + synchronizers > MAX_BENCH_THREADS {
        return Err(SyncError::ResourceExhausted(MAX_BENCH_THREADS));
    }

    let domain = GracePeriodDomain::new(readers);
    domain.set_mode(match mode {
        BenchMode::Conventional | BenchMode::Toggle => SyncMode::Conventional,
        BenchMode::Boosted => SyncMode::Boosted,
    });
    // Long enough that a queue of synchronizers behind churning readers
    // never trips it on slow machines.
    domain.set_conventional_timeout(Duration::from_secs(30));

    let stop = AtomicBool::new(false);
    let sections = AtomicU64::new(0);
    let mut latencies: Vec<u64> = Vec::with_capacity(synchronizers * iterations);
    let mut timeouts: u64 = 0;

    std::thread::scope(|s| {
        for _ in 0..readers {
            s.spawn(|| {
                let slot = domain.register_reader().expect("slot per reader");
                let mut local: u64 = 0;
                let mut sink: u64 = 1;
                while !stop.load(SeqCst) {
                    {
                        let _g = slot.enter();
                        for i in 0..200u64 {
                            sink = sink.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(i);
                            std::hint::black_box(sink);
                        }
                    }
                    // Work outside the section, never yielding: preemption
                    // lands at random points, so once readers outnumber
                    // cores a fraction is always parked mid-section and
                    // every grace period costs real scheduling time. A
                    // single reader stays on its own core and sections
                    // drain in microseconds.
                    for i in 0..4_000u64 {
                        sink = sink.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i);
                        std::hint::black_box(sink);
                    }
                    local += 1;
                }
                sections.fetch_add(local, SeqCst);
            });
        }

        let toggler = if mode == BenchMode::Toggle {
            Some(s.spawn(|| {
                let mut boosted = false;
                while !stop.load(SeqCst) {
                    boosted = !boosted;
                    domain.set_mode(if boosted {
                        SyncMode::Boosted
                    } else {
                        SyncMode::Conventional
                    });
                    std::thread::sleep(Duration::from_micros(200));
                }
            }))
        } else {
            None
        };

        let mut handles = Vec::new();
        for _ in 0..synchronizers {
            handles.push(s.spawn(|| {
                let mut lat = Vec::with_capacity(iterations);
                let mut timed_out: u64 = 0;
                for _ in 0..iterations {
                    let t0 = Instant::now();
                    let res = match mode {
                        BenchMode::Conventional => domain.synchronize_conventional().map(|_| ()),
                        BenchMode::Boosted => {
                            domain.synchronize_boosted();
                            Ok(())
                        }
                        BenchMode::Toggle => domain.synchronize().map(|_| ()),
                    };
                    match res {
                        Ok(()) => lat.push(t0.elapsed().as_nanos() as u64),
                        Err(SyncError::Timeout(_)) => timed_out += 1,
                        Err(e) => panic!("unexpected bench failure: {e}"),
                    }
                    // Writers prepare the next update between waits, which
                    // decorrelates arrivals from grace-period completions.
                    std::thread::sleep(Duration::from_micros(1_000));
                }
                (lat, timed_out)
            }));
        }
        for h in handles {
            let (lat, timed_out) = h.join().expect("synchronizer thread");
            latencies.extend(lat);
            timeouts += timed_out;
        }
        stop.store(true, SeqCst);
        if let Some(t) = toggler {
            t.join().expect("toggler thread");
        }
    });

    latencies.sort_unstable();
    let samples = latencies.len();
    let pct = |p: f64| -> u64 {
        if samples == 0 {
            return 0;
        }
        let idx = ((samples as f64 - 1.0) * p).round() as usize;
        latencies[idx]
    };
    let stats = domain.stats();
    let cpu_burn_proxy = match mode {
        BenchMode::Conventional => stats.spin_iterations,
        BenchMode::Boosted => stats.context_switches,
        BenchMode::Toggle => stats.spin_iterations + stats.context_switches,
    };

    Ok(BenchReport {
        mode: mode.as_str().to_string(),
        readers,
        synchronizers,
        iterations,
        samples,
        mean_ns: if samples == 0 {
            0
        } else {
            (latencies.iter().map(|&v| v as u128).sum::<u128>() / samples as u128) as u64
        },
        median_ns: pct(0.5),
        p99_ns: pct(0.99),
        min_ns: latencies.first().copied().unwrap_or(0),
        max_ns: latencies.last().copied().unwrap_or(0),
        spin_iterations: stats.spin_iterations,
        context_switches: stats.context_switches,
        cpu_burn_proxy,
        grace_periods: stats.grace_periods,
        snapshot_covered: stats.snapshot_covered,
        timeouts: stats.timeouts,
        reader_sections: sections.load(SeqCst),
    })
}
