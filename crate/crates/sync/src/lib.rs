//! Concurrent dual-mode grace-period synchronization: a conventional
//! spin-waiting wait and a boosted blocking wait over a shared reader-epoch
//! protocol, switchable at runtime, plus a contention benchmark harness.

pub mod bench;
pub mod domain;

pub use bench::{bench_contention, BenchMode, BenchReport, MAX_BENCH_THREADS};
pub use domain::{
    DomainStats, GracePeriodDomain, ReadGuard, ReaderSlot, SyncError, SyncMode, WaitStats,
};
