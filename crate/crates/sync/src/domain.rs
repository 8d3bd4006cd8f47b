//! Dual-mode grace-period synchronization domain.
//!
//! Readers register a slot and flip an epoch counter on entering and leaving
//! read-side sections (even = quiescent, odd = inside). A grace period
//! completes once every slot has either been observed even or has advanced
//! since the wait began. Reader operations never block and never wait for
//! synchronizers.
//!
//! Two synchronization algorithms share the same reader protocol:
//!
//! - the conventional wait spins: waiters join a FIFO queue and burn CPU in
//!   a spin-lock-guarded polling loop until their grace period completes or
//!   a configurable timeout elapses;
//! - the boosted wait blocks: it snapshots the grace-period sequence, takes
//!   a blocking lock by looping on try-acquire and sleeping, and either
//!   proves the snapshot is already covered by someone else's grace period
//!   or drains the pending readers itself, sleeping between polls.
//!
//! The boosted wait is cheaper under contention (waiters sleep instead of
//! spinning and one grace period covers many callers) and costlier when
//! uncontended (it pays scheduler interactions every call). `set_mode`
//! switches the dispatch at runtime; in-flight waits finish under the mode
//! they started with.
//!
//! Restriction carried over from the kernel setting: a boosted caller must
//! not hold any lock that is ordered before the domain's blocking lock, or
//! the system may deadlock. Reader sections must likewise never contain a
//! synchronize call on the same domain.

use std::cell::UnsafeCell;
use std::sync::atomic::{fence, AtomicBool, AtomicU64, AtomicU8, AtomicUsize, Ordering::SeqCst};
use std::sync::{Mutex, TryLockError};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

const SLEEP_QUANTUM: Duration = Duration::from_micros(50);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyncMode {
    Conventional,
    Boosted,
}

impl SyncMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SyncMode::Conventional => "conventional",
            SyncMode::Boosted => "boosted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SyncError {
    #[error("grace-period wait timed out after {0:?}")]
    Timeout(Duration),
    #[error("participant table exhausted ({0} slots)")]
    ResourceExhausted(usize),
}

/// Per-call wait statistics, tagged with the algorithm that actually ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaitStats {
    pub mode: SyncMode,
    pub wait_ns: u64,
    pub spin_iterations: u64,
    pub blocked_sleeps: u64,
    /// Voluntary scheduler interactions (sleeps plus yields).
    pub context_switches: u64,
    pub grace_period_executed: bool,
    pub covered_by_snapshot: bool,
    /// Conventional only: position taken in the wait queue and the order
    /// the wait completed in. Tickets and ranks both increase, which is the
    /// FIFO contract.
    pub fifo_ticket: u64,
    pub completion_rank: u64,
}

/// Aggregate counters over the domain lifetime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DomainStats {
    pub grace_periods: u64,
    pub total_wait_ns: u64,
    pub spin_iterations: u64,
    pub blocked_sleeps: u64,
    pub context_switches: u64,
    pub snapshot_covered: u64,
    pub timeouts: u64,
}

#[repr(align(64))]
struct Slot {
    epoch: AtomicU64,
    used: AtomicBool,
}

/// Minimal test-and-set spin lock guarding the conventional wait queue.
struct SpinLock<T> {
    locked: AtomicBool,
    data: UnsafeCell<T>,
}

unsafe impl<T: Send> Sync for SpinLock<T> {}
unsafe impl<T: Send> Send for SpinLock<T> {}

impl<T> SpinLock<T> {
    fn new(data: T) -> Self {
        SpinLock {
            locked: AtomicBool::new(false),
            data: UnsafeCell::new(data),
        }
    }

    fn try_with<R>(&self, f: impl FnOnce(&mut T) -> R) -> Option<R> {
        if self
            .locked
            .compare_exchange(false, true, SeqCst, SeqCst)
            .is_err()
        {
            return None;
        }
        let r = f(unsafe { &mut *self.data.get() });
        self.locked.store(false, SeqCst);
        Some(r)
    }

    fn with_retry<R>(&self, mut f: impl FnMut(&mut T) -> R) -> R {
        loop {
            if self
                .locked
                .compare_exchange(false, true, SeqCst, SeqCst)
                .is_ok()
            {
                let r = f(unsafe { &mut *self.data.get() });
                self.locked.store(false, SeqCst);
                return r;
            }
            std::hint::spin_loop();
        }
    }
}

struct Waiter {
    id: u64,
    done: AtomicBool,
    completion_rank: AtomicU64,
}

struct WaitQueue {
    entries: Vec<std::sync::Arc<Waiter>>,
    /// Pending (slot, epoch) observations for the queue head; recorded the
    /// first time the head is processed, then drained.
    head_pending: Option<Vec<(usize, u64)>>,
    next_id: u64,
}

pub struct GracePeriodDomain {
    slots: Box<[Slot]>,
    mode: AtomicU8,
    conventional_timeout_ns: AtomicU64,

    wait_queue: SpinLock<WaitQueue>,

    /// Boosted path: the blocking lock plus the grace-period sequence.
    /// The sequence is odd while a grace period is in flight and even
    /// otherwise; only the lock holder advances it.
    gp_lock: Mutex<()>,
    gp_seq: AtomicU64,

    grace_periods: AtomicU64,
    total_wait_ns: AtomicU64,
    spin_iterations: AtomicU64,
    blocked_sleeps: AtomicU64,
    context_switches: AtomicU64,
    snapshot_covered: AtomicU64,
    timeouts: AtomicU64,
    registered: AtomicUsize,
}

impl GracePeriodDomain {
    /// A domain with room for `max_readers` concurrently registered
    /// participants.
    pub fn new(max_readers: usize) -> Self {
        let slots = (0..max_readers)
            .map(|_| Slot {
                epoch: AtomicU64::new(0),
                used: AtomicBool::new(false),
            })
            .collect::<Vec<_>>()
            .into_boxed_slice();
        GracePeriodDomain {
            slots,
            mode: AtomicU8::new(SyncMode::Conventional as u8),
            conventional_timeout_ns: AtomicU64::new(Duration::from_secs(1).as_nanos() as u64),
            wait_queue: SpinLock::new(WaitQueue {
                entries: Vec::new(),
                head_pending: None,
                next_id: 1, // ticket 0 marks fast-path returns
            }),
            gp_lock: Mutex::new(()),
            gp_seq: AtomicU64::new(0),
            grace_periods: AtomicU64::new(0),
            total_wait_ns: AtomicU64::new(0),
            spin_iterations: AtomicU64::new(0),
            blocked_sleeps: AtomicU64::new(0),
            context_switches: AtomicU64::new(0),
            snapshot_covered: AtomicU64::new(0),
            timeouts: AtomicU64::new(0),
            registered: AtomicUsize::new(0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    /// Timeout for conventional waits. The default is one second, far above
    /// any grace period the harness produces.
    pub fn set_conventional_timeout(&self, timeout: Duration) {
        self.conventional_timeout_ns
            .store(timeout.as_nanos() as u64, SeqCst);
    }

    pub fn register_reader(&self) -> Result<ReaderSlot<'_>, SyncError> {
        for (idx, slot) in self.slots.iter().enumerate() {
            if slot
                .used
                .compare_exchange(false, true, SeqCst, SeqCst)
                .is_ok()
            {
                self.registered.fetch_add(1, SeqCst);
                return Ok(ReaderSlot { domain: self, idx });
            }
        }
        Err(SyncError::ResourceExhausted(self.slots.len()))
    }

    /// Switch the algorithm used by subsequent `synchronize` calls. Waits
    /// already in flight finish under their starting mode.
    pub fn set_mode(&self, mode: SyncMode) -> SyncMode {
        let prev = self.mode.swap(mode as u8, SeqCst);
        if prev == SyncMode::Conventional as u8 {
            SyncMode::Conventional
        } else {
            SyncMode::Boosted
        }
    }

    pub fn mode(&self) -> SyncMode {
        if self.mode.load(SeqCst) == SyncMode::Conventional as u8 {
            SyncMode::Conventional
        } else {
            SyncMode::Boosted
        }
    }

    /// Wait for a grace period under the currently selected mode.
    pub fn synchronize(&self) -> Result<WaitStats, SyncError> {
        match self.mode() {
            SyncMode::Conventional => self.synchronize_conventional(),
            SyncMode::Boosted => Ok(self.synchronize_boosted()),
        }
    }

    pub fn stats(&self) -> DomainStats {
        DomainStats {
            grace_periods: self.grace_periods.load(SeqCst),
            total_wait_ns: self.total_wait_ns.load(SeqCst),
            spin_iterations: self.spin_iterations.load(SeqCst),
            blocked_sleeps: self.blocked_sleeps.load(SeqCst),
            context_switches: self.context_switches.load(SeqCst),
            snapshot_covered: self.snapshot_covered.load(SeqCst),
            timeouts: self.timeouts.load(SeqCst),
        }
    }

    pub fn grace_periods(&self) -> u64 {
        self.grace_periods.load(SeqCst)
    }

    /// Grace-period sequence counter (boosted bookkeeping); exposed for
    /// coverage assertions in tests.
    pub fn grace_period_seq(&self) -> u64 {
        self.gp_seq.load(SeqCst)
    }

    /// Record every slot currently inside a read-side section, paired with
    /// the epoch observed.
    fn pending_readers(&self) -> Vec<(usize, u64)> {
        let mut pending = Vec::new();
        for (idx, slot) in self.slots.iter().enumerate() {
            let v = slot.epoch.load(SeqCst);
            if v % 2 == 1 {
                pending.push((idx, v));
            }
        }
        pending
    }

    /// Spin-waiting grace period with FIFO completion order.
    ///
    /// The caller must not be inside a read-side section of this domain.
    pub fn synchronize_conventional(&self) -> Result<WaitStats, SyncError> {
        let start = Instant::now();
        let timeout = Duration::from_nanos(self.conventional_timeout_ns.load(SeqCst));
        let mut spins: u64 = 0;

        // Fast path: nobody queued and every reader quiescent means the
        // grace period is already complete, without a single spin.
        let fast = self.wait_queue.try_with(|q| {
            if q.entries.is_empty() && self.pending_readers().is_empty() {
                Some(self.grace_periods.fetch_add(1, SeqCst))
            } else {
                None
            }
        });
        if let Some(Some(rank)) = fast {
            let wait_ns = start.elapsed().as_nanos() as u64;
            self.total_wait_ns.fetch_add(wait_ns, SeqCst);
            return Ok(WaitStats {
                mode: SyncMode::Conventional,
                wait_ns,
                spin_iterations: 0,
                blocked_sleeps: 0,
                context_switches: 0,
                grace_period_executed: true,
                covered_by_snapshot: false,
                fifo_ticket: 0, // never queued
                completion_rank: rank,
            });
        }

        // Initialize the completion record and join the wait-queue tail.
        let me = self.wait_queue.with_retry(|q| {
            let w = std::sync::Arc::new(Waiter {
                id: q.next_id,
                done: AtomicBool::new(false),
                completion_rank: AtomicU64::new(0),
            });
            q.next_id += 1;
            q.entries.push(w.clone());
            w
        });

        loop {
            if me.done.load(SeqCst) {
                break;
            }
            // One spin step: take the wait lock if free and advance the
            // head's grace-period state.
            let _ = self.wait_queue.try_with(|q| {
                let Some(head) = q.entries.first().cloned() else {
                    return;
                };
                if q.head_pending.is_none() {
                    q.head_pending = Some(self.pending_readers());
                }
                let pending = q.head_pending.as_mut().unwrap();
                pending.retain(|&(idx, seen)| self.slots[idx].epoch.load(SeqCst) == seen);
                if pending.is_empty() {
                    let rank = self.grace_periods.fetch_add(1, SeqCst);
                    head.completion_rank.store(rank, SeqCst);
                    head.done.store(true, SeqCst);
                    q.entries.remove(0);
                    q.head_pending = None;
                }
            });
            spins += 1;
            std::hint::spin_loop();

            if start.elapsed() > timeout && !me.done.load(SeqCst) {
                let timed_out = self.wait_queue.with_retry(|q| {
                    if me.done.load(SeqCst) {
                        return false;
                    }
                    if let Some(pos) = q.entries.iter().position(|w| w.id == me.id) {
                        q.entries.remove(pos);
                        if pos == 0 {
                            q.head_pending = None;
                        }
                    }
                    true
                });
                if timed_out {
                    self.spin_iterations.fetch_add(spins, SeqCst);
                    self.timeouts.fetch_add(1, SeqCst);
                    return Err(SyncError::Timeout(timeout));
                }
            }
        }

        let wait_ns = start.elapsed().as_nanos() as u64;
        self.spin_iterations.fetch_add(spins, SeqCst);
        self.total_wait_ns.fetch_add(wait_ns, SeqCst);
        Ok(WaitStats {
            mode: SyncMode::Conventional,
            wait_ns,
            spin_iterations: spins,
            blocked_sleeps: 0,
            context_switches: 0,
            grace_period_executed: true,
            covered_by_snapshot: false,
            fifo_ticket: me.id,
            completion_rank: me.completion_rank.load(SeqCst),
        })
    }

    /// Blocking grace period with snapshot coverage.
    ///
    /// Full-fence ordering points bracket the snapshot, the reader drain,
    /// the snapshot comparison, and the unlock. The caller must not be
    /// inside a read-side section and must not hold any lock ordered before
    /// the domain's blocking lock (the hot-plug analog of that rule: a
    /// violation deadlocks). There is no timeout.
    pub fn synchronize_boosted(&self) -> WaitStats {
        let start = Instant::now();
        let mut sleeps: u64 = 0;
        let mut switches: u64 = 0;

        fence(SeqCst);
        let snap = self.gp_seq.load(SeqCst);
        fence(SeqCst);

        // A full grace period that began after our snapshot covers us iff
        // the sequence advanced past the snapshot by a whole start/end pair
        // (one extra step when a grace period was mid-flight at snapshot
        // time).
        let cover_target = snap + if snap % 2 == 0 { 2 } else { 3 };

        // Acquire the blocking lock by looping on try-acquire, sleeping
        // while it is held elsewhere. The snapshot is compared on every
        // pass: a caller whose grace period has been run by someone else
        // returns without ever holding the lock, so a crowd of waiters
        // collapses onto however many grace periods it actually needs.
        // Sleeps back off exponentially to keep waiters from preempting
        // the readers they are waiting on.
        let mut nap = SLEEP_QUANTUM;
        let covered = |sleeps: u64, switches: u64, start: Instant| -> WaitStats {
            fence(SeqCst);
            let wait_ns = start.elapsed().as_nanos() as u64;
            self.snapshot_covered.fetch_add(1, SeqCst);
            self.blocked_sleeps.fetch_add(sleeps, SeqCst);
            self.context_switches.fetch_add(switches, SeqCst);
            self.total_wait_ns.fetch_add(wait_ns, SeqCst);
            WaitStats {
                mode: SyncMode::Boosted,
                wait_ns,
                spin_iterations: 0,
                blocked_sleeps: sleeps,
                context_switches: switches,
                grace_period_executed: false,
                covered_by_snapshot: true,
                fifo_ticket: 0,
                completion_rank: 0,
            }
        };
        let guard = loop {
            if self.gp_seq.load(SeqCst) >= cover_target {
                return covered(sleeps, switches, start);
            }
            match self.gp_lock.try_lock() {
                Ok(g) => break g,
                Err(TryLockError::WouldBlock) => {
                    sleeps += 1;
                    switches += 1;
                    std::thread::sleep(nap);
                    nap = (nap * 2).min(Duration::from_millis(2));
                }
                Err(TryLockError::Poisoned(p)) => break p.into_inner(),
            }
        };

        // Re-check under the lock: the holder we waited out may have been
        // the grace period we needed.
        if self.gp_seq.load(SeqCst) >= cover_target {
            drop(guard);
            return covered(sleeps, switches, start);
        }

        // Run our own grace period: mark it in flight, force the pending
        // readers onto the bookkeeping list, then let the scheduler run and
        // wait for the list to drain. Polls back off so the holder's wakes
        // do not keep preempting the parked readers it is waiting on.
        self.gp_seq.fetch_add(1, SeqCst);
        let mut pending = self.pending_readers();
        std::thread::yield_now();
        switches += 1;
        let mut nap = SLEEP_QUANTUM;
        while !pending.is_empty() {
            pending.retain(|&(idx, seen)| self.slots[idx].epoch.load(SeqCst) == seen);
            if pending.is_empty() {
                break;
            }
            sleeps += 1;
            switches += 1;
            std::thread::sleep(nap);
            nap = (nap * 2).min(Duration::from_millis(2));
        }
        fence(SeqCst);
        self.gp_seq.fetch_add(1, SeqCst);
        self.grace_periods.fetch_add(1, SeqCst);
        fence(SeqCst);
        drop(guard);
        fence(SeqCst);

        let wait_ns = start.elapsed().as_nanos() as u64;
        self.blocked_sleeps.fetch_add(sleeps, SeqCst);
        self.context_switches.fetch_add(switches, SeqCst);
        self.total_wait_ns.fetch_add(wait_ns, SeqCst);
        WaitStats {
            mode: SyncMode::Boosted,
            wait_ns,
            spin_iterations: 0,
            blocked_sleeps: sleeps,
            context_switches: switches,
            grace_period_executed: true,
            covered_by_snapshot: false,
            fifo_ticket: 0,
            completion_rank: 0,
        }
    }
}

/// A registered participant slot. Dropping it returns the slot to the pool;
/// the participant must be quiescent by then.
pub struct ReaderSlot<'d> {
    domain: &'d GracePeriodDomain,
    idx: usize,
}

impl<'d> ReaderSlot<'d> {
    pub fn index(&self) -> usize {
        self.idx
    }

    /// Enter a read-side critical section. Never blocks.
    pub fn enter(&self) -> ReadGuard<'_, 'd> {
        self.enter_raw();
        ReadGuard { slot: self }
    }

    /// Raw entry; must strictly alternate with `exit_raw`. Double entry is
    /// a programming error caught in debug builds.
    pub fn enter_raw(&self) {
        let prev = self.domain.slots[self.idx].epoch.fetch_add(1, SeqCst);
        debug_assert!(
            prev % 2 == 0,
            "reader_enter while already inside a read-side section"
        );
    }

    pub fn exit_raw(&self) {
        let prev = self.domain.slots[self.idx].epoch.fetch_add(1, SeqCst);
        debug_assert!(prev % 2 == 1, "reader_exit without a matching enter");
    }

    /// Current epoch counter; odd means inside a section.
    pub fn epoch(&self) -> u64 {
        self.domain.slots[self.idx].epoch.load(SeqCst)
    }
}

impl Drop for ReaderSlot<'_> {
    fn drop(&mut self) {
        debug_assert!(
            self.epoch() % 2 == 0,
            "reader slot dropped while inside a read-side section"
        );
        self.domain.slots[self.idx].used.store(false, SeqCst);
        self.domain.registered.fetch_sub(1, SeqCst);
    }
}

pub struct ReadGuard<'s, 'd> {
    slot: &'s ReaderSlot<'d>,
}

impl Drop for ReadGuard<'_, '_> {
    fn drop(&mut self) {
        self.slot.exit_raw();
    }
}
