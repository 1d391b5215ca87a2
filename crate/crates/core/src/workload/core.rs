//! In-order, stall-on-read core model.
//!
//! Time is kept in slots: the core issues up to [`ISSUE_WIDTH`] instructions per
//! core cycle, so slot `s` belongs to cycle `s / ISSUE_WIDTH`. Non-memory
//! instructions and writes never stall; a read blocks the core until its data
//! returns. Core cycles and controller ticks are related through a common
//! unit of 1/16 ns.

use std::sync::Arc;

use super::cache::{Cache, CacheConfig};
use super::stats::CoreStats;
use super::trace::TraceEntry;
use crate::controller::{Controller, ReqKind, Source};
use crate::dram::timing::Tick;
use crate::error::DeviceError;

pub const ISSUE_WIDTH: u64 = 4;
/// Core cycle (3.2 GHz) in 1/16 ns.
pub const CYCLE_UNITS: u64 = 5;
/// Controller tick (0.75 ns) in 1/16 ns.
pub const TICK_UNITS: u64 = 12;

pub fn cycle_to_tick(cycle: u64) -> Tick {
    cycle * CYCLE_UNITS / TICK_UNITS
}

/// First core cycle that starts at or after the beginning of `tick`.
pub fn tick_to_cycle_ceil(tick: Tick) -> u64 {
    (tick * TICK_UNITS).div_ceil(CYCLE_UNITS)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoreLimits {
    pub warmup: u64,
    pub budget: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Blocked {
    No,
    Read(u64),
    /// Queue was full; retry no earlier than this slot.
    Retry,
}

#[derive(Debug, Clone)]
pub struct Core {
    id: usize,
    trace: Arc<[TraceEntry]>,
    cursor: usize,
    slot: u64,
    instructions: u64,
    blocked: Blocked,
    writeback: Option<u64>,
    cache: Option<Cache>,
    limits: CoreLimits,
    warm: Option<(u64, u64)>,
    done: Option<(u64, u64)>,
    stats: CoreStats,
}

impl Core {
    pub fn new(id: usize, trace: Arc<[TraceEntry]>, limits: CoreLimits, cache: &CacheConfig) -> Self {
        let mut c = Self {
            id,
            trace,
            cursor: 0,
            slot: 0,
            instructions: 0,
            blocked: Blocked::No,
            writeback: None,
            cache: cache.enabled.then(|| Cache::new(cache)),
            limits,
            warm: None,
            done: None,
            stats: CoreStats::default(),
        };
        if limits.warmup == 0 {
            c.warm = Some((0, 0));
        }
        if c.trace.is_empty() {
            // nothing but non-memory instructions
            let end = limits.budget.max(limits.warmup).max(1);
            c.retire(end, end - 1);
        }
        c
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn is_done(&self) -> bool {
        self.done.is_some()
    }

    pub fn instructions(&self) -> u64 {
        self.instructions
    }

    fn cycle(&self) -> u64 {
        self.slot.div_ceil(ISSUE_WIDTH)
    }

    /// Retires `n` more instructions, the last one in slot `last_slot`.
    fn retire(&mut self, n: u64, last_slot: u64) {
        let before = self.instructions;
        self.instructions += n;
        self.slot = last_slot + 1;
        let cycle = self.cycle();
        if self.warm.is_none() && self.instructions >= self.limits.warmup {
            // interpolate within this step so bubbles count at full width
            let over = self.instructions - self.limits.warmup.max(before);
            self.warm = Some((self.limits.warmup, cycle.saturating_sub(over / ISSUE_WIDTH)));
        }
        if self.done.is_none() && self.instructions >= self.limits.budget {
            let over = self.instructions - self.limits.budget.max(before);
            self.done = Some((self.limits.budget, cycle.saturating_sub(over / ISSUE_WIDTH)));
        }
    }

    fn entry(&self) -> TraceEntry {
        self.trace[self.cursor]
    }

    fn mem_slot(&self) -> u64 {
        let e = self.entry();
        self.slot + u64::from(e.bubbles)
    }

    /// Tick at which the core next wants to issue, or `None` while it waits for a read.
    pub fn next_issue(&self) -> Option<Tick> {
        if self.trace.is_empty() {
            return None;
        }
        match self.blocked {
            Blocked::Read(_) => None,
            Blocked::Retry | Blocked::No => {
                if self.writeback.is_some() {
                    return Some(cycle_to_tick(self.slot / ISSUE_WIDTH));
                }
                Some(cycle_to_tick(self.mem_slot() / ISSUE_WIDTH))
            }
        }
    }

    /// Stalls the core until `tick`.
    fn stall_until(&mut self, tick: Tick) {
        self.slot = self.slot.max(tick_to_cycle_ceil(tick) * ISSUE_WIDTH);
    }

    /// Issues the next memory access if it is due at `now`. Returns whether the core made progress.
    pub fn tick(&mut self, now: Tick, ctrl: &mut Controller) -> Result<bool, DeviceError> {
        match self.next_issue() {
            Some(t) if t <= now => {}
            _ => return Ok(false),
        }
        if let Some(addr) = self.writeback {
            if ctrl.enqueue(ReqKind::Write, addr, Source::Core(self.id), now)?.is_none() {
                self.blocked = Blocked::Retry;
                self.stall_until(now + 1);
                return Ok(false);
            }
            self.writeback = None;
            self.stats.writes += 1;
        }
        let e = self.entry();
        let slot = self.mem_slot();
        if let Some(c) = &mut self.cache {
            let o = c.access(e.addr, e.kind == ReqKind::Write);
            if o.hit {
                self.stats.llc_hits += 1;
                self.advance(slot, e);
                return Ok(true);
            }
            self.writeback = o.writeback;
            if e.kind == ReqKind::Write {
                // write-allocate without a fill read
                self.advance(slot, e);
                return Ok(true);
            }
        }
        match ctrl.enqueue(e.kind, e.addr, Source::Core(self.id), now)? {
            None => {
                self.blocked = Blocked::Retry;
                self.stall_until_mem(now + 1);
                Ok(false)
            }
            Some(id) => {
                self.advance(slot, e);
                match e.kind {
                    ReqKind::Read => {
                        self.stats.reads += 1;
                        self.blocked = Blocked::Read(id);
                    }
                    ReqKind::Write => self.stats.writes += 1,
                }
                Ok(true)
            }
        }
    }

    /// Delays the pending memory instruction so that it issues no earlier than `tick`.
    fn stall_until_mem(&mut self, tick: Tick) {
        let b = u64::from(self.entry().bubbles);
        let target = tick_to_cycle_ceil(tick) * ISSUE_WIDTH;
        if self.slot + b < target {
            self.slot = target - b;
        }
    }

    fn advance(&mut self, slot: u64, e: TraceEntry) {
        self.blocked = Blocked::No;
        self.retire(u64::from(e.bubbles) + 1, slot);
        self.cursor = (self.cursor + 1) % self.trace.len();
    }

    pub fn on_read_complete(&mut self, id: u64, tick: Tick) {
        if self.blocked == Blocked::Read(id) {
            self.blocked = Blocked::No;
            self.stall_until(tick);
        }
    }

    /// Statistics over the measured region (after warmup, up to the budget).
    pub fn stats(&self) -> CoreStats {
        let (i1, c1) = self.done.unwrap_or((self.instructions, self.cycle()));
        let (i0, c0) = self.warm.unwrap_or((i1, c1));
        CoreStats { instructions: i1 - i0, cycles: c1.saturating_sub(c0), ..self.stats }
    }
}
