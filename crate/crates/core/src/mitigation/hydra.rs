use rustc_hash::FxHashMap;

use crate::dram::timing::Tick;

/// Hybrid tracker: controller-resident group counters, and per-row counters kept in
/// DRAM behind a small set-associative cache.
///
/// A group's rows get individual counters once the group count reaches the
/// group threshold; each row counter starts at that threshold, which bounds the
/// row's activations so far. Every access to a row counter goes through the
/// cache: misses fetch the counter line from DRAM, dirty evictions write one back.
#[derive(Debug, Clone)]
pub struct Hydra {
    quota: u32,
    group_threshold: u32,
    group_shift: u32,
    rows_per_bank: u32,
    reset_ticks: Tick,
    epoch: u64,
    groups: Vec<u32>,
    rows: FxHashMap<u64, u32>,
    cache: CounterCache,
    meta_base: u64,
    pub triggers: u64,
    pub meta_reads: u64,
    pub meta_writes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetaAccess {
    Read(u64),
    Write(u64),
}

#[derive(Debug, Clone, Default)]
pub struct HydraOutcome {
    pub trigger: bool,
    pub traffic: Vec<MetaAccess>,
}

/// Counter width in DRAM.
const COUNTER_BYTES: u64 = 2;

/// Bytes of DRAM reserved for row counters of `total_rows` rows.
pub fn hydra_region_bytes(total_rows: u64) -> u64 {
    (total_rows * COUNTER_BYTES).div_ceil(64) * 64
}

#[derive(Debug, Clone, Copy)]
struct Way {
    tag: u64,
    valid: bool,
    dirty: bool,
    stamp: u64,
}

#[derive(Debug, Clone)]
struct CounterCache {
    sets: usize,
    ways: usize,
    lines: Vec<Way>,
    clock: u64,
}

impl CounterCache {
    fn new(entries: usize, ways: usize) -> Self {
        let ways = ways.clamp(1, entries.max(1));
        let sets = (entries / ways).max(1);
        let empty = Way { tag: 0, valid: false, dirty: false, stamp: 0 };
        Self { sets, ways, lines: vec![empty; sets * ways], clock: 0 }
    }

    /// Marks counter `idx` dirty. Returns (hit, evicted dirty tag).
    fn touch(&mut self, idx: u64) -> (bool, Option<u64>) {
        self.clock += 1;
        let set = (idx % self.sets as u64) as usize;
        let ways = &mut self.lines[set * self.ways..(set + 1) * self.ways];
        if let Some(w) = ways.iter_mut().find(|w| w.valid && w.tag == idx) {
            w.stamp = self.clock;
            w.dirty = true;
            return (true, None);
        }
        let victim = ways
            .iter_mut()
            .min_by_key(|w| (w.valid, w.stamp))
            .expect("cache set has ways");
        let evicted = (victim.valid && victim.dirty).then_some(victim.tag);
        *victim = Way { tag: idx, valid: true, dirty: true, stamp: self.clock };
        (false, evicted)
    }

    fn clear(&mut self) {
        for w in &mut self.lines {
            w.valid = false;
            w.dirty = false;
        }
    }
}

impl Hydra {
    pub fn new(
        banks: usize,
        rows_per_bank: u32,
        group_size: u32,
        quota: u32,
        cache_entries: usize,
        cache_ways: usize,
        reset_ticks: Tick,
        meta_base: u64,
    ) -> Self {
        assert!(group_size.is_power_of_two() && group_size <= rows_per_bank);
        assert!(quota > 0 && reset_ticks > 0);
        let groups_per_bank = (rows_per_bank / group_size) as usize;
        Self {
            quota,
            group_threshold: quota * 4 / 5,
            group_shift: group_size.trailing_zeros(),
            rows_per_bank,
            reset_ticks,
            epoch: 0,
            groups: vec![0; banks * groups_per_bank],
            rows: FxHashMap::default(),
            cache: CounterCache::new(cache_entries, cache_ways),
            meta_base,
            triggers: 0,
            meta_reads: 0,
            meta_writes: 0,
        }
    }

    pub fn quota(&self) -> u32 {
        self.quota
    }

    pub fn group_threshold(&self) -> u32 {
        self.group_threshold
    }

    fn counter_addr(&self, idx: u64) -> u64 {
        self.meta_base + (idx * COUNTER_BYTES) / 64 * 64
    }

    pub fn on_activate(&mut self, bank: usize, row: u32, now: Tick) -> HydraOutcome {
        let e = now / self.reset_ticks;
        if e != self.epoch {
            self.epoch = e;
            self.groups.fill(0);
            self.rows.clear();
            self.cache.clear();
        }
        let mut out = HydraOutcome::default();
        let per_bank = (self.rows_per_bank >> self.group_shift) as usize;
        let g = bank * per_bank + (row >> self.group_shift) as usize;
        // the group count stays below the quota, so a row cannot trigger yet
        if self.groups[g] < self.group_threshold {
            self.groups[g] += 1;
            return out;
        }
        let idx = bank as u64 * u64::from(self.rows_per_bank) + u64::from(row);
        let base = self.group_threshold;
        let c = self.rows.entry(idx).or_insert(base);
        let before = *c;
        *c += 1;
        out.trigger = *c / self.quota > before / self.quota;
        self.triggers += u64::from(out.trigger);
        let (hit, evicted) = self.cache.touch(idx);
        if !hit {
            self.meta_reads += 1;
            out.traffic.push(MetaAccess::Read(self.counter_addr(idx)));
        }
        if let Some(old) = evicted {
            self.meta_writes += 1;
            out.traffic.push(MetaAccess::Write(self.counter_addr(old)));
        }
        out
    }
}
