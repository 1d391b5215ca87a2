//! Per-core write-back LRU filter cache in front of the memory controller.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CacheConfig {
    pub enabled: bool,
    pub size_bytes: u64,
    pub ways: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self { enabled: false, size_bytes: 2 << 20, ways: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheOutcome {
    pub hit: bool,
    /// Dirty line evicted by the fill.
    pub writeback: Option<u64>,
}

#[derive(Debug, Clone, Copy)]
struct Line {
    tag: u64,
    dirty: bool,
    last_use: u64,
}

#[derive(Debug, Clone)]
pub struct Cache {
    sets: Vec<Vec<Line>>,
    ways: usize,
    clock: u64,
}

impl Cache {
    pub fn new(cfg: &CacheConfig) -> Self {
        let lines = (cfg.size_bytes / 64).max(1) as usize;
        let ways = cfg.ways.clamp(1, lines);
        let sets = (lines / ways).max(1);
        Self { sets: vec![Vec::with_capacity(ways); sets], ways, clock: 0 }
    }

    pub fn access(&mut self, addr: u64, write: bool) -> CacheOutcome {
        self.clock += 1;
        let line = addr / 64;
        let n = self.sets.len() as u64;
        let set = &mut self.sets[(line % n) as usize];
        let tag = line / n;
        if let Some(l) = set.iter_mut().find(|l| l.tag == tag) {
            l.last_use = self.clock;
            l.dirty |= write;
            return CacheOutcome { hit: true, writeback: None };
        }
        let mut writeback = None;
        if set.len() == self.ways {
            let (i, _) = set.iter().enumerate().min_by_key(|(_, l)| l.last_use).expect("full set");
            let victim = set.swap_remove(i);
            if victim.dirty {
                writeback = Some((victim.tag * n + line % n) * 64);
            }
        }
        set.push(Line { tag, dirty: write, last_use: self.clock });
        CacheOutcome { hit: false, writeback }
    }
}
