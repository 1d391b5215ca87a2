//! Frequent-items activation tracker with a spillover counter.
//!
//! Rows in the table carry an over-approximation of their activation count.
//! A row outside the table is estimated at the spillover value. When a miss
//! finds no free slot, it replaces an entry whose count equals the spillover
//! (starting at spillover + 1), or bumps the spillover if none exists. So every
//! estimate is at least the exact count, never decreases, and exceeds the exact
//! count by at most `window / (k + 1)` after `window` updates.

use std::collections::BTreeSet;

use rustc_hash::FxHashMap;

#[derive(Debug, Clone)]
pub struct FrequentItems {
    k: usize,
    spillover: u32,
    counts: FxHashMap<u32, u32>,
    order: BTreeSet<(u32, u32)>,
}

impl FrequentItems {
    pub fn new(k: usize) -> Self {
        assert!(k > 0, "tracker needs at least one entry");
        Self {
            k,
            spillover: 0,
            counts: FxHashMap::with_capacity_and_hasher(k.min(1 << 16), Default::default()),
            order: BTreeSet::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn spillover(&self) -> u32 {
        self.spillover
    }

    pub fn estimate(&self, row: u32) -> u32 {
        self.counts.get(&row).copied().unwrap_or(self.spillover)
    }

    pub fn contains(&self, row: u32) -> bool {
        self.counts.contains_key(&row)
    }

    /// Records one activation and returns the row's new estimate.
    pub fn record(&mut self, row: u32) -> u32 {
        if let Some(c) = self.counts.get_mut(&row) {
            self.order.remove(&(*c, row));
            *c += 1;
            self.order.insert((*c, row));
            return *c;
        }
        if self.counts.len() < self.k {
            return self.insert(row);
        }
        let &(min_count, min_row) = self.order.first().expect("full table is non-empty");
        if min_count == self.spillover {
            self.order.remove(&(min_count, min_row));
            self.counts.remove(&min_row);
            self.insert(row)
        } else {
            self.spillover += 1;
            self.spillover
        }
    }

    fn insert(&mut self, row: u32) -> u32 {
        let c = self.spillover + 1;
        self.counts.insert(row, c);
        self.order.insert((c, row));
        c
    }

    /// Entry with the highest count; ties go to the lowest row index.
    pub fn top(&self) -> Option<(u32, u32)> {
        let &(max, _) = self.order.last()?;
        self.order
            .range((max, 0)..=(max, u32::MAX))
            .next()
            .map(|&(c, r)| (r, c))
    }

    pub fn remove(&mut self, row: u32) -> Option<u32> {
        let c = self.counts.remove(&row)?;
        self.order.remove(&(c, row));
        Some(c)
    }

    pub fn reset(&mut self) {
        self.counts.clear();
        self.order.clear();
        self.spillover = 0;
    }

    /// Table entries in descending count order.
    pub fn entries(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.order.iter().rev().map(|&(c, r)| (r, c))
    }
}
