use crate::dram::timing::Tick;
use crate::tracker::FrequentItems;

/// Frequent-items counter table per bank. A row triggers a preventive refresh
/// of its neighbors whenever its estimated count crosses a multiple of the
/// quota. Tables are cleared at every reset-window boundary.
#[derive(Debug, Clone)]
pub struct Graphene {
    quota: u32,
    reset_ticks: Tick,
    tables: Vec<FrequentItems>,
    epoch: Vec<u64>,
    pub triggers: u64,
}

/// Table size that keeps the spillover below `quota` for `window` activations.
pub fn graphene_table_size(window: u64, quota: u32, rows_per_bank: u32) -> usize {
    let k = window.div_ceil(u64::from(quota.max(1))) + 1;
    k.min(u64::from(rows_per_bank)) as usize
}

impl Graphene {
    pub fn new(banks: usize, k: usize, quota: u32, reset_ticks: Tick) -> Self {
        assert!(quota > 0 && reset_ticks > 0);
        Self {
            quota,
            reset_ticks,
            tables: (0..banks).map(|_| FrequentItems::new(k)).collect(),
            epoch: vec![0; banks],
            triggers: 0,
        }
    }

    pub fn quota(&self) -> u32 {
        self.quota
    }

    pub fn table(&self, bank: usize) -> &FrequentItems {
        &self.tables[bank]
    }

    /// Records an activation; `true` when the row's neighbors must be refreshed.
    pub fn on_activate(&mut self, bank: usize, row: u32, now: Tick) -> bool {
        let e = now / self.reset_ticks;
        if e != self.epoch[bank] {
            self.epoch[bank] = e;
            self.tables[bank].reset();
        }
        let t = &mut self.tables[bank];
        let before = t.estimate(row);
        let after = t.record(row).max(t.estimate(row));
        let hit = after / self.quota > before / self.quota;
        self.triggers += u64::from(hit);
        hit
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_triggers_at_quota() {
        let mut g = Graphene::new(1, 8, 10, u64::MAX);
        let first = (1..=100).find(|_| g.on_activate(0, 5, 0)).unwrap();
        assert_eq!(first, 10);
        assert_eq!(g.triggers, 1);
        for _ in 0..10 {
            g.on_activate(0, 5, 0);
        }
        assert_eq!(g.triggers, 2);
    }

    #[test]
    fn round_robin_below_quota_is_quiet() {
        let k = 8;
        let mut g = Graphene::new(1, k, 10, u64::MAX);
        for _ in 0..9 {
            for r in 0..=k as u32 {
                assert!(!g.on_activate(0, r, 0));
            }
        }
    }

    #[test]
    fn window_reset_clears_counts() {
        let mut g = Graphene::new(1, 8, 10, 1000);
        for _ in 0..9 {
            g.on_activate(0, 5, 10);
        }
        assert!(!g.on_activate(0, 5, 1000));
        assert_eq!(g.table(0).estimate(5), 1);
    }

    #[test]
    fn sizing() {
        assert_eq!(graphene_table_size(1000, 10, 65536), 101);
        assert_eq!(graphene_table_size(1_000_000, 4, 65536), 65536);
    }
}
