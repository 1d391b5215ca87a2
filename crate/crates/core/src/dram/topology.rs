use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Periodic refresh commands needed to cover every row of a bank once.
pub const REFS_PER_ROUND: u32 = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Topology {
    pub channels: u32,
    pub ranks: u32,
    pub bankgroups: u32,
    pub banks_per_group: u32,
    pub rows_per_bank: u32,
    /// 64-byte cache lines per row.
    pub columns: u32,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            channels: 1,
            ranks: 2,
            bankgroups: 8,
            banks_per_group: 2,
            rows_per_bank: 65536,
            columns: 128,
        }
    }
}

impl Topology {
    pub fn banks_per_rank(&self) -> usize {
        (self.bankgroups * self.banks_per_group) as usize
    }

    pub fn total_ranks(&self) -> usize {
        (self.channels * self.ranks) as usize
    }

    pub fn total_banks(&self) -> usize {
        self.total_ranks() * self.banks_per_rank()
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.total_banks() as u64 * self.rows_per_bank as u64 * self.columns as u64 * 64
    }

    pub fn refs_per_round(&self) -> u32 {
        REFS_PER_ROUND.min(self.rows_per_bank)
    }

    /// Rows restored in every bank of a rank by one REF.
    pub fn rows_per_ref(&self) -> u32 {
        self.rows_per_bank / self.refs_per_round()
    }

    pub fn rank_of(&self, bank: usize) -> usize {
        bank / self.banks_per_rank()
    }

    /// Bank index inside its rank.
    pub fn bank_in_rank(&self, bank: usize) -> usize {
        bank % self.banks_per_rank()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("channels", self.channels),
            ("ranks", self.ranks),
            ("bankgroups", self.bankgroups),
            ("banks_per_group", self.banks_per_group),
            ("rows_per_bank", self.rows_per_bank),
            ("columns", self.columns),
        ];
        for (name, v) in fields {
            if v == 0 || !v.is_power_of_two() {
                return Err(ConfigError::Invalid(format!(
                    "topology.{name} must be a positive power of two, got {v}"
                )));
            }
        }
        if self.rows_per_bank < 8 {
            return Err(ConfigError::Invalid("topology.rows_per_bank must be at least 8".into()));
        }
        if self.capacity_bytes().leading_zeros() < 8 {
            return Err(ConfigError::Invalid("topology capacity is too large".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_16_gib() {
        let t = Topology::default();
        t.validate().unwrap();
        assert_eq!(t.total_banks(), 32);
        assert_eq!(t.capacity_bytes(), 16 << 30);
        assert_eq!(t.rows_per_ref(), 8);
        assert_eq!(t.rank_of(17), 1);
        assert_eq!(t.bank_in_rank(17), 1);
    }

    #[test]
    fn rejects_non_power_of_two() {
        let t = Topology { banks_per_group: 3, ..Topology::default() };
        assert!(t.validate().is_err());
    }
}
