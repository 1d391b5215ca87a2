//! Minimalist open-page (MOP) address mapping.
//!
//! From the least significant bit: 6-bit line offset, the low column bits
//! selecting a line inside a MOP group, channel, bank group, bank, rank, the
//! remaining column bits, and finally the row. Consecutive lines stay in one
//! row for `mop_group` lines, then move to the next channel/bank.

use crate::dram::topology::Topology;
use crate::error::{ConfigError, DeviceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MappedAddress {
    pub channel: u32,
    pub rank: u32,
    pub bankgroup: u32,
    pub bank: u32,
    pub row: u32,
    pub column: u32,
}

#[derive(Debug, Clone, Copy)]
struct Field {
    shift: u32,
    bits: u32,
}

impl Field {
    fn get(self, a: u64) -> u32 {
        ((a >> self.shift) & ((1u64 << self.bits) - 1)) as u32
    }

    fn put(self, v: u32) -> u64 {
        u64::from(v) << self.shift
    }
}

#[derive(Debug, Clone)]
pub struct AddressMapper {
    topo: Topology,
    col_low: Field,
    channel: Field,
    bankgroup: Field,
    bank: Field,
    rank: Field,
    col_high: Field,
    row: Field,
    capacity: u64,
}

impl AddressMapper {
    pub fn new(topo: Topology, mop_group: u32) -> Result<Self, ConfigError> {
        topo.validate()?;
        if mop_group == 0 || !mop_group.is_power_of_two() || mop_group > topo.columns {
            return Err(ConfigError::Invalid(format!(
                "mop_group must be a power of two no larger than topology.columns ({}), got {mop_group}",
                topo.columns
            )));
        }
        let mut shift = 6;
        let mut next = |n: u32| {
            let f = Field { shift, bits: n.trailing_zeros() };
            shift += f.bits;
            f
        };
        let col_low = next(mop_group);
        let channel = next(topo.channels);
        let bankgroup = next(topo.bankgroups);
        let bank = next(topo.banks_per_group);
        let rank = next(topo.ranks);
        let col_high = next(topo.columns / mop_group);
        let row = next(topo.rows_per_bank);
        Ok(Self {
            topo,
            col_low,
            channel,
            bankgroup,
            bank,
            rank,
            col_high,
            row,
            capacity: topo.capacity_bytes(),
        })
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn map(&self, addr: u64) -> Result<MappedAddress, DeviceError> {
        if addr >= self.capacity {
            return Err(DeviceError::AddressOutOfRange { addr, capacity: self.capacity });
        }
        Ok(MappedAddress {
            channel: self.channel.get(addr),
            rank: self.rank.get(addr),
            bankgroup: self.bankgroup.get(addr),
            bank: self.bank.get(addr),
            row: self.row.get(addr),
            column: (self.col_high.get(addr) << self.col_low.bits) | self.col_low.get(addr),
        })
    }

    /// Line-aligned address of a mapped location.
    pub fn unmap(&self, m: &MappedAddress) -> u64 {
        let low_mask = (1u32 << self.col_low.bits) - 1;
        self.col_low.put(m.column & low_mask)
            | self.channel.put(m.channel)
            | self.bankgroup.put(m.bankgroup)
            | self.bank.put(m.bank)
            | self.rank.put(m.rank)
            | self.col_high.put(m.column >> self.col_low.bits)
            | self.row.put(m.row)
    }

    /// Flat bank index across channels and ranks.
    pub fn bank_index(&self, m: &MappedAddress) -> usize {
        let t = &self.topo;
        let rank = (m.channel * t.ranks + m.rank) as usize;
        rank * t.banks_per_rank() + (m.bankgroup * t.banks_per_group + m.bank) as usize
    }

    /// Address of column `column` of `row` in flat bank `bank` (channel 0 based).
    pub fn address_of(&self, bank: usize, row: u32, column: u32) -> u64 {
        let t = &self.topo;
        let bpr = t.banks_per_rank();
        let global_rank = (bank / bpr) as u32;
        let in_rank = (bank % bpr) as u32;
        self.unmap(&MappedAddress {
            channel: global_rank / t.ranks,
            rank: global_rank % t.ranks,
            bankgroup: in_rank / t.banks_per_group,
            bank: in_rank % t.banks_per_group,
            row,
            column,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn mapper() -> AddressMapper {
        AddressMapper::new(Topology::default(), 4).unwrap()
    }

    #[test]
    fn origin_and_last_line() {
        let m = mapper();
        let z = m.map(0).unwrap();
        assert_eq!(z, MappedAddress { channel: 0, rank: 0, bankgroup: 0, bank: 0, row: 0, column: 0 });
        let last = m.map(m.capacity() - 64).unwrap();
        assert_eq!(last.row, 65535);
        assert_eq!(last.column, 127);
        assert_eq!(m.bank_index(&last), 31);
        assert!(m.map(m.capacity()).is_err());
    }

    #[test]
    fn mop_group_then_next_bank() {
        let m = mapper();
        let banks: Vec<usize> = (0..12).map(|i| m.bank_index(&m.map(i * 64).unwrap())).collect();
        assert_eq!(banks, vec![0, 0, 0, 0, 2, 2, 2, 2, 4, 4, 4, 4]);
    }

    #[test]
    fn bijective_over_first_million_lines() {
        let m = mapper();
        let mut seen = HashSet::new();
        for i in 0..1_000_000u64 {
            let a = i * 64;
            let x = m.map(a).unwrap();
            assert_eq!(m.unmap(&x), a);
            assert!(seen.insert((m.bank_index(&x), x.row, x.column)));
        }
    }

    #[test]
    fn address_of_inverts() {
        let m = mapper();
        let a = m.address_of(17, 99, 5);
        let x = m.map(a).unwrap();
        assert_eq!((m.bank_index(&x), x.row, x.column), (17, 99, 5));
    }

    #[test]
    fn rejects_bad_group() {
        assert!(AddressMapper::new(Topology::default(), 3).is_err());
        assert!(AddressMapper::new(Topology::default(), 256).is_err());
    }
}
