//! Synthetic traces: RowHammer attack patterns and random memory-intensive streams.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trace::TraceEntry;
use crate::controller::AddressMapper;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AttackPattern {
    /// Alternates between the two rows adjacent to the victim.
    DoubleSided,
    /// Hammers the row below the victim, alternating with a distant row to force row misses.
    Single,
    /// Rows at distance two, with one access to a distance-one row every `far_per_near` accesses.
    HalfDouble { far_per_near: u32 },
}

impl fmt::Display for AttackPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DoubleSided => f.write_str("double_sided"),
            Self::Single => f.write_str("single"),
            Self::HalfDouble { far_per_near } => write!(f, "half_double:{far_per_near}"),
        }
    }
}

impl FromStr for AttackPattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "double_sided" => Ok(Self::DoubleSided),
            "single" => Ok(Self::Single),
            "half_double" => Ok(Self::HalfDouble { far_per_near: 16 }),
            _ => match s.strip_prefix("half_double:").map(str::parse) {
                Some(Ok(n)) if n > 0 => Ok(Self::HalfDouble { far_per_near: n }),
                _ => Err(format!(
                    "unknown attack pattern `{s}` (double_sided, single, half_double[:N])"
                )),
            },
        }
    }
}

impl TryFrom<String> for AttackPattern {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AttackPattern> for String {
    fn from(p: AttackPattern) -> String {
        p.to_string()
    }
}

/// Distance of the dummy row used by the single-sided pattern.
const SINGLE_SIDED_DUMMY: u32 = 1024;

/// Rows an attack on `victim` activates, in order.
pub fn attack_rows(victim: u32, hammer_count: usize, pattern: AttackPattern, rows_per_bank: u32) -> Vec<u32> {
    let below = |d: u32| victim.checked_sub(d).unwrap_or(victim + d + 1);
    let above = |d: u32| if victim + d < rows_per_bank { victim + d } else { below(d + 1) };
    match pattern {
        AttackPattern::DoubleSided => {
            (0..hammer_count).map(|i| if i % 2 == 0 { below(1) } else { above(1) }).collect()
        }
        AttackPattern::Single => {
            let dummy = (victim + SINGLE_SIDED_DUMMY) % rows_per_bank;
            (0..hammer_count).map(|i| if i % 2 == 0 { below(1) } else { dummy }).collect()
        }
        AttackPattern::HalfDouble { far_per_near } => {
            let period = far_per_near as usize + 1;
            let mut near = 0;
            (0..hammer_count)
                .map(|i| {
                    if i % period == far_per_near as usize {
                        near += 1;
                        if near % 2 == 1 {
                            below(1)
                        } else {
                            above(1)
                        }
                    } else if (i - i / period).is_multiple_of(2) {
                        below(2)
                    } else {
                        above(2)
                    }
                })
                .collect()
        }
    }
}

/// Back-to-back reads that hammer around `victim` in flat bank `bank`.
pub fn gen_attacker(
    mapper: &AddressMapper,
    bank: usize,
    victim: u32,
    hammer_count: usize,
    pattern: AttackPattern,
) -> Vec<TraceEntry> {
    attack_rows(victim, hammer_count, pattern, mapper.topology().rows_per_bank)
        .into_iter()
        .map(|row| TraceEntry::read(0, mapper.address_of(bank, row, 0)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomSpec {
    pub accesses: usize,
    /// Addresses are drawn uniformly from `[0, footprint_bytes)`.
    pub footprint_bytes: u64,
    pub write_fraction: f64,
    /// Bubbles are drawn uniformly from `[0, max_bubbles]`.
    pub max_bubbles: u32,
    /// Probability that an access continues at the next cache line.
    pub sequential: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        Self { accesses: 100_000, footprint_bytes: 1 << 30, write_fraction: 0.25, max_bubbles: 4, sequential: 0.0 }
    }
}

/// Random memory-intensive access stream.
pub fn gen_random(spec: &RandomSpec, seed: u64) -> Vec<TraceEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lines = (spec.footprint_bytes / 64).max(1);
    let mut line = rng.gen_range(0..lines);
    (0..spec.accesses)
        .map(|_| {
            line = if rng.gen_bool(spec.sequential) { (line + 1) % lines } else { rng.gen_range(0..lines) };
            let bubbles = rng.gen_range(0..=spec.max_bubbles);
            if rng.gen_bool(spec.write_fraction) {
                TraceEntry::write(bubbles, line * 64)
            } else {
                TraceEntry::read(bubbles, line * 64)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dram::topology::Topology;

    #[test]
    fn double_sided_alternates() {
        assert_eq!(attack_rows(100, 4, AttackPattern::DoubleSided, 65536), vec![99, 101, 99, 101]);
        assert_eq!(attack_rows(0, 2, AttackPattern::DoubleSided, 65536), vec![2, 1]);
    }

    #[test]
    fn addresses_map_to_intended_rows() {
        let m = AddressMapper::new(Topology::default(), 4).unwrap();
        for e in gen_attacker(&m, 21, 500, 6, AttackPattern::DoubleSided) {
            let x = m.map(e.addr).unwrap();
            assert_eq!(m.bank_index(&x), 21);
            assert!(x.row == 499 || x.row == 501);
        }
    }

    #[test]
    fn half_double_ratio() {
        let rows = attack_rows(100, 17 * 10, AttackPattern::HalfDouble { far_per_near: 16 }, 65536);
        let near = rows.iter().filter(|&&r| r == 99 || r == 101).count();
        let far = rows.iter().filter(|&&r| r == 98 || r == 102).count();
        assert_eq!((far, near), (160, 10));
        assert_eq!(&rows[..4], &[98, 102, 98, 102]);
    }

    #[test]
    fn single_sided_forces_misses() {
        let rows = attack_rows(100, 4, AttackPattern::Single, 65536);
        assert_eq!(rows, vec![99, 1124, 99, 1124]);
    }

    #[test]
    fn pattern_names() {
        for p in [AttackPattern::DoubleSided, AttackPattern::Single, AttackPattern::HalfDouble { far_per_near: 8 }] {
            assert_eq!(p.to_string().parse::<AttackPattern>().unwrap(), p);
        }
    }

    #[test]
    fn random_is_seeded() {
        let s = RandomSpec { accesses: 100, ..RandomSpec::default() };
        assert_eq!(gen_random(&s, 4), gen_random(&s, 4));
        assert_ne!(gen_random(&s, 4), gen_random(&s, 5));
        assert!(gen_random(&s, 1).iter().all(|e| e.addr % 64 == 0 && e.addr < 1 << 30));
    }
}
