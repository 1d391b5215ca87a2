//! Traces, the core model and run statistics.

pub mod cache;
pub mod core;
pub mod energy;
pub mod generator;
pub mod stats;
pub mod trace;

pub use cache::{Cache, CacheConfig};
pub use core::{Core, CoreLimits, ISSUE_WIDTH};
pub use energy::{EnergyBreakdown, EnergyModel, EnergyTable};
pub use generator::{attack_rows, gen_attacker, gen_random, AttackPattern, RandomSpec};
pub use stats::{write_stats, CommandCounter, CoreStats, RunStats};
pub use trace::{load_trace, parse_trace, save_trace, write_trace, TraceEntry, TraceReader};
