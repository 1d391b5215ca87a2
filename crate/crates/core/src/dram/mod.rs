pub mod device;
pub mod timing;
pub mod topology;

pub use device::{BankPhase, BankState, Device, DeviceMode, VictimRefresh};
pub use timing::{ns_to_ticks, ticks_to_ns, DeviceTimings, Tick, TimingTicks};
pub use topology::Topology;

/// Rows within `blast_radius` of `row` on both sides, clamped to the bank.
pub fn victims_of(row: u32, blast_radius: u32, rows_per_bank: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(2 * blast_radius as usize);
    for d in (1..=blast_radius).rev() {
        if let Some(r) = row.checked_sub(d) {
            out.push(r);
        }
    }
    for d in 1..=blast_radius {
        let r = row as u64 + d as u64;
        if r < rows_per_bank as u64 {
            out.push(r as u32);
        }
    }
    out
}
