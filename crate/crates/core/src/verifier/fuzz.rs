//! Random legal command streams produced through the device model, used to
//! cross-check the verifier against the simulator's own legality rules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::command::{CmdKind, Command, Restore};
use crate::dram::device::{Device, DeviceMode};
use crate::dram::timing::{DeviceTimings, Tick};
use crate::dram::topology::Topology;

/// Generates `len` commands that the device accepts. Each command issues at
/// its earliest legal tick or up to `max_slack` ticks later.
pub fn legal_stream(
    topo: Topology,
    timings: &DeviceTimings,
    partial: (f64, f64),
    len: usize,
    max_slack: Tick,
    seed: u64,
) -> Vec<Command> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dev = Device::new(topo, timings, DeviceMode::Rfm { tracker_k: 8 }, 2);
    dev.set_partial_latency(partial.0, partial.1, timings);
    let banks = topo.total_banks();
    let bpr = topo.banks_per_rank();
    let rows = topo.rows_per_bank.min(64);
    let mut now: Tick = 0;
    let mut out = Vec::with_capacity(len + 8);
    let emit = |out: &mut Vec<Command>, tick, kind, bank: usize, row, restore| {
        out.push(Command { tick, kind, rank: (bank / bpr) as u16, bank: (bank % bpr) as u16, row, restore });
    };
    while out.len() < len {
        let slack = if rng.gen_bool(0.5) { 0 } else { rng.gen_range(0..=max_slack) };
        if rng.gen_ratio(1, 200) {
            let rank = rng.gen_range(0..topo.total_ranks());
            for bank in rank * bpr..(rank + 1) * bpr {
                if dev.bank(bank).open_row.is_some() {
                    let t = dev.legal_at(bank, CmdKind::Pre, now).unwrap();
                    now = t;
                    dev.issue(bank, CmdKind::Pre, 0, t, Restore::Full).unwrap();
                    emit(&mut out, t, CmdKind::Pre, bank, 0, None);
                }
            }
            let t = dev.ref_legal_at(rank, now).unwrap() + slack;
            let r = if rng.gen_bool(0.5) { Restore::Full } else { Restore::Partial };
            dev.issue_ref(rank, t, r).unwrap();
            now = t;
            emit(&mut out, t, CmdKind::Ref, rank * bpr, 0, Some(r));
            continue;
        }
        let bank = rng.gen_range(0..banks);
        let open = dev.bank(bank).open_row;
        let (kind, row) = match open {
            Some(r) => match rng.gen_range(0..3) {
                0 => (CmdKind::Pre, 0),
                1 => (CmdKind::Rd, r),
                _ => (CmdKind::Wr, r),
            },
            None => match rng.gen_range(0..10) {
                0 => (CmdKind::Rfm, 0),
                1 | 2 => (CmdKind::Vrr, rng.gen_range(0..rows)),
                _ => (CmdKind::Act, rng.gen_range(0..rows)),
            },
        };
        let t = dev.legal_at(bank, kind, now).unwrap() + slack;
        now = t;
        match kind {
            CmdKind::Rfm => {
                emit(&mut out, t, CmdKind::Rfm, bank, 0, None);
                for v in dev.rfm_service(bank, t, None).unwrap() {
                    emit(&mut out, v.tick, CmdKind::Vrr, bank, v.row, Some(v.restore));
                }
            }
            CmdKind::Vrr => {
                let r = if rng.gen_bool(0.5) { Restore::Full } else { Restore::Partial };
                dev.issue(bank, kind, row, t, r).unwrap();
                emit(&mut out, t, kind, bank, row, Some(r));
            }
            _ => {
                dev.issue(bank, kind, row, t, Restore::Full).unwrap();
                emit(&mut out, t, kind, bank, if kind == CmdKind::Pre { 0 } else { row }, None);
            }
        }
    }
    out.truncate(len);
    out
}
