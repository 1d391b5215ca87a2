//! Per-bank command state machines and device-side RFM/PRAC behavior.

use std::collections::BTreeSet;

use crate::command::{CmdKind, Restore};
use crate::dram::timing::{ns_to_ticks, DeviceTimings, Tick, TimingTicks};
use crate::dram::topology::Topology;
use crate::dram::victims_of;
use crate::error::DeviceError;
use crate::pacram::PacramState;
use crate::tracker::FrequentItems;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankPhase {
    Precharged,
    Activating,
    Active,
    Precharging,
    Refreshing,
}

impl BankPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Precharged => "precharged",
            Self::Activating => "activating",
            Self::Active => "active",
            Self::Precharging => "precharging",
            Self::Refreshing => "refreshing",
        }
    }
}

/// Per-row activation counters of one bank, with ordered access to the maximum.
#[derive(Debug, Clone)]
pub struct PracCounters {
    counts: Vec<u32>,
    order: BTreeSet<(u32, u32)>,
}

impl PracCounters {
    fn new(rows: u32) -> Self {
        Self { counts: vec![0; rows as usize], order: BTreeSet::new() }
    }

    fn increment(&mut self, row: u32) -> u32 {
        let c = &mut self.counts[row as usize];
        if *c > 0 {
            self.order.remove(&(*c, row));
        }
        *c += 1;
        self.order.insert((*c, row));
        *c
    }

    pub fn get(&self, row: u32) -> u32 {
        self.counts[row as usize]
    }

    /// Highest counter, ties to the lowest row.
    pub fn max(&self) -> Option<(u32, u32)> {
        let &(max, _) = self.order.last()?;
        self.order.range((max, 0)..=(max, u32::MAX)).next().map(|&(c, r)| (r, c))
    }

    fn reset(&mut self, row: u32) {
        let c = std::mem::take(&mut self.counts[row as usize]);
        if c > 0 {
            self.order.remove(&(c, row));
        }
    }
}

#[derive(Debug, Clone)]
pub struct BankState {
    pub open_row: Option<u32>,
    act_at: Tick,
    pre_at: Tick,
    next_act: Tick,
    next_pre: Tick,
    next_cas: Tick,
    busy_until: Tick,
    prac: Option<PracCounters>,
    tracker: Option<FrequentItems>,
}

impl BankState {
    fn new() -> Self {
        Self {
            open_row: None,
            act_at: 0,
            pre_at: 0,
            next_act: 0,
            next_pre: 0,
            next_cas: 0,
            busy_until: 0,
            prac: None,
            tracker: None,
        }
    }

    pub fn phase(&self, now: Tick, rcd: Tick) -> BankPhase {
        match self.open_row {
            Some(_) if now < self.act_at + rcd => BankPhase::Activating,
            Some(_) => BankPhase::Active,
            None if now < self.busy_until => BankPhase::Refreshing,
            None if now < self.next_act && now >= self.pre_at && self.pre_at > 0 => BankPhase::Precharging,
            None => BankPhase::Precharged,
        }
    }

    pub fn busy_until(&self) -> Tick {
        self.busy_until
    }

    pub fn prac(&self) -> Option<&PracCounters> {
        self.prac.as_ref()
    }

    pub fn tracker(&self) -> Option<&FrequentItems> {
        self.tracker.as_ref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceMode {
    Plain,
    /// RFM: the device tracks aggressors in a small frequent-items table per bank.
    Rfm { tracker_k: usize },
    /// PRAC: per-row counters, back-off once any counter reaches `threshold`.
    Prac { threshold: u32 },
}

/// One victim-row refresh performed inside an RFM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VictimRefresh {
    pub tick: Tick,
    pub row: u32,
    pub restore: Restore,
    pub duration: Tick,
}

#[derive(Debug, Clone)]
pub struct Device {
    topo: Topology,
    t: TimingTicks,
    partial_ras: Tick,
    partial_rfc: Tick,
    banks: Vec<BankState>,
    rank_ref_until: Vec<Tick>,
    cas_until: Tick,
    mode: DeviceMode,
    blast_radius: u32,
    /// Mode-register copy of the partial-restoration state (on-die operation).
    pacram: Option<PacramState>,
}

impl Device {
    pub fn new(topo: Topology, timings: &DeviceTimings, mode: DeviceMode, blast_radius: u32) -> Self {
        let mut banks: Vec<BankState> = (0..topo.total_banks()).map(|_| BankState::new()).collect();
        for b in &mut banks {
            match mode {
                DeviceMode::Plain => {}
                DeviceMode::Rfm { tracker_k } => b.tracker = Some(FrequentItems::new(tracker_k)),
                DeviceMode::Prac { .. } => b.prac = Some(PracCounters::new(topo.rows_per_bank)),
            }
        }
        let t = timings.ticks();
        Self {
            topo,
            t,
            partial_ras: t.ras,
            partial_rfc: t.rfc,
            rank_ref_until: vec![0; topo.total_ranks()],
            banks,
            cas_until: 0,
            mode,
            blast_radius,
            pacram: None,
        }
    }

    /// Sets the reduced restoration latency (tRAS and tRFC scaled by `m`).
    pub fn set_partial_latency(&mut self, t_ras_red_ns: f64, m: f64, timings: &DeviceTimings) {
        self.partial_ras = ns_to_ticks(t_ras_red_ns);
        self.partial_rfc = ns_to_ticks(timings.t_rfc * m);
    }

    /// Stores partial-restoration state in the device for on-die operation.
    pub fn write_mode_register(&mut self, state: PacramState) {
        self.set_partial_ras_ticks(state.partial_ras_ticks());
        self.pacram = Some(state);
    }

    fn set_partial_ras_ticks(&mut self, ticks: Tick) {
        self.partial_ras = ticks;
    }

    pub fn ondie_pacram(&self) -> Option<&PacramState> {
        self.pacram.as_ref()
    }

    pub fn ondie_pacram_mut(&mut self) -> Option<&mut PacramState> {
        self.pacram.as_mut()
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn ticks(&self) -> &TimingTicks {
        &self.t
    }

    pub fn mode(&self) -> DeviceMode {
        self.mode
    }

    pub fn bank(&self, bank: usize) -> &BankState {
        &self.banks[bank]
    }

    pub fn restore_ticks(&self, r: Restore) -> Tick {
        match r {
            Restore::Full => self.t.ras,
            Restore::Partial => self.partial_ras,
        }
    }

    /// Bank-busy time of one victim-row refresh.
    pub fn victim_refresh_ticks(&self, r: Restore) -> Tick {
        self.restore_ticks(r) + self.t.rp
    }

    pub fn ref_ticks(&self, r: Restore) -> Tick {
        match r {
            Restore::Full => self.t.rfc,
            Restore::Partial => self.partial_rfc,
        }
    }

    fn illegal(&self, cmd: CmdKind, bank: usize, now: Tick) -> DeviceError {
        DeviceError::IllegalState {
            cmd: cmd.as_str(),
            rank: self.topo.rank_of(bank),
            bank: self.topo.bank_in_rank(bank),
            state: self.banks[bank].phase(now, self.t.rcd).as_str(),
        }
    }

    /// Earliest tick at or after `now` when `cmd` may issue to `bank`.
    pub fn legal_at(&self, bank: usize, cmd: CmdKind, now: Tick) -> Result<Tick, DeviceError> {
        let b = &self.banks[bank];
        let rank_free = self.rank_ref_until[self.topo.rank_of(bank)];
        let t = match cmd {
            CmdKind::Act | CmdKind::Vrr | CmdKind::Rfm => {
                if b.open_row.is_some() {
                    return Err(self.illegal(cmd, bank, now));
                }
                b.next_act.max(b.busy_until).max(rank_free)
            }
            CmdKind::Pre => {
                if b.open_row.is_none() {
                    return Err(self.illegal(cmd, bank, now));
                }
                b.next_pre
            }
            CmdKind::Rd | CmdKind::Wr => {
                if b.open_row.is_none() {
                    return Err(self.illegal(cmd, bank, now));
                }
                b.next_cas.max(self.cas_until)
            }
            CmdKind::Ref => return self.ref_legal_at(self.topo.rank_of(bank), now),
        };
        Ok(t.max(now))
    }

    pub fn ref_legal_at(&self, rank: usize, now: Tick) -> Result<Tick, DeviceError> {
        let n = self.topo.banks_per_rank();
        let mut t = self.rank_ref_until[rank].max(now);
        for bank in rank * n..(rank + 1) * n {
            let b = &self.banks[bank];
            if b.open_row.is_some() {
                return Err(self.illegal(CmdKind::Ref, bank, now));
            }
            t = t.max(b.next_act).max(b.busy_until);
        }
        Ok(t)
    }

    fn check(&self, bank: usize, cmd: CmdKind, now: Tick) -> Result<(), DeviceError> {
        let legal = self.legal_at(bank, cmd, now)?;
        assert!(
            legal <= now,
            "{} to bank {bank} at tick {now} before it is legal at {legal}",
            cmd.as_str()
        );
        Ok(())
    }

    /// Issues a bank command and returns its completion tick: data return for
    /// RD/WR, end of tRCD for ACT, end of tRP for PRE, end of the bank-busy
    /// period for VRR.
    pub fn issue(
        &mut self,
        bank: usize,
        cmd: CmdKind,
        row: u32,
        now: Tick,
        restore: Restore,
    ) -> Result<Tick, DeviceError> {
        self.check(bank, cmd, now)?;
        let t = self.t;
        let restore_ticks = self.restore_ticks(restore);
        let b = &mut self.banks[bank];
        Ok(match cmd {
            CmdKind::Act => {
                b.open_row = Some(row);
                b.act_at = now;
                b.next_pre = now + t.ras;
                b.next_cas = now + t.rcd;
                b.next_act = now + t.rc;
                if let Some(p) = &mut b.prac {
                    p.increment(row);
                }
                if let Some(tr) = &mut b.tracker {
                    tr.record(row);
                }
                now + t.rcd
            }
            CmdKind::Pre => {
                b.open_row = None;
                b.pre_at = now;
                b.next_act = b.next_act.max(now + t.rp);
                now + t.rp
            }
            CmdKind::Rd | CmdKind::Wr => {
                self.cas_until = now + t.bl;
                now + t.cl + t.bl
            }
            CmdKind::Vrr => {
                let end = now + restore_ticks + t.rp;
                b.busy_until = end;
                b.next_act = b.next_act.max(end);
                end
            }
            CmdKind::Rfm | CmdKind::Ref => panic!("use rfm_service / issue_ref"),
        })
    }

    pub fn issue_ref(&mut self, rank: usize, now: Tick, restore: Restore) -> Result<Tick, DeviceError> {
        let legal = self.ref_legal_at(rank, now)?;
        assert!(legal <= now, "REF to rank {rank} at tick {now} before it is legal at {legal}");
        let end = now + self.ref_ticks(restore);
        self.rank_ref_until[rank] = end;
        Ok(end)
    }

    /// Back-off request: `true` once any PRAC counter of `bank` reaches the threshold.
    pub fn prac_check_backoff(&self, bank: usize) -> bool {
        match (self.mode, &self.banks[bank].prac) {
            (DeviceMode::Prac { threshold }, Some(p)) => p.max().is_some_and(|(_, c)| c >= threshold),
            _ => false,
        }
    }

    /// Serves an RFM: picks the bank's top aggressor, refreshes its neighbors
    /// back to back and clears its tracking state. `ctrl_pacram` supplies
    /// latency decisions when they are made by the controller; the device's own
    /// mode-register state takes precedence, and without either every refresh
    /// is full.
    pub fn rfm_service(
        &mut self,
        bank: usize,
        now: Tick,
        ctrl_pacram: Option<&mut PacramState>,
    ) -> Result<Vec<VictimRefresh>, DeviceError> {
        self.check(bank, CmdKind::Rfm, now)?;
        let rows = self.topo.rows_per_bank;
        let b = &mut self.banks[bank];
        let aggressor = if let Some(p) = &mut b.prac {
            let top = p.max().map(|(r, _)| r);
            if let Some(r) = top {
                p.reset(r);
            }
            top
        } else if let Some(tr) = &mut b.tracker {
            let top = tr.top().map(|(r, _)| r);
            if let Some(r) = top {
                tr.remove(r);
            }
            top
        } else {
            None
        };
        let Some(aggressor) = aggressor else { return Ok(Vec::new()) };
        let mut pacram = match self.pacram.as_mut() {
            Some(p) => Some(p),
            None => ctrl_pacram,
        };
        let mut t = now;
        let mut out = Vec::with_capacity(2 * self.blast_radius as usize);
        for row in victims_of(aggressor, self.blast_radius, rows) {
            let restore = match pacram.as_deref_mut() {
                Some(p) => p.select_latency(bank, row, t),
                None => Restore::Full,
            };
            let duration = match restore {
                Restore::Full => self.t.ras,
                Restore::Partial => self.partial_ras,
            } + self.t.rp;
            out.push(VictimRefresh { tick: t, row, restore, duration });
            t += duration;
        }
        let b = &mut self.banks[bank];
        b.busy_until = t;
        b.next_act = b.next_act.max(t);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dev(mode: DeviceMode) -> Device {
        Device::new(Topology::default(), &DeviceTimings::ddr5_default(), mode, 2)
    }

    #[test]
    fn act_pre_act_spacing() {
        let mut d = dev(DeviceMode::Plain);
        d.issue(0, CmdKind::Act, 5, 0, Restore::Full).unwrap();
        assert_eq!(d.legal_at(0, CmdKind::Pre, 0).unwrap(), 44);
        assert_eq!(d.legal_at(0, CmdKind::Rd, 0).unwrap(), 20);
        assert!(d.legal_at(0, CmdKind::Act, 0).is_err());
        d.issue(0, CmdKind::Pre, 0, 44, Restore::Full).unwrap();
        assert_eq!(d.legal_at(0, CmdKind::Act, 44).unwrap(), 64);
    }

    #[test]
    fn hit_is_legal_immediately() {
        let mut d = dev(DeviceMode::Plain);
        d.issue(3, CmdKind::Act, 5, 0, Restore::Full).unwrap();
        assert_eq!(d.legal_at(3, CmdKind::Rd, 100).unwrap(), 100);
    }

    #[test]
    fn read_on_closed_bank_is_illegal() {
        let d = dev(DeviceMode::Plain);
        assert_eq!(
            d.legal_at(0, CmdKind::Rd, 0),
            Err(DeviceError::IllegalState { cmd: "RD", rank: 0, bank: 0, state: "precharged" })
        );
    }

    #[test]
    fn victim_refresh_busy_time() {
        let mut d = dev(DeviceMode::Plain);
        let t = DeviceTimings::ddr5_default();
        assert_eq!(d.issue(0, CmdKind::Vrr, 9, 0, Restore::Full).unwrap(), ns_to_ticks(48.0));
        d.set_partial_latency(12.0, 0.36, &t);
        assert_eq!(d.victim_refresh_ticks(Restore::Partial), ns_to_ticks(12.0) + ns_to_ticks(15.0));
        assert_eq!(d.issue(1, CmdKind::Vrr, 9, 0, Restore::Partial).unwrap(), 36);
        assert_eq!(d.legal_at(1, CmdKind::Act, 0).unwrap(), 36);
    }

    #[test]
    fn refresh_blocks_rank() {
        let mut d = dev(DeviceMode::Plain);
        let end = d.issue_ref(0, 10, Restore::Full).unwrap();
        assert_eq!(end, 10 + ns_to_ticks(195.0));
        assert_eq!(d.legal_at(5, CmdKind::Act, 11).unwrap(), end);
        assert_eq!(d.legal_at(16, CmdKind::Act, 11).unwrap(), 11);
    }

    #[test]
    fn prac_backoff_and_service() {
        let mut d = dev(DeviceMode::Prac { threshold: 3 });
        let mut now = 0;
        for _ in 0..2 {
            d.issue(2, CmdKind::Act, 100, now, Restore::Full).unwrap();
            d.issue(2, CmdKind::Pre, 0, now + 44, Restore::Full).unwrap();
            now += 64;
        }
        assert!(!d.prac_check_backoff(2));
        d.issue(2, CmdKind::Act, 100, now, Restore::Full).unwrap();
        assert!(d.prac_check_backoff(2));
        d.issue(2, CmdKind::Pre, 0, now + 44, Restore::Full).unwrap();
        now += 64;
        let v = d.rfm_service(2, now, None).unwrap();
        let rows: Vec<u32> = v.iter().map(|x| x.row).collect();
        assert_eq!(rows, vec![98, 99, 101, 102]);
        assert_eq!(v[3].tick, now + 3 * 64);
        assert!(!d.prac_check_backoff(2));
        assert_eq!(d.bank(2).prac().unwrap().get(100), 0);
    }

    #[test]
    fn rfm_with_empty_tracker_is_noop() {
        let mut d = dev(DeviceMode::Rfm { tracker_k: 16 });
        assert!(d.rfm_service(0, 0, None).unwrap().is_empty());
    }

    #[test]
    fn rfm_clamps_at_row_zero() {
        let mut d = dev(DeviceMode::Rfm { tracker_k: 16 });
        d.issue(0, CmdKind::Act, 0, 0, Restore::Full).unwrap();
        d.issue(0, CmdKind::Pre, 0, 44, Restore::Full).unwrap();
        let v = d.rfm_service(0, 64, None).unwrap();
        assert_eq!(v.iter().map(|x| x.row).collect::<Vec<_>>(), vec![1, 2]);
    }
}
