//! Memory controller: request queues, FR-FCFS scheduling, periodic refresh,
//! and the preventive-refresh issue path.

pub mod mapping;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::command::{CmdKind, Command, CommandSink, Restore};
use crate::dram::device::Device;
use crate::dram::timing::Tick;
use crate::dram::victims_of;
use crate::error::DeviceError;
use crate::mitigation::{Action, MetaAccess, Mitigation};
use crate::pacram::PacramState;
pub use mapping::{AddressMapper, MappedAddress};

/// Longest a demand request may wait before the controller is considered stuck.
pub const WATCHDOG_TICKS: Tick = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReqKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Core(usize),
    /// Mitigation metadata traffic.
    Meta,
}

#[derive(Debug, Clone, Copy)]
pub struct Request {
    pub id: u64,
    pub kind: ReqKind,
    pub addr: u64,
    pub source: Source,
    pub arrival: Tick,
    bank: usize,
    row: u32,
    activated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Completion {
    pub tick: Tick,
    pub id: u64,
    pub source: Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    Victim(u32),
    Rfm,
}

#[derive(Debug, Clone, Copy)]
pub struct ControllerConfig {
    pub queue_depth: usize,
    pub write_high: usize,
    pub write_low: usize,
    pub blast_radius: u32,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self { queue_depth: 64, write_high: 54, write_low: 26, blast_radius: 2 }
    }
}

impl ControllerConfig {
    pub fn with_depth(depth: usize, blast_radius: u32) -> Self {
        Self {
            queue_depth: depth,
            write_high: (depth * 54).div_ceil(64).min(depth),
            write_low: depth * 26 / 64,
            blast_radius,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ControllerStats {
    pub reads: u64,
    pub writes: u64,
    pub forwarded_reads: u64,
    pub row_hits: u64,
    pub row_misses: u64,
    pub demand_acts: u64,
    pub meta_reads: u64,
    pub meta_writes: u64,
    pub victim_refreshes: u64,
    pub rfms: u64,
    pub refs: u64,
    pub total_read_latency: u64,
}

/// Where partial-restoration decisions are made.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacramSite {
    Off,
    Controller,
    Device,
}

pub struct Controller {
    cfg: ControllerConfig,
    mapper: AddressMapper,
    device: Device,
    mitigation: Mitigation,
    pacram: Option<PacramState>,
    site: PacramSite,
    read_q: Vec<Request>,
    write_q: Vec<Request>,
    write_drain: bool,
    pending: Vec<VecDeque<Pending>>,
    pending_banks: Vec<usize>,
    ref_due: Vec<Tick>,
    ref_index: Vec<u64>,
    completions: BinaryHeap<Reverse<(Tick, u64, usize)>>,
    meta_base: u64,
    next_id: u64,
    actions: Vec<Action>,
    stats: ControllerStats,
}

const META_SOURCE: usize = usize::MAX;

impl Controller {
    pub fn new(
        cfg: ControllerConfig,
        mapper: AddressMapper,
        mut device: Device,
        mitigation: Mitigation,
        pacram: Option<PacramState>,
        ondie: bool,
        meta_base: u64,
    ) -> Self {
        let topo = *mapper.topology();
        let refi = device.ticks().refi;
        let ranks = topo.total_ranks();
        let (pacram, site) = match pacram {
            None => (None, PacramSite::Off),
            Some(p) if ondie => {
                device.write_mode_register(p);
                (None, PacramSite::Device)
            }
            Some(p) => (Some(p), PacramSite::Controller),
        };
        Self {
            cfg,
            mapper,
            mitigation,
            pacram,
            site,
            read_q: Vec::with_capacity(cfg.queue_depth),
            write_q: Vec::with_capacity(cfg.queue_depth),
            write_drain: false,
            pending: vec![VecDeque::new(); topo.total_banks()],
            pending_banks: Vec::new(),
            ref_due: (0..ranks).map(|r| refi * (r as u64 + 1) / ranks as u64).collect(),
            ref_index: vec![0; ranks],
            completions: BinaryHeap::new(),
            meta_base,
            next_id: 0,
            actions: Vec::new(),
            stats: ControllerStats::default(),
            device,
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn mitigation(&self) -> &Mitigation {
        &self.mitigation
    }

    pub fn mapper(&self) -> &AddressMapper {
        &self.mapper
    }

    pub fn stats(&self) -> ControllerStats {
        self.stats
    }

    pub fn pacram_site(&self) -> PacramSite {
        self.site
    }

    pub fn pacram(&self) -> Option<&PacramState> {
        match self.site {
            PacramSite::Device => self.device.ondie_pacram(),
            _ => self.pacram.as_ref(),
        }
    }

    fn pacram_mut(&mut self) -> Option<&mut PacramState> {
        match self.site {
            PacramSite::Device => self.device.ondie_pacram_mut(),
            _ => self.pacram.as_mut(),
        }
    }

    pub fn meta_base(&self) -> u64 {
        self.meta_base
    }

    pub fn queue_len(&self, kind: ReqKind) -> usize {
        match kind {
            ReqKind::Read => self.read_q.len(),
            ReqKind::Write => self.write_q.len(),
        }
    }

    pub fn has_space(&self, kind: ReqKind) -> bool {
        self.queue_len(kind) < self.cfg.queue_depth
    }

    pub fn outstanding(&self) -> usize {
        self.read_q.len() + self.write_q.len() + self.completions.len()
    }

    /// Adds a request. Returns `Ok(None)` when the queue is full, otherwise the request id.
    pub fn enqueue(&mut self, kind: ReqKind, addr: u64, source: Source, now: Tick) -> Result<Option<u64>, DeviceError> {
        let line = addr & !63;
        let m = self.mapper.map(line)?;
        if matches!(source, Source::Core(_)) && !self.has_space(kind) {
            return Ok(None);
        }
        let id = self.next_id;
        self.next_id += 1;
        if kind == ReqKind::Read && self.write_q.iter().any(|w| w.addr == line) {
            self.stats.forwarded_reads += 1;
            self.push_completion(now + 1, id, source);
            return Ok(Some(id));
        }
        let req = Request {
            id,
            kind,
            addr: line,
            source,
            arrival: now,
            bank: self.mapper.bank_index(&m),
            row: m.row,
            activated: false,
        };
        match kind {
            ReqKind::Read => self.read_q.push(req),
            ReqKind::Write => self.write_q.push(req),
        }
        Ok(Some(id))
    }

    fn push_completion(&mut self, tick: Tick, id: u64, source: Source) {
        let s = match source {
            Source::Core(c) => c,
            Source::Meta => META_SOURCE,
        };
        self.completions.push(Reverse((tick, id, s)));
    }

    pub fn next_completion(&self) -> Option<Tick> {
        self.completions.peek().map(|Reverse((t, _, _))| *t)
    }

    /// Pops the earliest completion due at or before `now`.
    pub fn pop_completion(&mut self, now: Tick) -> Option<Completion> {
        let &Reverse((t, id, s)) = self.completions.peek()?;
        if t > now {
            return None;
        }
        self.completions.pop();
        let source = if s == META_SOURCE { Source::Meta } else { Source::Core(s) };
        Some(Completion { tick: t, id, source })
    }

    fn emit(&self, sink: &mut dyn CommandSink, tick: Tick, kind: CmdKind, bank: usize, row: u32, restore: Option<Restore>) {
        let topo = self.mapper.topology();
        sink.record(&Command {
            tick,
            kind,
            rank: topo.rank_of(bank) as u16,
            bank: topo.bank_in_rank(bank) as u16,
            row,
            restore,
        });
    }

    fn rank_draining(&self, rank: usize, now: Tick) -> bool {
        now >= self.ref_due[rank]
    }

    /// Queues preventive refreshes of `victims` in `bank`, skipping rows already queued.
    pub fn issue_preventive_refresh(&mut self, bank: usize, victims: &[u32]) {
        if victims.is_empty() {
            return;
        }
        let q = &mut self.pending[bank];
        if q.is_empty() {
            self.pending_banks.push(bank);
        }
        for &r in victims {
            if !q.contains(&Pending::Victim(r)) {
                q.push_back(Pending::Victim(r));
            }
        }
    }

    /// Queues an RFM to `bank` ahead of its demand traffic.
    pub fn handle_backoff(&mut self, bank: usize) {
        let q = &mut self.pending[bank];
        if q.is_empty() {
            self.pending_banks.push(bank);
        }
        q.push_back(Pending::Rfm);
    }

    pub fn has_pending_refresh(&self, bank: usize) -> bool {
        !self.pending[bank].is_empty()
    }

    /// Issues at most one command at `now`. Returns `None` if a command was
    /// issued, otherwise the earliest tick at which one may become issuable
    /// (`Tick::MAX` when the controller is idle).
    pub fn step(&mut self, now: Tick, sink: &mut dyn CommandSink) -> Option<Tick> {
        self.watchdog(now);
        let mut next = Tick::MAX;
        match self.step_refresh(now, sink) {
            Ok(()) => return None,
            Err(t) => next = next.min(t),
        }
        match self.step_preventive(now, sink) {
            Ok(()) => return None,
            Err(t) => next = next.min(t),
        }
        match self.step_demand(now, sink) {
            Ok(()) => return None,
            Err(t) => next = next.min(t),
        }
        Some(next.max(now + 1))
    }

    fn watchdog(&self, now: Tick) {
        for q in [&self.read_q, &self.write_q] {
            if let Some(r) = q.first() {
                assert!(
                    now - r.arrival <= WATCHDOG_TICKS,
                    "request {} to {:#x} waited {} ticks",
                    r.id,
                    r.addr,
                    now - r.arrival
                );
            }
        }
    }

    fn step_refresh(&mut self, now: Tick, sink: &mut dyn CommandSink) -> Result<(), Tick> {
        let topo = *self.mapper.topology();
        let bpr = topo.banks_per_rank();
        let mut next = Tick::MAX;
        for rank in 0..topo.total_ranks() {
            if !self.rank_draining(rank, now) {
                next = next.min(self.ref_due[rank]);
                continue;
            }
            let mut any_open = false;
            for bank in rank * bpr..(rank + 1) * bpr {
                if self.device.bank(bank).open_row.is_some() {
                    any_open = true;
                    let t = self.device.legal_at(bank, CmdKind::Pre, now).expect("open bank");
                    if t <= now {
                        self.issue_pre(bank, now, sink);
                        return Ok(());
                    }
                    next = next.min(t);
                }
            }
            if any_open {
                continue;
            }
            let t = self.device.ref_legal_at(rank, now).expect("all banks closed");
            if t > now {
                next = next.min(t);
                continue;
            }
            let restore = self.pacram().map_or(Restore::Full, |p| p.next_ref_restore(rank));
            self.device.issue_ref(rank, now, restore).expect("legal REF");
            let rows = topo.rows_per_ref();
            let first_row = (self.ref_index[rank] % u64::from(topo.refs_per_round())) as u32 * rows;
            self.ref_index[rank] += 1;
            self.ref_due[rank] += self.device.ticks().refi;
            self.stats.refs += 1;
            if let Some(p) = self.pacram_mut() {
                p.on_periodic_refresh(rank, first_row, rows, restore, now);
            }
            self.emit(sink, now, CmdKind::Ref, rank * bpr, first_row, Some(restore));
            return Ok(());
        }
        Err(next)
    }

    fn step_preventive(&mut self, now: Tick, sink: &mut dyn CommandSink) -> Result<(), Tick> {
        let mut next = Tick::MAX;
        self.pending_banks.sort_unstable();
        for i in 0..self.pending_banks.len() {
            let bank = self.pending_banks[i];
            let rank = self.mapper.topology().rank_of(bank);
            if self.rank_draining(rank, now) {
                continue;
            }
            if self.device.bank(bank).open_row.is_some() {
                let t = self.device.legal_at(bank, CmdKind::Pre, now).expect("open bank");
                if t <= now {
                    self.issue_pre(bank, now, sink);
                    return Ok(());
                }
                next = next.min(t);
                continue;
            }
            let t = self.device.legal_at(bank, CmdKind::Vrr, now).expect("closed bank");
            if t > now {
                next = next.min(t);
                continue;
            }
            let work = self.pending[bank].pop_front().expect("pending bank has work");
            if self.pending[bank].is_empty() {
                self.pending_banks.remove(i);
            }
            match work {
                Pending::Victim(row) => {
                    let restore = match self.site {
                        PacramSite::Controller => {
                            self.pacram.as_mut().expect("controller state").select_latency(bank, row, now)
                        }
                        _ => Restore::Full,
                    };
                    self.device.issue(bank, CmdKind::Vrr, row, now, restore).expect("legal VRR");
                    self.stats.victim_refreshes += 1;
                    self.emit(sink, now, CmdKind::Vrr, bank, row, Some(restore));
                }
                Pending::Rfm => {
                    let ctrl = match self.site {
                        PacramSite::Controller => self.pacram.as_mut(),
                        _ => None,
                    };
                    let refreshes = self.device.rfm_service(bank, now, ctrl).expect("legal RFM");
                    self.stats.rfms += 1;
                    self.stats.victim_refreshes += refreshes.len() as u64;
                    self.emit(sink, now, CmdKind::Rfm, bank, 0, None);
                    for v in refreshes {
                        self.emit(sink, v.tick, CmdKind::Vrr, bank, v.row, Some(v.restore));
                    }
                }
            }
            return Ok(());
        }
        Err(next)
    }

    fn serve_writes(&mut self) -> bool {
        if self.write_q.len() >= self.cfg.write_high {
            self.write_drain = true;
        } else if self.write_q.len() <= self.cfg.write_low {
            self.write_drain = false;
        }
        self.write_drain || self.read_q.is_empty()
    }

    fn bank_blocked_for_act(&self, bank: usize, now: Tick) -> bool {
        !self.pending[bank].is_empty() || self.rank_draining(self.mapper.topology().rank_of(bank), now)
    }

    fn step_demand(&mut self, now: Tick, sink: &mut dyn CommandSink) -> Result<(), Tick> {
        let writes = self.serve_writes();
        let mut next = Tick::MAX;
        // row hits, oldest first
        {
            let q = if writes { &self.write_q } else { &self.read_q };
            let mut pick = None;
            for (i, r) in q.iter().enumerate() {
                if self.device.bank(r.bank).open_row != Some(r.row) {
                    continue;
                }
                let cmd = if r.kind == ReqKind::Read { CmdKind::Rd } else { CmdKind::Wr };
                let t = self.device.legal_at(r.bank, cmd, now).expect("open bank");
                if t <= now {
                    pick = Some(i);
                    break;
                }
                next = next.min(t);
            }
            if let Some(i) = pick {
                self.issue_column(writes, i, now, sink);
                return Ok(());
            }
        }
        // oldest request's ACT or PRE
        let q = if writes { &self.write_q } else { &self.read_q };
        let mut seen = 0u64;
        let mut seen_hi: Vec<usize> = Vec::new();
        let mut pick: Option<(usize, CmdKind)> = None;
        for r in q.iter() {
            let first_for_bank = if r.bank < 64 {
                let bit = 1u64 << r.bank;
                let fresh = seen & bit == 0;
                seen |= bit;
                fresh
            } else if seen_hi.contains(&r.bank) {
                false
            } else {
                seen_hi.push(r.bank);
                true
            };
            if !first_for_bank {
                continue;
            }
            match self.device.bank(r.bank).open_row {
                Some(open) if open == r.row => {}
                Some(open) => {
                    if q.iter().any(|o| o.bank == r.bank && o.row == open) {
                        continue;
                    }
                    let t = self.device.legal_at(r.bank, CmdKind::Pre, now).expect("open bank");
                    if t <= now {
                        pick = Some((r.bank, CmdKind::Pre));
                        break;
                    }
                    next = next.min(t);
                }
                None => {
                    if self.bank_blocked_for_act(r.bank, now) {
                        continue;
                    }
                    let t = self.device.legal_at(r.bank, CmdKind::Act, now).expect("closed bank");
                    if t <= now {
                        pick = Some((r.bank, CmdKind::Act));
                        break;
                    }
                    next = next.min(t);
                }
            }
        }
        match pick {
            Some((bank, CmdKind::Pre)) => {
                self.issue_pre(bank, now, sink);
                Ok(())
            }
            Some((bank, _)) => {
                self.issue_act(writes, bank, now, sink);
                Ok(())
            }
            None => Err(next),
        }
    }

    fn issue_pre(&mut self, bank: usize, now: Tick, sink: &mut dyn CommandSink) {
        self.device.issue(bank, CmdKind::Pre, 0, now, Restore::Full).expect("legal PRE");
        self.emit(sink, now, CmdKind::Pre, bank, 0, None);
    }

    fn issue_act(&mut self, writes: bool, bank: usize, now: Tick, sink: &mut dyn CommandSink) {
        let q = if writes { &mut self.write_q } else { &mut self.read_q };
        let req = q.iter_mut().find(|r| r.bank == bank).expect("request for bank");
        req.activated = true;
        let row = req.row;
        self.device.issue(bank, CmdKind::Act, row, now, Restore::Full).expect("legal ACT");
        self.stats.demand_acts += 1;
        self.emit(sink, now, CmdKind::Act, bank, row, None);
        let mut actions = std::mem::take(&mut self.actions);
        self.mitigation.on_activate(bank, row, now, &self.device, &mut actions);
        for a in actions.drain(..) {
            match a {
                Action::RefreshNeighbors { bank, row } => {
                    let v = victims_of(row, self.cfg.blast_radius, self.mapper.topology().rows_per_bank);
                    self.issue_preventive_refresh(bank, &v);
                }
                Action::Rfm { bank } => self.handle_backoff(bank),
                Action::Metadata(MetaAccess::Read(addr)) => {
                    self.stats.meta_reads += 1;
                    self.enqueue(ReqKind::Read, addr, Source::Meta, now).expect("metadata in range");
                }
                Action::Metadata(MetaAccess::Write(addr)) => {
                    self.stats.meta_writes += 1;
                    self.enqueue(ReqKind::Write, addr, Source::Meta, now).expect("metadata in range");
                }
            }
        }
        self.actions = actions;
    }

    fn issue_column(&mut self, writes: bool, idx: usize, now: Tick, sink: &mut dyn CommandSink) {
        let q = if writes { &mut self.write_q } else { &mut self.read_q };
        let req = q.remove(idx);
        let cmd = if req.kind == ReqKind::Read { CmdKind::Rd } else { CmdKind::Wr };
        let done = self.device.issue(req.bank, cmd, req.row, now, Restore::Full).expect("legal column command");
        if req.activated {
            self.stats.row_misses += 1;
        } else {
            self.stats.row_hits += 1;
        }
        self.emit(sink, now, cmd, req.bank, req.row, None);
        match req.kind {
            ReqKind::Read => {
                self.stats.reads += 1;
                self.stats.total_read_latency += done - req.arrival;
                self.push_completion(done, req.id, req.source);
            }
            ReqKind::Write => self.stats.writes += 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dram::device::DeviceMode;
    use crate::dram::timing::DeviceTimings;
    use crate::dram::topology::Topology;

    fn ctrl(mitigation: Mitigation) -> Controller {
        let topo = Topology::default();
        let t = DeviceTimings::ddr5_default();
        let mode = match mitigation {
            Mitigation::Rfm(_) => DeviceMode::Rfm { tracker_k: 16 },
            _ => DeviceMode::Plain,
        };
        Controller::new(
            ControllerConfig::default(),
            AddressMapper::new(topo, 4).unwrap(),
            Device::new(topo, &t, mode, 2),
            mitigation,
            None,
            false,
            topo.capacity_bytes() - (4 << 20),
        )
    }

    fn run_until_idle(c: &mut Controller, from: Tick, limit: Tick) -> Vec<Command> {
        let mut log = Vec::new();
        let mut now = from;
        while now < limit {
            match c.step(now, &mut log) {
                None => now += 1,
                Some(t) if t == Tick::MAX => break,
                Some(t) => now = t,
            }
            if c.read_q.is_empty() && c.write_q.is_empty() && c.pending_banks.is_empty() {
                break;
            }
        }
        log
    }

    #[test]
    fn row_hit_served_before_older_miss() {
        let mut c = ctrl(Mitigation::None);
        let m = c.mapper().clone();
        let a_row5 = m.address_of(0, 5, 0);
        let b_row6 = m.address_of(0, 6, 0);
        let a_row5_col1 = m.address_of(0, 5, 1);
        c.enqueue(ReqKind::Read, a_row5, Source::Core(0), 0).unwrap();
        let log = run_until_idle(&mut c, 0, 25);
        assert_eq!(log.iter().map(|x| x.kind).collect::<Vec<_>>(), vec![CmdKind::Act, CmdKind::Rd]);
        c.enqueue(ReqKind::Read, b_row6, Source::Core(0), 25).unwrap();
        c.enqueue(ReqKind::Read, a_row5_col1, Source::Core(0), 26).unwrap();
        let log = run_until_idle(&mut c, 26, 10_000);
        let kinds: Vec<_> = log.iter().map(|x| (x.kind, x.row)).collect();
        assert_eq!(kinds[0], (CmdKind::Rd, 5));
        assert_eq!(kinds[1], (CmdKind::Pre, 0));
        assert_eq!(kinds[2], (CmdKind::Act, 6));
    }

    #[test]
    fn refresh_preempts_reads() {
        let mut c = ctrl(Mitigation::None);
        let refi = c.device().ticks().refi;
        let due = c.ref_due[0];
        assert_eq!(due, refi / 2);
        let a = c.mapper().address_of(0, 5, 0);
        c.enqueue(ReqKind::Read, a, Source::Core(0), due).unwrap();
        let mut log = Vec::new();
        assert_eq!(c.step(due, &mut log), None);
        assert_eq!(log[0].kind, CmdKind::Ref);
    }

    #[test]
    fn preventive_refresh_blocks_acts_to_bank() {
        let mut c = ctrl(Mitigation::None);
        c.issue_preventive_refresh(3, &[10, 11]);
        let a = c.mapper().address_of(3, 50, 0);
        c.enqueue(ReqKind::Read, a, Source::Core(0), 0).unwrap();
        let log = run_until_idle(&mut c, 0, 10_000);
        let kinds: Vec<_> = log.iter().map(|x| x.kind).collect();
        assert_eq!(kinds, vec![CmdKind::Vrr, CmdKind::Vrr, CmdKind::Act, CmdKind::Rd]);
        assert_eq!(log[1].tick, 64);
        assert_eq!(log[2].tick, 128);
    }

    #[test]
    fn backoffs_served_in_bank_order() {
        let mut c = ctrl(Mitigation::None);
        c.handle_backoff(5);
        c.handle_backoff(2);
        let log = run_until_idle(&mut c, 0, 100);
        let banks: Vec<_> = log.iter().filter(|x| x.kind == CmdKind::Rfm).map(|x| x.bank).collect();
        assert_eq!(banks, vec![2, 5]);
    }

    #[test]
    fn empty_victim_list_is_noop() {
        let mut c = ctrl(Mitigation::None);
        c.issue_preventive_refresh(0, &[]);
        assert!(!c.has_pending_refresh(0));
    }

    #[test]
    fn read_forwarded_from_write_queue() {
        let mut c = ctrl(Mitigation::None);
        let a = c.mapper().address_of(1, 1, 1);
        c.enqueue(ReqKind::Write, a, Source::Core(0), 0).unwrap();
        c.enqueue(ReqKind::Read, a + 8, Source::Core(0), 0).unwrap();
        assert_eq!(c.stats().forwarded_reads, 1);
        assert_eq!(c.pop_completion(1).unwrap().source, Source::Core(0));
    }
}
