//! Timing-legality replay of a command log.
//!
//! Rebuilds every constraint from the nanosecond timings on its own; it does
//! not consult the device model.

use std::fmt;

use crate::command::{CmdKind, Command, Restore};
use crate::dram::timing::{DeviceTimings, Tick};

/// Constraint lengths in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingRules {
    pub rcd: Tick,
    pub ras: Tick,
    pub ras_partial: Tick,
    pub rp: Tick,
    pub rc: Tick,
    pub bl: Tick,
    pub rfc: Tick,
    pub rfc_partial: Tick,
}

const TICK_PS: f64 = 750.0;

fn to_ticks(ns: f64) -> Tick {
    let t = ns * 1000.0 / TICK_PS;
    let r = t.round();
    if (t - r).abs() < 1e-6 {
        r as Tick
    } else {
        t.ceil() as Tick
    }
}

impl TimingRules {
    /// `partial` is the reduced tRAS in ns and the factor applied to tRFC.
    pub fn new(t: &DeviceTimings, partial: Option<(f64, f64)>) -> Self {
        let (ras_red, m) = partial.unwrap_or((t.t_ras, 1.0));
        Self {
            rcd: to_ticks(t.t_rcd),
            ras: to_ticks(t.t_ras),
            ras_partial: to_ticks(ras_red),
            rp: to_ticks(t.t_rp),
            rc: to_ticks(t.t_rc),
            bl: to_ticks(t.t_bl).max(1),
            rfc: to_ticks(t.t_rfc),
            rfc_partial: to_ticks(t.t_rfc * m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    BankOpen,
    BankClosed,
    WrongRow,
    Rcd,
    Ras,
    Rp,
    Rc,
    BankBusy,
    Rfc,
    Bus,
    BadAddress,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::BankOpen => "bank-open",
            Self::BankClosed => "bank-closed",
            Self::WrongRow => "wrong-row",
            Self::Rcd => "tRCD",
            Self::Ras => "tRAS",
            Self::Rp => "tRP",
            Self::Rc => "tRC",
            Self::BankBusy => "bank-busy",
            Self::Rfc => "tRFC",
            Self::Bus => "data-bus",
            Self::BadAddress => "address",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingViolation {
    /// Position of the command in the log, from 0.
    pub index: u64,
    pub cmd: Command,
    pub rule: Rule,
    /// Earliest legal tick, for spacing violations.
    pub earliest: Tick,
}

impl fmt::Display for TimingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "command #{} ({}) violates {}: earliest legal tick {}",
            self.index,
            self.cmd,
            self.rule.as_str(),
            self.earliest
        )
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct BankShadow {
    open: Option<u32>,
    /// Tick of the last ACT while the bank is open.
    act: Tick,
    rc_until: Tick,
    rp_until: Tick,
    busy_until: Tick,
}

#[derive(Debug, Clone)]
pub struct TimingChecker {
    rules: TimingRules,
    banks_per_rank: usize,
    banks: Vec<BankShadow>,
    ref_until: Vec<Tick>,
    bus_until: Tick,
    index: u64,
}

impl TimingChecker {
    pub fn new(rules: TimingRules, ranks: usize, banks_per_rank: usize) -> Self {
        Self {
            rules,
            banks_per_rank,
            banks: vec![BankShadow::default(); ranks * banks_per_rank],
            ref_until: vec![0; ranks],
            bus_until: 0,
            index: 0,
        }
    }

    pub fn rules(&self) -> &TimingRules {
        &self.rules
    }

    fn bank_of(&self, c: &Command) -> Option<usize> {
        let rank = c.rank as usize;
        let bank = c.bank as usize;
        (rank < self.ref_until.len() && bank < self.banks_per_rank).then(|| rank * self.banks_per_rank + bank)
    }

    fn act_bound(&self, b: &BankShadow, rank: usize) -> (Tick, Rule) {
        let mut best = (0, Rule::Rc);
        for (t, r) in [(b.rc_until, Rule::Rc), (b.rp_until, Rule::Rp), (b.busy_until, Rule::BankBusy), (self.ref_until[rank], Rule::Rfc)] {
            if t > best.0 {
                best = (t, r);
            }
        }
        best
    }

    /// Earliest tick at which `c` would be legal given everything replayed so
    /// far, or the state rule it breaks regardless of timing.
    pub fn earliest(&self, c: &Command) -> Result<(Tick, Rule), Rule> {
        let rank = c.rank as usize;
        if c.kind == CmdKind::Ref {
            if rank >= self.ref_until.len() {
                return Err(Rule::BadAddress);
            }
            let mut best = (self.ref_until[rank], Rule::Rfc);
            for b in &self.banks[rank * self.banks_per_rank..(rank + 1) * self.banks_per_rank] {
                if b.open.is_some() {
                    return Err(Rule::BankOpen);
                }
                let x = self.act_bound(b, rank);
                if x.0 > best.0 {
                    best = x;
                }
            }
            return Ok(best);
        }
        let i = self.bank_of(c).ok_or(Rule::BadAddress)?;
        let b = &self.banks[i];
        let r = &self.rules;
        match c.kind {
            CmdKind::Act | CmdKind::Vrr | CmdKind::Rfm => {
                if b.open.is_some() {
                    return Err(Rule::BankOpen);
                }
                Ok(self.act_bound(b, rank))
            }
            CmdKind::Pre => match b.open {
                None => Err(Rule::BankClosed),
                Some(_) => Ok((b.act + r.ras, Rule::Ras)),
            },
            CmdKind::Rd | CmdKind::Wr => match b.open {
                None => Err(Rule::BankClosed),
                Some(row) if row != c.row => Err(Rule::WrongRow),
                Some(_) if b.act + r.rcd >= self.bus_until => Ok((b.act + r.rcd, Rule::Rcd)),
                Some(_) => Ok((self.bus_until, Rule::Bus)),
            },
            CmdKind::Ref => unreachable!(),
        }
    }

    /// Replays one command. Illegal commands are still applied so that one
    /// fault does not cascade into unrelated reports.
    pub fn check(&mut self, c: &Command) -> Option<TimingViolation> {
        let index = self.index;
        self.index += 1;
        let v = match self.earliest(c) {
            Err(rule) => Some(TimingViolation { index, cmd: *c, rule, earliest: c.tick }),
            Ok((t, rule)) if c.tick < t => Some(TimingViolation { index, cmd: *c, rule, earliest: t }),
            Ok(_) => None,
        };
        if v.is_some_and(|v| v.rule == Rule::BadAddress) {
            return v;
        }
        self.apply(c);
        v
    }

    fn apply(&mut self, c: &Command) {
        let r = self.rules;
        let rank = c.rank as usize;
        match c.kind {
            CmdKind::Ref => {
                let d = if c.restore == Some(Restore::Partial) { r.rfc_partial } else { r.rfc };
                self.ref_until[rank] = self.ref_until[rank].max(c.tick + d);
                return;
            }
            CmdKind::Rd | CmdKind::Wr => {
                self.bus_until = self.bus_until.max(c.tick + r.bl);
                return;
            }
            _ => {}
        }
        let i = rank * self.banks_per_rank + c.bank as usize;
        let b = &mut self.banks[i];
        match c.kind {
            CmdKind::Act => {
                b.open = Some(c.row);
                b.act = c.tick;
                b.rc_until = b.rc_until.max(c.tick + r.rc);
            }
            CmdKind::Pre => {
                b.open = None;
                b.rp_until = b.rp_until.max(c.tick + r.rp);
            }
            CmdKind::Vrr => {
                let ras = if c.restore == Some(Restore::Partial) { r.ras_partial } else { r.ras };
                b.busy_until = b.busy_until.max(c.tick + ras + r.rp);
            }
            _ => {}
        }
    }
}

/// Replays a whole log and returns every violation.
pub fn replay_timing<'a, I>(log: I, rules: TimingRules, ranks: usize, banks_per_rank: usize) -> Vec<TimingViolation>
where
    I: IntoIterator<Item = &'a Command>,
{
    let mut c = TimingChecker::new(rules, ranks, banks_per_rank);
    log.into_iter().filter_map(|x| c.check(x)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MutationReport {
    /// Commands sitting exactly on their earliest legal tick.
    pub binding: u64,
    pub caught: u64,
    /// Log positions whose one-tick-early copy was accepted.
    pub escaped: Vec<u64>,
}

/// For every command that sits exactly on a timing bound, replays a copy
/// moved one tick earlier and records whether it is rejected.
pub fn mutation_check(log: &[Command], rules: TimingRules, ranks: usize, banks_per_rank: usize) -> MutationReport {
    let mut c = TimingChecker::new(rules, ranks, banks_per_rank);
    let mut rep = MutationReport::default();
    for (i, x) in log.iter().enumerate() {
        if let Ok((t, _)) = c.earliest(x) {
            if t == x.tick && t > 0 {
                rep.binding += 1;
                let mut m = c.clone();
                let early = Command { tick: x.tick - 1, ..*x };
                if m.check(&early).is_some() {
                    rep.caught += 1;
                } else {
                    rep.escaped.push(i as u64);
                }
            }
        }
        c.check(x);
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rules() -> TimingRules {
        TimingRules::new(&DeviceTimings::ddr5_default(), Some((12.0, 0.36)))
    }

    fn cmd(tick: Tick, kind: CmdKind, bank: u16, row: u32) -> Command {
        Command { tick, kind, rank: 0, bank, row, restore: None }
    }

    #[test]
    fn tick_conversion_is_own() {
        let r = rules();
        assert_eq!((r.rcd, r.ras, r.rp, r.rc, r.bl, r.rfc), (20, 44, 20, 64, 4, 260));
        assert_eq!((r.ras_partial, r.rfc_partial), (16, 94));
    }

    #[test]
    fn legal_sequence() {
        let log = [
            cmd(0, CmdKind::Act, 0, 7),
            cmd(20, CmdKind::Rd, 0, 7),
            cmd(24, CmdKind::Rd, 0, 7),
            cmd(44, CmdKind::Pre, 0, 0),
            cmd(64, CmdKind::Act, 0, 8),
        ];
        assert!(replay_timing(&log, rules(), 2, 16).is_empty());
    }

    #[test]
    fn act_one_tick_early_is_caught() {
        let log = [cmd(0, CmdKind::Act, 0, 7), cmd(44, CmdKind::Pre, 0, 0), cmd(63, CmdKind::Act, 0, 8)];
        let v = replay_timing(&log, rules(), 2, 16);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::Rc);
        assert_eq!(v[0].earliest, 64);
    }

    #[test]
    fn state_rules() {
        let log = [cmd(0, CmdKind::Rd, 0, 7), cmd(1, CmdKind::Act, 0, 7), cmd(30, CmdKind::Rd, 0, 8)];
        let v = replay_timing(&log, rules(), 2, 16);
        assert_eq!(v.iter().map(|x| x.rule).collect::<Vec<_>>(), vec![Rule::BankClosed, Rule::WrongRow]);
    }

    #[test]
    fn partial_refresh_shortens_busy_time() {
        let mut log = vec![Command { tick: 0, kind: CmdKind::Vrr, rank: 0, bank: 0, row: 3, restore: Some(Restore::Partial) }];
        log.push(cmd(36, CmdKind::Act, 0, 3));
        assert!(replay_timing(&log, rules(), 2, 16).is_empty());
        log[0].restore = Some(Restore::Full);
        assert_eq!(replay_timing(&log, rules(), 2, 16)[0].rule, Rule::BankBusy);
    }

    #[test]
    fn refresh_needs_closed_rank() {
        let log = [
            cmd(0, CmdKind::Act, 3, 7),
            Command { tick: 100, kind: CmdKind::Ref, rank: 0, bank: 0, row: 0, restore: Some(Restore::Full) },
        ];
        assert_eq!(replay_timing(&log, rules(), 2, 16)[0].rule, Rule::BankOpen);
    }

    #[test]
    fn mutations_of_tight_log_are_caught() {
        let log = [
            cmd(0, CmdKind::Act, 0, 7),
            cmd(20, CmdKind::Rd, 0, 7),
            cmd(24, CmdKind::Rd, 0, 7),
            cmd(44, CmdKind::Pre, 0, 0),
            cmd(64, CmdKind::Act, 0, 8),
        ];
        let r = mutation_check(&log, rules(), 2, 16);
        assert_eq!(r.binding, 4);
        assert_eq!(r.caught, 4);
        assert!(r.escaped.is_empty());
    }
}
