//! Independent safety oracles over command logs: timing legality and
//! read-disturbance shadow state.

pub mod disturbance;
pub mod fuzz;
pub mod timing;

use std::fmt;

pub use disturbance::{check_disturbance, DisturbanceChecker, DisturbanceKind, DisturbanceParams, DisturbanceViolation};
pub use timing::{mutation_check, replay_timing, MutationReport, Rule, TimingChecker, TimingRules, TimingViolation};

use crate::command::{Command, CommandSink};
use crate::dram::timing::Tick;

/// Stored timing violations are capped; the total keeps counting.
pub const MAX_TIMING_REPORTED: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyParams {
    pub timing: TimingRules,
    pub disturbance: DisturbanceParams,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub commands: u64,
    pub end: Tick,
    pub timing: Vec<TimingViolation>,
    pub timing_total: u64,
    pub disturbance: Vec<DisturbanceViolation>,
    pub disturbance_total: u64,
    pub max_disturbance: u32,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.timing_total == 0 && self.disturbance_total == 0
    }

    pub fn partial_violations(&self) -> usize {
        self.disturbance
            .iter()
            .filter(|v| matches!(v.kind, DisturbanceKind::ConsecutivePartials { .. }))
            .count()
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} commands, {} timing violations, {} disturbance violations, max disturbance {}",
            self.commands, self.timing_total, self.disturbance_total, self.max_disturbance
        )?;
        for v in self.timing.iter().take(20) {
            writeln!(f, "  timing: {v}")?;
        }
        for v in self.disturbance.iter().take(20) {
            writeln!(f, "  disturbance: {v}")?;
        }
        Ok(())
    }
}

/// Runs both oracles; usable as a streaming [`CommandSink`].
#[derive(Debug, Clone)]
pub struct Verifier {
    timing: TimingChecker,
    disturbance: DisturbanceChecker,
    timing_violations: Vec<TimingViolation>,
    timing_total: u64,
    commands: u64,
    end: Tick,
}

impl Verifier {
    pub fn new(p: &VerifyParams) -> Self {
        let d = p.disturbance;
        Self {
            timing: TimingChecker::new(p.timing, d.ranks, d.banks_per_rank),
            disturbance: DisturbanceChecker::new(d),
            timing_violations: Vec::new(),
            timing_total: 0,
            commands: 0,
            end: 0,
        }
    }

    pub fn report(&self) -> VerifyReport {
        VerifyReport {
            commands: self.commands,
            end: self.end,
            timing: self.timing_violations.clone(),
            timing_total: self.timing_total,
            disturbance: self.disturbance.violations().to_vec(),
            disturbance_total: self.disturbance.total(),
            max_disturbance: self.disturbance.max_disturbance(),
        }
    }
}

impl CommandSink for Verifier {
    fn record(&mut self, cmd: &Command) {
        self.commands += 1;
        self.end = self.end.max(cmd.tick);
        if let Some(v) = self.timing.check(cmd) {
            self.timing_total += 1;
            if self.timing_violations.len() < MAX_TIMING_REPORTED {
                self.timing_violations.push(v);
            }
        }
        self.disturbance.observe(cmd);
    }

    fn finish(&mut self, end: Tick) {
        self.end = self.end.max(end);
        self.disturbance.finish(self.end);
    }
}

/// Verifies a complete log.
pub fn verify_log<'a, I>(log: I, p: &VerifyParams, end: Option<Tick>) -> VerifyReport
where
    I: IntoIterator<Item = &'a Command>,
{
    let mut v = Verifier::new(p);
    for c in log {
        v.record(c);
    }
    let e = end.unwrap_or(v.end);
    v.finish(e);
    v.report()
}
