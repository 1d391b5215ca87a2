//! Run statistics, built from the command stream plus per-core counters.

use std::io::Write;

use crate::command::{CmdKind, Command, CommandSink, Restore};
use crate::controller::ControllerStats;
use crate::dram::timing::{ticks_to_ns, Tick};
use crate::dram::topology::Topology;
use crate::pacram::PacramStats;

use super::energy::{EnergyBreakdown, EnergyModel};

/// Counts commands, preventive-refresh busy time per bank, and energy.
#[derive(Debug, Clone)]
pub struct CommandCounter {
    banks_per_rank: usize,
    vrr_ticks: [Tick; 2],
    pub acts: u64,
    pub pres: u64,
    pub reads: u64,
    pub writes: u64,
    pub rfms: u64,
    /// Indexed by [`restore_index`].
    pub refs: [u64; 2],
    pub vrrs: [u64; 2],
    pub busy: Vec<Tick>,
    energy: EnergyModel,
    end: Tick,
}

pub fn restore_index(r: Option<Restore>) -> usize {
    match r {
        Some(Restore::Partial) => 1,
        _ => 0,
    }
}

impl CommandCounter {
    /// `vrr_full` and `vrr_partial` are the bank-busy ticks of one victim-row refresh.
    pub fn new(topo: &Topology, vrr_full: Tick, vrr_partial: Tick, energy: EnergyModel) -> Self {
        Self {
            banks_per_rank: topo.banks_per_rank(),
            vrr_ticks: [vrr_full, vrr_partial],
            acts: 0,
            pres: 0,
            reads: 0,
            writes: 0,
            rfms: 0,
            refs: [0; 2],
            vrrs: [0; 2],
            busy: vec![0; topo.total_banks()],
            energy,
            end: 0,
        }
    }

    pub fn end(&self) -> Tick {
        self.end
    }

    pub fn energy(&self) -> EnergyBreakdown {
        self.energy.breakdown()
    }

    pub fn preventive_refreshes(&self) -> u64 {
        self.vrrs[0] + self.vrrs[1]
    }

    /// Fraction of `end` ticks each bank spent on preventive refreshes.
    pub fn busy_fractions(&self) -> Vec<f64> {
        let end = self.end.max(1) as f64;
        self.busy.iter().map(|&b| (b as f64 / end).min(1.0)).collect()
    }
}

impl CommandSink for CommandCounter {
    fn record(&mut self, cmd: &Command) {
        match cmd.kind {
            CmdKind::Act => self.acts += 1,
            CmdKind::Pre => self.pres += 1,
            CmdKind::Rd => self.reads += 1,
            CmdKind::Wr => self.writes += 1,
            CmdKind::Rfm => self.rfms += 1,
            CmdKind::Ref => self.refs[restore_index(cmd.restore)] += 1,
            CmdKind::Vrr => {
                let i = restore_index(cmd.restore);
                self.vrrs[i] += 1;
                let bank = cmd.rank as usize * self.banks_per_rank + cmd.bank as usize;
                self.busy[bank] += self.vrr_ticks[i];
            }
        }
        self.energy.account(cmd);
    }

    fn finish(&mut self, end: Tick) {
        self.end = end;
        self.energy.finish(ticks_to_ns(end));
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CoreStats {
    pub instructions: u64,
    pub cycles: u64,
    pub reads: u64,
    pub writes: u64,
    pub llc_hits: u64,
}

impl CoreStats {
    pub fn ipc(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.instructions as f64 / self.cycles as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunStats {
    pub run_id: String,
    pub ticks: Tick,
    pub cores: Vec<CoreStats>,
    pub weighted_speedup: Option<f64>,
    pub busy_ticks: Vec<Tick>,
    pub busy_fraction: Vec<f64>,
    pub acts: u64,
    pub reads: u64,
    pub writes: u64,
    pub refs: [u64; 2],
    pub vrrs: [u64; 2],
    pub rfms: u64,
    pub energy: EnergyBreakdown,
    pub controller: ControllerStats,
    pub triggers: u64,
    pub pacram: Option<PacramStats>,
}

impl RunStats {
    pub fn from_parts(
        run_id: String,
        counter: &CommandCounter,
        cores: Vec<CoreStats>,
        controller: ControllerStats,
        triggers: u64,
        pacram: Option<PacramStats>,
    ) -> Self {
        Self {
            run_id,
            ticks: counter.end(),
            cores,
            weighted_speedup: None,
            busy_ticks: counter.busy.clone(),
            busy_fraction: counter.busy_fractions(),
            acts: counter.acts,
            reads: counter.reads,
            writes: counter.writes,
            refs: counter.refs,
            vrrs: counter.vrrs,
            rfms: counter.rfms,
            energy: counter.energy(),
            controller,
            triggers,
            pacram,
        }
    }

    pub fn ipc(&self) -> Vec<f64> {
        self.cores.iter().map(CoreStats::ipc).collect()
    }

    pub fn mean_busy_fraction(&self) -> f64 {
        mean(&self.busy_fraction)
    }

    pub fn max_busy_fraction(&self) -> f64 {
        self.busy_fraction.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_busy_ticks(&self) -> Tick {
        self.busy_ticks.iter().sum()
    }

    pub fn preventive_refreshes(&self) -> u64 {
        self.vrrs[0] + self.vrrs[1]
    }

    /// Sets weighted speedup from solo-run IPCs, one per core.
    pub fn set_alone_ipc(&mut self, alone: &[f64]) {
        assert_eq!(alone.len(), self.cores.len(), "one solo IPC per core");
        self.weighted_speedup = Some(weighted_speedup(&self.ipc(), alone));
    }

    /// `(metric, value)` pairs in a fixed order.
    pub fn metrics(&self) -> Vec<(String, String)> {
        let mut m: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| m.push((k.to_string(), v));
        put("ticks", self.ticks.to_string());
        put("time_ns", ticks_to_ns(self.ticks).to_string());
        for (i, c) in self.cores.iter().enumerate() {
            put(&format!("core{i}.instructions"), c.instructions.to_string());
            put(&format!("core{i}.cycles"), c.cycles.to_string());
            put(&format!("core{i}.ipc"), c.ipc().to_string());
            put(&format!("core{i}.llc_hits"), c.llc_hits.to_string());
        }
        put("ipc_sum", self.ipc().iter().sum::<f64>().to_string());
        if let Some(ws) = self.weighted_speedup {
            put("weighted_speedup", ws.to_string());
        }
        put("acts", self.acts.to_string());
        put("reads", self.reads.to_string());
        put("writes", self.writes.to_string());
        put("refs_full", self.refs[0].to_string());
        put("refs_partial", self.refs[1].to_string());
        put("preventive_refreshes_full", self.vrrs[0].to_string());
        put("preventive_refreshes_partial", self.vrrs[1].to_string());
        put("rfms", self.rfms.to_string());
        put("mitigation_triggers", self.triggers.to_string());
        put("preventive_busy_ticks", self.total_busy_ticks().to_string());
        put("busy_fraction_mean", self.mean_busy_fraction().to_string());
        put("busy_fraction_max", self.max_busy_fraction().to_string());
        for (b, f) in self.busy_fraction.iter().enumerate() {
            put(&format!("busy_fraction.bank{b}"), f.to_string());
        }
        let c = &self.controller;
        put("row_hits", c.row_hits.to_string());
        put("row_misses", c.row_misses.to_string());
        put("forwarded_reads", c.forwarded_reads.to_string());
        put("meta_reads", c.meta_reads.to_string());
        put("meta_writes", c.meta_writes.to_string());
        let lat = if c.reads == 0 { 0.0 } else { ticks_to_ns(c.total_read_latency) / c.reads as f64 };
        put("avg_read_latency_ns", lat.to_string());
        if let Some(p) = self.pacram {
            put("pacram.full", p.full.to_string());
            put("pacram.partial", p.partial.to_string());
            put("pacram.forced_full", p.forced_full.to_string());
            put("pacram.epoch_resets", p.epoch_resets.to_string());
        }
        let e = &self.energy;
        put("energy_pj.act", e.act.to_string());
        put("energy_pj.pre", e.pre.to_string());
        put("energy_pj.rd", e.rd.to_string());
        put("energy_pj.wr", e.wr.to_string());
        put("energy_pj.refresh", e.refresh.to_string());
        put("energy_pj.preventive", e.preventive.to_string());
        put("energy_pj.background", e.background.to_string());
        put("energy_pj", e.total().to_string());
        m
    }
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Sum over cores of shared IPC over solo IPC.
pub fn weighted_speedup(shared: &[f64], alone: &[f64]) -> f64 {
    shared.iter().zip(alone).map(|(s, a)| if *a > 0.0 { s / a } else { 0.0 }).sum()
}

pub const STATS_HEADER: [&str; 3] = ["run_id", "metric", "value"];

/// Writes `run_id,metric,value` rows.
pub fn write_stats<W: Write>(out: W, runs: &[RunStats]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATS_HEADER)?;
    for r in runs {
        for (k, v) in r.metrics() {
            w.write_record([r.run_id.as_str(), k.as_str(), v.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}
