//! Builds a simulated system from a [`RunConfig`] and runs it.

use std::path::Path;
use std::sync::Arc;

use crate::command::{CommandSink, Tee};
use crate::config::RunConfig;
use crate::controller::{AddressMapper, Controller, ControllerConfig, Source};
use crate::dram::device::{Device, DeviceMode};
use crate::dram::timing::{ns_to_ticks, DeviceTimings, Tick};
use crate::dram::topology::Topology;
use crate::error::{ConfigError, Error};
use crate::mitigation::{
    default_raaimt, graphene_table_size, hydra_region_bytes, para_probability, persistent_quota, windowed_quota,
    Graphene, Hydra, MechanismKind, Mitigation, MitigationParams, Para, RfmPolicy,
};
use crate::pacram::{scale_threshold, PacramConfig, PacramMode, PacramState};
use crate::profiles::RestorationLevel;
use crate::verifier::{DisturbanceParams, TimingRules, VerifyParams};
use crate::workload::{
    gen_attacker, gen_random, load_trace, CommandCounter, Core, CoreLimits, EnergyModel, RunStats, TraceEntry,
};

/// Per-core access streams.
#[derive(Debug, Clone)]
pub struct Workload {
    pub cores: Vec<Arc<[TraceEntry]>>,
    /// Human-readable origin of each stream.
    pub names: Vec<String>,
}

impl Workload {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, Error> {
        let mapper = AddressMapper::new(cfg.topology, cfg.mop_group)?;
        let mut cores: Vec<Arc<[TraceEntry]>> = Vec::new();
        let mut names = Vec::new();
        for p in &cfg.workload.traces {
            let t = load_trace(p)?;
            check_range(&t, &mapper, p)?;
            cores.push(t.into());
            names.push(p.display().to_string());
        }
        if let Some(a) = &cfg.workload.attack {
            cores.push(gen_attacker(&mapper, a.bank, a.victim, a.length, a.pattern).into());
            names.push(format!("attack:{}:bank{}:row{}", a.pattern, a.bank, a.victim));
        }
        if let Some(r) = &cfg.workload.random {
            for i in 0..cfg.workload.random_cores {
                cores.push(gen_random(r, cfg.seed.wrapping_add(i as u64 + 1)).into());
                names.push(format!("random{i}"));
            }
        }
        Ok(Self { cores, names })
    }

    pub fn single(&self, core: usize) -> Self {
        Self { cores: vec![self.cores[core].clone()], names: vec![self.names[core].clone()] }
    }
}

fn check_range(t: &[TraceEntry], mapper: &AddressMapper, path: &Path) -> Result<(), Error> {
    if let Some((i, e)) = t.iter().enumerate().find(|(_, e)| e.addr >= mapper.capacity()) {
        return Err(ConfigError::Invalid(format!(
            "{}: access {} at {:#x} is beyond the {:#x}-byte memory",
            path.display(),
            i + 1,
            e.addr,
            mapper.capacity()
        ))
        .into());
    }
    Ok(())
}

/// Threshold the mitigation is configured with: the nominal one, scaled when
/// partial restoration lowers the module's threshold.
pub fn effective_nrh(nrh: u32, pacram: Option<&PacramConfig>) -> u32 {
    match pacram {
        Some(p) => scale_threshold(nrh, p.ratio_percent).max(1),
        None => nrh,
    }
}

/// Counter reset window of Graphene and Hydra in ticks.
pub fn reset_window_ticks(params: &MitigationParams, timings: &DeviceTimings) -> Tick {
    ns_to_ticks(params.reset_window_ns.unwrap_or(timings.t_refw)).max(1)
}

/// Base address of Hydra's in-DRAM counter region.
pub fn hydra_meta_base(topo: &Topology) -> u64 {
    let rows = topo.total_banks() as u64 * u64::from(topo.rows_per_bank);
    topo.capacity_bytes() - hydra_region_bytes(rows)
}

pub fn build_mitigation(
    kind: MechanismKind,
    nrh: u32,
    params: &MitigationParams,
    topo: &Topology,
    timings: &DeviceTimings,
    seed: u64,
) -> (Mitigation, DeviceMode) {
    let banks = topo.total_banks();
    let br = params.blast_radius;
    let window = reset_window_ticks(params, timings);
    match kind {
        MechanismKind::None => (Mitigation::None, DeviceMode::Plain),
        MechanismKind::Para => (Mitigation::Para(Para::new(para_probability(params.para_c, nrh), seed)), DeviceMode::Plain),
        MechanismKind::Rfm => (
            Mitigation::Rfm(RfmPolicy::new(banks, params.rfm_raaimt.unwrap_or_else(|| default_raaimt(nrh)))),
            DeviceMode::Rfm { tracker_k: params.device_tracker_k },
        ),
        MechanismKind::Prac => (
            Mitigation::Prac { backoffs: 0 },
            DeviceMode::Prac { threshold: params.trigger_quota.unwrap_or_else(|| persistent_quota(nrh, br)) },
        ),
        MechanismKind::Graphene => {
            let q = params.trigger_quota.unwrap_or_else(|| windowed_quota(nrh, br));
            let acts = window / timings.ticks().rc.max(1);
            let k = params.graphene_k.unwrap_or_else(|| graphene_table_size(acts, q, topo.rows_per_bank));
            (Mitigation::Graphene(Graphene::new(banks, k, q, window)), DeviceMode::Plain)
        }
        MechanismKind::Hydra => {
            let q = params.trigger_quota.unwrap_or_else(|| windowed_quota(nrh, br));
            let h = Hydra::new(
                banks,
                topo.rows_per_bank,
                params.hydra_group_size,
                q,
                params.hydra_cache_entries,
                params.hydra_cache_ways,
                window,
                hydra_meta_base(topo),
            );
            (Mitigation::Hydra(h), DeviceMode::Plain)
        }
    }
}

/// Oracle parameters matching a configured run.
pub fn verify_params(
    timings: &DeviceTimings,
    topo: &Topology,
    blast_radius: u32,
    nrh: u32,
    pacram: Option<&PacramConfig>,
    periodic_ext: bool,
) -> VerifyParams {
    let refw = ns_to_ticks(timings.t_refw);
    let refi = ns_to_ticks(timings.t_refi);
    let bound = match pacram {
        Some(p) if periodic_ext => (u64::from(p.n_pcr) + 1) * refw + refi,
        Some(p) => p.t_fcri_ns.map_or(refw, |f| ns_to_ticks(f).max(refw)) + refi,
        None => refw + refi,
    };
    VerifyParams {
        timing: TimingRules::new(timings, pacram.map(|p| (p.t_ras_red_ns, p.level.factor()))),
        disturbance: DisturbanceParams {
            nrh,
            blast_radius,
            n_pcr: pacram.map(|p| p.n_pcr),
            full_restore_bound: Some(bound),
            ranks: topo.total_ranks(),
            banks_per_rank: topo.banks_per_rank(),
            rows_per_bank: topo.rows_per_bank,
            rows_per_ref: topo.rows_per_ref(),
        },
    }
}

/// Everything derived from a config before building the system.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub timings: DeviceTimings,
    pub topo: Topology,
    pub mechanism: MechanismKind,
    pub nrh: u32,
    pub nrh_effective: u32,
    pub pacram: Option<PacramConfig>,
}

impl Resolved {
    /// Resolves `cfg`, optionally overriding the mechanism, threshold and restoration level.
    pub fn new(
        cfg: &RunConfig,
        mechanism: Option<MechanismKind>,
        nrh: Option<u32>,
        level: Option<Option<RestorationLevel>>,
    ) -> Result<Self, Error> {
        let timings = cfg.device_timings()?;
        let pacram = match level {
            Some(None) => None,
            Some(Some(l)) => {
                let mut s = cfg.pacram.clone();
                s.enabled = true;
                s.derive(&timings, Some(l))?
            }
            None => cfg.pacram.derive(&timings, None)?,
        };
        let nrh = nrh.unwrap_or(cfg.nrh);
        Ok(Self {
            timings,
            topo: cfg.topology,
            mechanism: mechanism.unwrap_or(cfg.mitigation),
            nrh,
            nrh_effective: effective_nrh(nrh, pacram.as_ref()),
            pacram,
        })
    }

    pub fn verify_params(&self, cfg: &RunConfig) -> VerifyParams {
        verify_params(
            &self.timings,
            &self.topo,
            cfg.mitigation_params.blast_radius,
            self.nrh_effective,
            self.pacram.as_ref(),
            cfg.pacram.periodic_ext,
        )
    }
}

pub struct Simulation {
    run_id: String,
    ctrl: Controller,
    cores: Vec<Core>,
    counter: CommandCounter,
    max_acts: Option<u64>,
    max_ticks: Option<Tick>,
}

impl Simulation {
    pub fn new(cfg: &RunConfig, r: &Resolved, workload: &Workload) -> Result<Self, Error> {
        let topo = r.topo;
        let mapper = AddressMapper::new(topo, cfg.mop_group)?;
        let mp = &cfg.mitigation_params;
        let (mitigation, mode) = build_mitigation(r.mechanism, r.nrh_effective, mp, &topo, &r.timings, cfg.seed);
        let mut device = Device::new(topo, &r.timings, mode, mp.blast_radius);
        let mut factor = 1.0;
        let state = r.pacram.as_ref().map(|p| {
            device.set_partial_latency(p.t_ras_red_ns, p.level.factor(), &r.timings);
            factor = p.level.factor();
            PacramState::new(p.clone(), &topo, cfg.pacram.guard, cfg.pacram.periodic_ext)
        });
        let ondie = r.pacram.as_ref().is_some_and(|p| p.mode == PacramMode::Ondie);
        let vrr_full = device.victim_refresh_ticks(crate::command::Restore::Full);
        let vrr_partial = device.victim_refresh_ticks(crate::command::Restore::Partial);
        let meta_base = if r.mechanism == MechanismKind::Hydra { hydra_meta_base(&topo) } else { topo.capacity_bytes() };
        let ctrl = Controller::new(
            ControllerConfig::with_depth(cfg.queue_depth, mp.blast_radius),
            mapper,
            device,
            mitigation,
            state,
            ondie,
            meta_base,
        );
        let limits = CoreLimits { warmup: cfg.workload.warmup, budget: cfg.workload.instructions };
        let cores = workload
            .cores
            .iter()
            .enumerate()
            .map(|(i, t)| Core::new(i, t.clone(), limits, &cfg.workload.llc))
            .collect();
        Ok(Self {
            run_id: cfg.run_id.clone(),
            ctrl,
            cores,
            counter: CommandCounter::new(&topo, vrr_full, vrr_partial, EnergyModel::new(cfg.energy, factor, factor)),
            max_acts: cfg.workload.max_activations,
            max_ticks: cfg.workload.max_ticks,
        })
    }

    pub fn controller(&self) -> &Controller {
        &self.ctrl
    }

    /// Runs until every core has retired its budget or a limit is hit, sending
    /// each command to `sink` as it issues.
    pub fn run(&mut self, sink: &mut dyn CommandSink) -> Result<RunStats, Error> {
        let mut now: Tick = 0;
        {
            let mut tee = Tee { sinks: vec![&mut self.counter, sink] };
            loop {
                while let Some(c) = self.ctrl.pop_completion(now) {
                    if let Source::Core(i) = c.source {
                        self.cores[i].on_read_complete(c.id, c.tick);
                    }
                }
                for core in &mut self.cores {
                    while core.tick(now, &mut self.ctrl)? {}
                }
                let ctrl_next = self.ctrl.step(now, &mut tee);
                if self.cores.iter().all(Core::is_done)
                    || self.max_acts.is_some_and(|m| self.ctrl.stats().demand_acts >= m)
                    || self.max_ticks.is_some_and(|m| now >= m)
                {
                    break;
                }
                let mut next = ctrl_next.unwrap_or(now + 1);
                if let Some(t) = self.ctrl.next_completion() {
                    next = next.min(t);
                }
                for core in &self.cores {
                    if let Some(t) = core.next_issue() {
                        next = next.min(t);
                    }
                }
                if next == Tick::MAX {
                    break;
                }
                now = next.max(now + 1);
            }
            tee.finish(now + 1);
        }
        let pacram = self.ctrl.pacram().map(|p| p.stats());
        Ok(RunStats::from_parts(
            self.run_id.clone(),
            &self.counter,
            self.cores.iter().map(Core::stats).collect(),
            self.ctrl.stats(),
            self.ctrl.mitigation().triggers(),
            pacram,
        ))
    }
}

/// Builds and runs one simulation.
pub fn run_once(cfg: &RunConfig, r: &Resolved, workload: &Workload, sink: &mut dyn CommandSink) -> Result<RunStats, Error> {
    Simulation::new(cfg, r, workload)?.run(sink)
}

/// IPC of each core running alone on an unmitigated system.
pub fn alone_ipc(cfg: &RunConfig, workload: &Workload) -> Result<Vec<f64>, Error> {
    let r = Resolved::new(cfg, Some(MechanismKind::None), None, Some(None))?;
    (0..workload.cores.len())
        .map(|i| {
            let s = run_once(cfg, &r, &workload.single(i), &mut crate::command::NullSink)?;
            Ok(s.cores[0].ipc())
        })
        .collect()
}

/// Solo IPCs, read from `cfg.workload.alone_ipc` when present and written there otherwise.
pub fn cached_alone_ipc(cfg: &RunConfig, workload: &Workload) -> Result<Option<Vec<f64>>, Error> {
    let Some(path) = &cfg.workload.alone_ipc else { return Ok(None) };
    if path.exists() {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut v = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let ipc: f64 = rec
                .get(2)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ConfigError::Invalid(format!("{}: bad solo IPC row", path.display())))?;
            v.push(ipc);
        }
        if v.len() != workload.cores.len() {
            return Err(ConfigError::Invalid(format!(
                "{}: {} solo IPCs for {} cores",
                path.display(),
                v.len(),
                workload.cores.len()
            ))
            .into());
        }
        return Ok(Some(v));
    }
    let v = alone_ipc(cfg, workload)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["core", "workload", "ipc"])?;
    for (i, ipc) in v.iter().enumerate() {
        w.write_record([i.to_string(), workload.names[i].clone(), ipc.to_string()])?;
    }
    w.flush().map_err(|source| Error::Io { path: path.clone(), source })?;
    Ok(Some(v))
}
