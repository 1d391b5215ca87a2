//! Partial charge restoration for preventive refreshes.
//!
//! Every row is either in the F state (its next preventive refresh must fully
//! restore it) or the P state (a reduced-latency refresh is allowed). All rows
//! return to F at each full-charge-restoration-interval boundary; a full
//! restoration of a row, preventive or periodic, moves it to P. When the interval
//! is at least the refresh window, periodic refresh alone bounds the number of
//! consecutive partial restorations and every preventive refresh is partial.
//!
//! An optional per-row budget guard additionally forces a full restoration once
//! a row has taken `n_pcr` partial restorations since its last full one.

use serde::{Deserialize, Serialize};

use crate::command::Restore;
use crate::dram::timing::{ns_to_ticks, DeviceTimings, Tick};
use crate::dram::topology::Topology;
use crate::error::ProfileError;
use crate::profiles::{nrh_reduction_percent, ChipProfile, RestorationLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PacramMode {
    /// Latency decisions are made by the memory controller.
    #[default]
    Controller,
    /// Latency decisions are made inside the device (RFM and PRAC only).
    Ondie,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FcriTicks {
    Every(Tick),
    AllPartial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacramConfig {
    pub module_id: String,
    pub level: RestorationLevel,
    pub t_ras_red_ns: f64,
    pub nrh_nominal: u32,
    pub nrh_scaled: u32,
    /// Threshold reduction in whole percent.
    pub ratio_percent: u32,
    pub n_pcr: u32,
    /// `None` when every preventive refresh may be partial.
    pub t_fcri_ns: Option<f64>,
    pub mode: PacramMode,
}

impl PacramConfig {
    pub fn is_all_partial(&self) -> bool {
        self.t_fcri_ns.is_none()
    }

    pub fn fcri_ticks(&self) -> FcriTicks {
        match self.t_fcri_ns {
            Some(ns) => FcriTicks::Every(ns_to_ticks(ns).max(1)),
            None => FcriTicks::AllPartial,
        }
    }
}

/// `n_pcr * (nrh * t_rc + t_ras_red + t_rp)` in nanoseconds.
pub fn fcri_formula(n_pcr: u32, nrh: u32, t_ras_red: f64, timings: &DeviceTimings) -> f64 {
    f64::from(n_pcr) * (f64::from(nrh) * timings.t_rc + t_ras_red + timings.t_rp)
}

/// Builds the configuration for running `profile` at `level`.
pub fn derive_config(
    profile: &ChipProfile,
    level: RestorationLevel,
    timings: &DeviceTimings,
) -> Result<PacramConfig, ProfileError> {
    let not_applicable = || ProfileError::NotApplicable { module: profile.module_id.clone(), level };
    if level.is_nominal() {
        return Err(not_applicable());
    }
    let nrh_nominal = profile.nrh_nominal().ok_or_else(not_applicable)?;
    let params = profile.pacram_params(level).ok_or_else(not_applicable)?;
    let t_ras_red_ns = level.t_ras_red(timings.t_ras);
    let t_fcri = fcri_formula(params.n_pcr, params.nrh_effective, t_ras_red_ns, timings);
    Ok(PacramConfig {
        module_id: profile.module_id.clone(),
        level,
        t_ras_red_ns,
        nrh_nominal,
        nrh_scaled: params.nrh_effective,
        ratio_percent: nrh_reduction_percent(profile, level)?,
        n_pcr: params.n_pcr,
        t_fcri_ns: (t_fcri < timings.t_refw).then_some(t_fcri),
        mode: PacramMode::Controller,
    })
}

pub fn scale_threshold(nrh: u32, ratio_percent: u32) -> u32 {
    (u64::from(nrh) * u64::from(ratio_percent) / 100) as u32
}

/// Scales every threshold by the module's reduction ratio at `level`, flooring.
pub fn scale_mitigation_thresholds(
    nominal: &[u32],
    profile: &ChipProfile,
    level: RestorationLevel,
) -> Result<Vec<u32>, ProfileError> {
    let pct = nrh_reduction_percent(profile, level)?;
    Ok(nominal.iter().map(|&v| scale_threshold(v, pct)).collect())
}

/// Latency of periodic refresh window `window` when periodic refreshes are
/// also reduced: `n_pcr` partial windows followed by one full window.
pub fn periodic_window_latency(n_pcr: u32, window: u64) -> Restore {
    if window % (u64::from(n_pcr) + 1) < u64::from(n_pcr) {
        Restore::Partial
    } else {
        Restore::Full
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PacramStats {
    pub full: u64,
    pub partial: u64,
    /// Full restorations forced by the partial budget guard.
    pub forced_full: u64,
    pub epoch_resets: u64,
}

#[derive(Debug, Clone)]
pub struct PacramState {
    cfg: PacramConfig,
    rows_per_bank: u32,
    banks_per_rank: usize,
    rows_per_ref: u32,
    refs_per_round: u64,
    fcri: FcriTicks,
    epoch: u64,
    fr: Vec<u64>,
    guard: Option<Vec<u16>>,
    periodic_ext: bool,
    ref_count: Vec<u64>,
    stats: PacramStats,
}

impl PacramState {
    pub fn new(cfg: PacramConfig, topo: &Topology, guard: bool, periodic_ext: bool) -> Self {
        let rows = topo.total_banks() * topo.rows_per_bank as usize;
        let fcri = cfg.fcri_ticks();
        Self {
            rows_per_bank: topo.rows_per_bank,
            banks_per_rank: topo.banks_per_rank(),
            rows_per_ref: topo.rows_per_ref(),
            refs_per_round: u64::from(topo.refs_per_round()),
            fcri,
            epoch: 0,
            fr: vec![u64::MAX; rows.div_ceil(64)],
            guard: guard.then(|| vec![0u16; rows]),
            periodic_ext,
            ref_count: vec![0; topo.total_ranks()],
            stats: PacramStats::default(),
            cfg,
        }
    }

    pub fn config(&self) -> &PacramConfig {
        &self.cfg
    }

    pub fn stats(&self) -> PacramStats {
        self.stats
    }

    pub fn periodic_ext(&self) -> bool {
        self.periodic_ext
    }

    pub fn partial_ras_ticks(&self) -> Tick {
        ns_to_ticks(self.cfg.t_ras_red_ns)
    }

    fn index(&self, bank: usize, row: u32) -> usize {
        bank * self.rows_per_bank as usize + row as usize
    }

    /// Applies any pending interval boundary. Must run before every bit access.
    fn roll_epoch(&mut self, now: Tick) {
        if let FcriTicks::Every(period) = self.fcri {
            let e = now / period;
            if e != self.epoch {
                self.epoch = e;
                self.fr.fill(u64::MAX);
                self.stats.epoch_resets += 1;
            }
        }
    }

    pub fn fr_bit(&mut self, bank: usize, row: u32, now: Tick) -> bool {
        self.roll_epoch(now);
        let i = self.index(bank, row);
        self.fr[i / 64] >> (i % 64) & 1 == 1
    }

    fn clear_fr(&mut self, i: usize) {
        self.fr[i / 64] &= !(1u64 << (i % 64));
    }

    /// Partial periodic refreshes the row will still take before its next full one.
    fn reserved_periodic(&self, bank: usize, row: u32) -> u64 {
        if !self.periodic_ext {
            return 0;
        }
        let rank = bank / self.banks_per_rank;
        let k_now = self.ref_count[rank];
        let r = self.refs_per_round;
        let block = u64::from(row / self.rows_per_ref);
        let next = k_now + (block + r - k_now % r) % r;
        let n = u64::from(self.cfg.n_pcr);
        let c = (next / r) % (n + 1);
        if c == n {
            0
        } else {
            n - c
        }
    }

    /// Chooses the latency of a preventive refresh of `row` issued at `now` and
    /// commits the resulting state change.
    pub fn select_latency(&mut self, bank: usize, row: u32, now: Tick) -> Restore {
        self.roll_epoch(now);
        let i = self.index(bank, row);
        let mut choice = match self.fcri {
            FcriTicks::AllPartial => Restore::Partial,
            FcriTicks::Every(_) if self.fr[i / 64] >> (i % 64) & 1 == 1 => Restore::Full,
            FcriTicks::Every(_) => Restore::Partial,
        };
        if choice == Restore::Partial {
            if let Some(g) = &self.guard {
                let used = u64::from(g[i]);
                if used + 1 + self.reserved_periodic(bank, row) > u64::from(self.cfg.n_pcr) {
                    choice = Restore::Full;
                    self.stats.forced_full += 1;
                }
            }
        }
        match choice {
            Restore::Full => {
                self.clear_fr(i);
                if let Some(g) = &mut self.guard {
                    g[i] = 0;
                }
                self.stats.full += 1;
            }
            Restore::Partial => {
                if let Some(g) = &mut self.guard {
                    g[i] = g[i].saturating_add(1);
                }
                self.stats.partial += 1;
            }
        }
        choice
    }

    /// Latency of the next periodic REF to `rank`.
    pub fn next_ref_restore(&self, rank: usize) -> Restore {
        if !self.periodic_ext {
            return Restore::Full;
        }
        periodic_window_latency(self.cfg.n_pcr, self.ref_count[rank] / self.refs_per_round)
    }

    /// Records a periodic REF covering `rows` rows from `first_row` in every bank of `rank`.
    pub fn on_periodic_refresh(&mut self, rank: usize, first_row: u32, rows: u32, restore: Restore, now: Tick) {
        self.roll_epoch(now);
        self.ref_count[rank] += 1;
        for b in rank * self.banks_per_rank..(rank + 1) * self.banks_per_rank {
            for row in first_row..first_row + rows {
                let i = self.index(b, row);
                match restore {
                    Restore::Full => {
                        self.clear_fr(i);
                        if let Some(g) = &mut self.guard {
                            g[i] = 0;
                        }
                    }
                    Restore::Partial => {
                        if let Some(g) = &mut self.guard {
                            g[i] = g[i].saturating_add(1);
                        }
                    }
                }
            }
        }
    }
}
