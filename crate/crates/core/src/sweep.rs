//! Cartesian sweeps over threshold, mechanism and restoration level.

use std::io::Write;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::command::NullSink;
use crate::config::RunConfig;
use crate::error::Error;
use crate::mitigation::MechanismKind;
use crate::profiles::RestorationLevel;
use crate::sim::{run_once, Resolved, Workload};
use crate::verifier::{VerifyReport, Verifier};
use crate::workload::RunStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPoint {
    pub mechanism: MechanismKind,
    pub nrh: u32,
    /// `None` runs without partial restoration.
    pub level: Option<RestorationLevel>,
}

impl SweepPoint {
    pub fn run_id(&self) -> String {
        match self.level {
            Some(l) => format!("{}-nrh{}-m{}", self.mechanism, self.nrh, l),
            None => format!("{}-nrh{}", self.mechanism, self.nrh),
        }
    }
}

/// Points in output order: threshold, then mechanism, then level.
pub fn sweep_points(cfg: &RunConfig) -> Result<Vec<SweepPoint>, Error> {
    let mut levels: Vec<Option<RestorationLevel>> = Vec::new();
    if cfg.sweep.levels.is_empty() {
        if cfg.pacram.enabled && cfg.sweep.baseline {
            levels.push(None);
        }
        levels.push(if cfg.pacram.enabled { Some(cfg.pacram.level()?) } else { None });
    } else {
        if cfg.sweep.baseline {
            levels.push(None);
        }
        for &m in &cfg.sweep.levels {
            levels.push(Some(RestorationLevel::from_factor(m).expect("validated level")));
        }
    }
    let mut out = Vec::new();
    for &nrh in &cfg.sweep.nrh {
        for &mechanism in &cfg.sweep.mechanisms {
            for &level in &levels {
                out.push(SweepPoint { mechanism, nrh, level });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub point: SweepPoint,
    pub nrh_effective: u32,
    pub stats: RunStats,
    pub report: Option<VerifyReport>,
}

pub fn run_point(cfg: &RunConfig, workload: &Workload, p: SweepPoint, verify: bool) -> Result<SweepResult, Error> {
    let level = Some(p.level);
    let r = Resolved::new(cfg, Some(p.mechanism), Some(p.nrh), level)?;
    let mut c = cfg.clone();
    c.run_id = p.run_id();
    let (stats, report) = if verify {
        let mut v = Verifier::new(&r.verify_params(&c));
        let s = run_once(&c, &r, workload, &mut v)?;
        (s, Some(v.report()))
    } else {
        (run_once(&c, &r, workload, &mut NullSink)?, None)
    };
    Ok(SweepResult { point: p, nrh_effective: r.nrh_effective, stats, report })
}

/// Runs every point on the calling thread.
pub fn run_sweep_sequential(
    cfg: &RunConfig,
    workload: &Workload,
    points: &[SweepPoint],
    verify: bool,
) -> Result<Vec<SweepResult>, Error> {
    points.iter().map(|&p| run_point(cfg, workload, p, verify)).collect()
}

/// Runs points on the rayon pool; results keep the order of `points`.
#[cfg(feature = "parallel")]
pub fn run_sweep_parallel(
    cfg: &RunConfig,
    workload: &Workload,
    points: &[SweepPoint],
    verify: bool,
) -> Result<Vec<SweepResult>, Error> {
    points.par_iter().map(|&p| run_point(cfg, workload, p, verify)).collect()
}

pub fn run_sweep(cfg: &RunConfig, workload: &Workload, points: &[SweepPoint], verify: bool) -> Result<Vec<SweepResult>, Error> {
    #[cfg(feature = "parallel")]
    {
        run_sweep_parallel(cfg, workload, points, verify)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_sweep_sequential(cfg, workload, points, verify)
    }
}

pub const SWEEP_HEADER: [&str; 17] = [
    "run_id",
    "mechanism",
    "nrh",
    "nrh_effective",
    "pacram_level",
    "ipc_sum",
    "weighted_speedup",
    "busy_fraction_mean",
    "busy_fraction_max",
    "preventive_refreshes_full",
    "preventive_refreshes_partial",
    "preventive_busy_ticks",
    "rfms",
    "acts",
    "energy_pj",
    "ticks",
    "violations",
];

/// One row per sweep point.
pub fn write_sweep<W: Write>(out: W, results: &[SweepResult]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for r in results {
        let s = &r.stats;
        let violations = r.report.as_ref().map_or(String::new(), |v| (v.timing_total + v.disturbance_total).to_string());
        w.write_record([
            s.run_id.clone(),
            r.point.mechanism.to_string(),
            r.point.nrh.to_string(),
            r.nrh_effective.to_string(),
            r.point.level.map_or(String::from("1.00"), |l| l.to_string()),
            s.ipc().iter().sum::<f64>().to_string(),
            s.weighted_speedup.map_or(String::new(), |x| x.to_string()),
            s.mean_busy_fraction().to_string(),
            s.max_busy_fraction().to_string(),
            s.vrrs[0].to_string(),
            s.vrrs[1].to_string(),
            s.total_busy_ticks().to_string(),
            s.rfms.to_string(),
            s.acts.to_string(),
            s.energy.total().to_string(),
            s.ticks.to_string(),
            violations,
        ])?;
    }
    w.flush()?;
    Ok(())
}
