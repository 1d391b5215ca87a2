//! TOML run configuration.
//!
//! ```toml
//! seed = 1
//! mitigation = "graphene"
//! nrh = 1024
//!
//! [timings]
//! preset = "ddr5_default"
//!
//! [pacram]
//! enabled = true
//! profile = "H5"
//! level = 0.27
//!
//! [workload]
//! traces = ["demo.trace"]
//! instructions = 1_000_000
//! warmup = 100_000
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dram::timing::DeviceTimings;
use crate::dram::topology::Topology;
use crate::error::ConfigError;
use crate::mitigation::{MechanismKind, MitigationParams};
use crate::pacram::{derive_config, PacramConfig, PacramMode};
use crate::profiles::{bundled_profiles, find_profile, load_profiles, ChipProfile, RestorationLevel};
use crate::workload::{AttackPattern, CacheConfig, EnergyTable, RandomSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingsConfig {
    pub preset: String,
    pub t_rcd: Option<f64>,
    pub t_ras: Option<f64>,
    pub t_rp: Option<f64>,
    pub t_rc: Option<f64>,
    pub t_cl: Option<f64>,
    pub t_bl: Option<f64>,
    pub t_rfc: Option<f64>,
    pub t_refi: Option<f64>,
    pub t_refw: Option<f64>,
}

impl Default for TimingsConfig {
    fn default() -> Self {
        Self {
            preset: "ddr5_default".into(),
            t_rcd: None,
            t_ras: None,
            t_rp: None,
            t_rc: None,
            t_cl: None,
            t_bl: None,
            t_rfc: None,
            t_refi: None,
            t_refw: None,
        }
    }
}

impl TimingsConfig {
    pub fn resolve(&self) -> Result<DeviceTimings, ConfigError> {
        let mut t = DeviceTimings::preset(&self.preset)?;
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut t.t_rcd, self.t_rcd);
        set(&mut t.t_ras, self.t_ras);
        set(&mut t.t_rp, self.t_rp);
        // keep tRC consistent when only tRAS or tRP is overridden
        t.t_rc = self.t_rc.unwrap_or(t.t_ras + t.t_rp);
        set(&mut t.t_cl, self.t_cl);
        set(&mut t.t_bl, self.t_bl);
        set(&mut t.t_rfc, self.t_rfc);
        set(&mut t.t_refi, self.t_refi);
        set(&mut t.t_refw, self.t_refw);
        t.validate()?;
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PacramSection {
    pub enabled: bool,
    pub profile: Option<String>,
    pub level: Option<f64>,
    pub mode: PacramMode,
    /// Also shorten periodic refreshes.
    pub periodic_ext: bool,
    /// Force a full restoration once a row has used its partial budget.
    pub guard: bool,
    /// Profile CSV; the bundled tables when unset.
    pub profiles: Option<PathBuf>,
}

impl Default for PacramSection {
    fn default() -> Self {
        Self {
            enabled: false,
            profile: None,
            level: None,
            mode: PacramMode::Controller,
            periodic_ext: false,
            guard: true,
            profiles: None,
        }
    }
}

impl PacramSection {
    pub fn load_profiles(&self) -> Result<Vec<ChipProfile>, ConfigError> {
        Ok(match &self.profiles {
            Some(p) => load_profiles(p)?,
            None => bundled_profiles(),
        })
    }

    pub fn level(&self) -> Result<RestorationLevel, ConfigError> {
        let m = self.level.ok_or_else(|| ConfigError::Invalid("pacram.level is required when pacram is enabled".into()))?;
        RestorationLevel::from_factor(m)
            .ok_or_else(|| ConfigError::Invalid(format!("pacram.level must be in (0, 1], got {m}")))
    }

    /// The PaCRAM configuration at `level` (or the configured level), if enabled.
    pub fn derive(&self, timings: &DeviceTimings, level: Option<RestorationLevel>) -> Result<Option<PacramConfig>, ConfigError> {
        if !self.enabled {
            return Ok(None);
        }
        let module = self
            .profile
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid("pacram.profile is required when pacram is enabled".into()))?;
        let profiles = self.load_profiles()?;
        let profile = find_profile(&profiles, module)?;
        let level = match level {
            Some(l) => l,
            None => self.level()?,
        };
        let mut cfg = derive_config(profile, level, timings)?;
        cfg.mode = self.mode;
        Ok(Some(cfg))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    /// Flat bank index.
    #[serde(default)]
    pub bank: usize,
    pub victim: u32,
    #[serde(default = "default_pattern")]
    pub pattern: AttackPattern,
    /// Accesses before the trace repeats.
    #[serde(default = "default_attack_len")]
    pub length: usize,
}

fn default_pattern() -> AttackPattern {
    AttackPattern::DoubleSided
}

fn default_attack_len() -> usize {
    1024
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadConfig {
    /// One core per trace file.
    pub traces: Vec<PathBuf>,
    /// Adds an attacker core.
    pub attack: Option<AttackSpec>,
    /// Adds `random_cores` cores running seeded random streams.
    pub random: Option<RandomSpec>,
    pub random_cores: usize,
    /// Per-core instruction budget, warmup included.
    pub instructions: u64,
    pub warmup: u64,
    pub max_activations: Option<u64>,
    pub max_ticks: Option<u64>,
    pub llc: CacheConfig,
    /// Cache of solo-run IPCs for weighted speedup.
    pub alone_ipc: Option<PathBuf>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            traces: Vec::new(),
            attack: None,
            random: None,
            random_cores: 1,
            instructions: 100_000_000,
            warmup: 10_000_000,
            max_activations: None,
            max_ticks: None,
            llc: CacheConfig::default(),
            alone_ipc: None,
        }
    }
}

impl WorkloadConfig {
    pub fn cores(&self) -> usize {
        self.traces.len() + usize::from(self.attack.is_some()) + if self.random.is_some() { self.random_cores } else { 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub nrh: Vec<u32>,
    pub mechanisms: Vec<MechanismKind>,
    /// Restoration levels swept with `pacram.profile`; empty runs only the configured setting.
    pub levels: Vec<f64>,
    /// Also run each point without PaCRAM.
    pub baseline: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            nrh: vec![1024, 512, 256, 128, 64, 32],
            mechanisms: MechanismKind::ALL.to_vec(),
            levels: Vec::new(),
            baseline: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub stats: String,
    /// Command log file name; empty disables the log.
    pub cmdlog: String,
    pub sweep: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), stats: "stats.csv".into(), cmdlog: "run.cmdlog".into(), sweep: "sweep.csv".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run_id: String,
    pub seed: u64,
    pub mitigation: MechanismKind,
    /// Nominal threshold the mitigation is configured for.
    pub nrh: u32,
    pub queue_depth: usize,
    pub mop_group: u32,
    pub timings: TimingsConfig,
    pub topology: Topology,
    pub mitigation_params: MitigationParams,
    pub pacram: PacramSection,
    pub workload: WorkloadConfig,
    pub energy: EnergyTable,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            seed: 0,
            mitigation: MechanismKind::None,
            nrh: 1024,
            queue_depth: 64,
            mop_group: 4,
            timings: TimingsConfig::default(),
            topology: Topology::default(),
            mitigation_params: MitigationParams::default(),
            pacram: PacramSection::default(),
            workload: WorkloadConfig::default(),
            energy: EnergyTable::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: origin.to_path_buf(), message: e.to_string() })
    }

    /// Reads, path-resolves and validates a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.workload.traces.iter_mut().for_each(fix);
        if let Some(p) = &mut self.pacram.profiles {
            fix(p);
        }
        if let Some(p) = &mut self.workload.alone_ipc {
            fix(p);
        }
        fix(&mut self.output.dir);
    }

    pub fn device_timings(&self) -> Result<DeviceTimings, ConfigError> {
        self.timings.resolve()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let t = self.device_timings()?;
        self.topology.validate()?;
        if self.topology.channels != 1 {
            return bad(format!("only one channel is simulated, topology.channels = {}", self.topology.channels));
        }
        if self.nrh == 0 {
            return bad("nrh must be positive".into());
        }
        if self.queue_depth == 0 {
            return bad("queue_depth must be positive".into());
        }
        crate::controller::AddressMapper::new(self.topology, self.mop_group)?;
        let mp = &self.mitigation_params;
        if mp.blast_radius == 0 {
            return bad("mitigation_params.blast_radius must be at least 1".into());
        }
        if mp.para_c.is_nan() || mp.para_c <= 0.0 {
            return bad("mitigation_params.para_c must be positive".into());
        }
        if mp.hydra_group_size == 0 || mp.hydra_cache_entries == 0 || mp.hydra_cache_ways == 0 {
            return bad("hydra group size and cache geometry must be positive".into());
        }
        if !mp.hydra_cache_entries.is_multiple_of(mp.hydra_cache_ways) {
            return bad("mitigation_params.hydra_cache_entries must be a multiple of hydra_cache_ways".into());
        }
        if let Some(cfg) = self.pacram.derive(&t, None)? {
            if cfg.mode == PacramMode::Ondie && !self.mitigation.uses_rfm() {
                return bad(format!("pacram.mode = \"ondie\" needs rfm or prac, not {}", self.mitigation));
            }
        }
        for &m in &self.sweep.levels {
            if RestorationLevel::from_factor(m).is_none() {
                return bad(format!("sweep.levels entry {m} is not in (0, 1]"));
            }
        }
        if self.sweep.nrh.contains(&0) {
            return bad("sweep.nrh entries must be positive".into());
        }
        let w = &self.workload;
        if w.cores() == 0 {
            return bad("workload needs at least one of traces, attack or random".into());
        }
        if w.instructions <= w.warmup {
            return bad(format!("workload.instructions ({}) must exceed warmup ({})", w.instructions, w.warmup));
        }
        if let Some(a) = &w.attack {
            if a.bank >= self.topology.total_banks() || a.victim >= self.topology.rows_per_bank || a.length == 0 {
                return bad("workload.attack bank/victim out of range or empty length".into());
            }
        }
        if let Some(r) = &w.random {
            if r.footprint_bytes > self.topology.capacity_bytes() || r.footprint_bytes < 64 {
                return bad("workload.random.footprint_bytes must be in [64, capacity]".into());
            }
            if !(0.0..=1.0).contains(&r.write_fraction) || !(0.0..=1.0).contains(&r.sequential) {
                return bad("workload.random fractions must be in [0, 1]".into());
            }
        }
        if w.llc.enabled && (w.llc.ways == 0 || w.llc.size_bytes < 64) {
            return bad("workload.llc needs positive ways and size".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let text = r#"
            mitigation = "graphene"
            nrh = 512
            [workload]
            instructions = 1000
            warmup = 0
            [workload.attack]
            victim = 100
        "#;
        let c = RunConfig::from_toml(text, Path::new("x.toml")).unwrap();
        c.validate().unwrap();
        assert_eq!(c.mitigation, MechanismKind::Graphene);
        assert_eq!(c.workload.attack.as_ref().unwrap().pattern, AttackPattern::DoubleSided);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("nhr = 5", Path::new("x")).is_err());
        assert!(RunConfig::from_toml("[pacram]\nenable = true", Path::new("x")).is_err());
        assert!(RunConfig::from_toml("mitigation = \"trr\"", Path::new("x")).is_err());
    }

    #[test]
    fn pacram_requires_applicable_level() {
        let mut c = RunConfig::default();
        c.workload.attack = Some(AttackSpec { bank: 0, victim: 9, pattern: AttackPattern::DoubleSided, length: 2 });
        c.pacram = PacramSection { enabled: true, profile: Some("H5".into()), level: Some(0.27), ..PacramSection::default() };
        c.validate().unwrap();
        c.pacram.profile = Some("H0".into());
        assert!(c.validate().is_err());
        c.pacram.profile = Some("H5".into());
        c.pacram.mode = PacramMode::Ondie;
        c.mitigation = MechanismKind::Graphene;
        assert!(c.validate().is_err());
        c.mitigation = MechanismKind::Prac;
        c.validate().unwrap();
    }

    #[test]
    fn timing_overrides() {
        let t = TimingsConfig { preset: "ddr4_default".into(), t_rp: Some(14.0), ..TimingsConfig::default() };
        let r = t.resolve().unwrap();
        assert_eq!((r.t_rp, r.t_rc, r.t_refw), (14.0, 47.0, 64e6));
        let t = TimingsConfig { t_rc: Some(50.0), ..TimingsConfig::default() };
        assert!(t.resolve().is_err());
    }

    #[test]
    fn multi_channel_rejected() {
        let mut c = RunConfig::default();
        c.workload.traces = vec!["a".into()];
        c.topology.channels = 2;
        assert!(c.validate().is_err());
    }
}
