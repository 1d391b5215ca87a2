//! Real-chip characterization data and the preventive-refresh cost model.
//!
//! A [`ChipProfile`] holds, per charge-restoration level, the lowest observed
//! RowHammer threshold of one DDR4 module and (when the level is usable) the
//! parameters needed to run partial restoration safely on it: the effective
//! threshold, the number of consecutive partial restorations the module
//! tolerates and the resulting full-restoration interval.
//!
//! Profiles are stored as CSV with one row per (module, level):
//!
//! ```text
//! module,mfr,level,nrh,nrh_eff,n_pcr,t_fcri_ns
//! S6,S,0.36,6200,3900,2000,374000000
//! ```
//!
//! An empty `nrh` means no bitflips were observed, `nrh=0` means the level
//! causes retention failures, empty `nrh_eff,n_pcr,t_fcri_ns` mark the level as
//! not applicable, and an empty `t_fcri_ns` alone means every preventive
//! refresh may be partial.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dram::timing::DeviceTimings;
use crate::error::ProfileError;

/// The bundled transcription of the published module characterization tables.
pub const BUNDLED_PROFILES_CSV: &str = include_str!("../data/profiles.csv");

/// Reduced charge-restoration latency expressed as a whole-percent fraction of nominal tRAS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RestorationLevel(u8);

impl RestorationLevel {
    pub const NOMINAL: RestorationLevel = RestorationLevel(100);

    /// The seven characterized levels, from nominal down to the most aggressive.
    pub const CHARACTERIZED: [RestorationLevel; 7] = [
        RestorationLevel(100),
        RestorationLevel(81),
        RestorationLevel(64),
        RestorationLevel(45),
        RestorationLevel(36),
        RestorationLevel(27),
        RestorationLevel(18),
    ];

    pub fn from_percent(percent: u8) -> Option<Self> {
        (1..=100).contains(&percent).then_some(Self(percent))
    }

    /// Parses a fraction such as `0.36`; rounded to the nearest percent.
    pub fn from_factor(m: f64) -> Option<Self> {
        if !(m.is_finite() && m > 0.0 && m <= 1.0 + 1e-9) {
            return None;
        }
        Self::from_percent((m * 100.0).round() as u8)
    }

    pub fn percent(self) -> u8 {
        self.0
    }

    pub fn factor(self) -> f64 {
        f64::from(self.0) / 100.0
    }

    pub fn is_nominal(self) -> bool {
        self.0 == 100
    }

    /// Reduced tRAS in whole nanoseconds: `round(m * t_ras_nominal)`.
    pub fn t_ras_red(self, t_ras_nominal: f64) -> f64 {
        (self.factor() * t_ras_nominal).round()
    }
}

impl fmt::Display for RestorationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl FromStr for RestorationLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let m: f64 = s
            .trim()
            .parse()
            .map_err(|_| format!("invalid restoration level `{s}`"))?;
        Self::from_factor(m).ok_or_else(|| format!("restoration level `{s}` must be in (0, 1]"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Manufacturer {
    H,
    M,
    S,
}

impl FromStr for Manufacturer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "H" => Ok(Self::H),
            "M" => Ok(Self::M),
            "S" => Ok(Self::S),
            other => Err(format!("unknown manufacturer `{other}`")),
        }
    }
}

impl fmt::Display for Manufacturer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::H => "H",
            Self::M => "M",
            Self::S => "S",
        };
        f.write_str(s)
    }
}

/// Lowest observed RowHammer threshold at one restoration level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrhObservation {
    NoBitflips,
    /// Partial restoration alone flips bits (threshold of zero).
    RetentionFailure,
    Threshold(u32),
}

impl NrhObservation {
    pub fn threshold(self) -> Option<u32> {
        match self {
            Self::Threshold(n) => Some(n),
            _ => None,
        }
    }
}

/// Full-charge-restoration interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fcri {
    Finite { ns: u64 },
    /// Every preventive refresh may use the reduced latency.
    AllPartial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacramParams {
    pub nrh_effective: u32,
    pub n_pcr: u32,
    pub t_fcri: Fcri,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelEntry {
    pub level: RestorationLevel,
    pub nrh: NrhObservation,
    pub pacram: Option<PacramParams>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChipProfile {
    pub module_id: String,
    pub mfr: Manufacturer,
    /// Sorted from nominal to most aggressive level.
    pub levels: Vec<LevelEntry>,
    /// Levels whose effective threshold exceeds the nominal one (only kept by
    /// [`Validation::Permissive`] loads).
    pub anomalies: Vec<RestorationLevel>,
}

impl ChipProfile {
    pub fn entry(&self, level: RestorationLevel) -> Option<&LevelEntry> {
        self.levels.iter().find(|e| e.level == level)
    }

    pub fn nrh_nominal(&self) -> Option<u32> {
        self.entry(RestorationLevel::NOMINAL)?.nrh.threshold()
    }

    pub fn nrh_at(&self, level: RestorationLevel) -> Option<NrhObservation> {
        self.entry(level).map(|e| e.nrh)
    }

    pub fn pacram_params(&self, level: RestorationLevel) -> Option<PacramParams> {
        self.entry(level)?.pacram
    }

    /// Nominal is applicable whenever the module has a finite threshold; a
    /// reduced level only when it carries partial-restoration parameters.
    pub fn is_applicable(&self, level: RestorationLevel) -> bool {
        if self.nrh_nominal().is_none() {
            return false;
        }
        if level.is_nominal() {
            return true;
        }
        self.pacram_params(level).is_some()
    }

    pub fn applicable_levels(&self) -> Vec<RestorationLevel> {
        self.levels
            .iter()
            .map(|e| e.level)
            .filter(|&l| self.is_applicable(l))
            .collect()
    }
}

/// How to treat rows whose effective threshold exceeds the nominal one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validation {
    Strict,
    Permissive,
}

#[derive(Debug, Deserialize, Serialize)]
struct ProfileRow {
    module: String,
    mfr: String,
    level: String,
    nrh: String,
    nrh_eff: String,
    n_pcr: String,
    t_fcri_ns: String,
}

fn parse_opt_u64(field: &str, line: u64, name: &str) -> Result<Option<u64>, ProfileError> {
    let f = field.trim();
    if f.is_empty() {
        return Ok(None);
    }
    f.parse::<u64>().map(Some).map_err(|_| ProfileError::Parse {
        line,
        message: format!("{name}: `{f}` is not a non-negative integer"),
    })
}

fn to_u32(v: u64, line: u64, name: &str) -> Result<u32, ProfileError> {
    u32::try_from(v).map_err(|_| ProfileError::Parse {
        line,
        message: format!("{name}: {v} is too large"),
    })
}

/// Parses profile CSV from any reader.
pub fn parse_profiles<R: Read>(reader: R, validation: Validation) -> Result<Vec<ChipProfile>, ProfileError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut profiles: Vec<ChipProfile> = Vec::new();
    for (idx, rec) in rdr.deserialize::<ProfileRow>().enumerate() {
        // header is line 1
        let line = idx as u64 + 2;
        let row = rec.map_err(|e| ProfileError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(line),
            message: e.to_string(),
        })?;
        if row.module.is_empty() {
            return Err(ProfileError::Parse { line, message: "empty module id".into() });
        }
        let mfr: Manufacturer = row.mfr.parse().map_err(|m| ProfileError::Parse { line, message: m })?;
        let level: RestorationLevel = row.level.parse().map_err(|m| ProfileError::Parse { line, message: m })?;
        let nrh = match parse_opt_u64(&row.nrh, line, "nrh")? {
            None => NrhObservation::NoBitflips,
            Some(0) => NrhObservation::RetentionFailure,
            Some(n) => NrhObservation::Threshold(to_u32(n, line, "nrh")?),
        };
        let eff = parse_opt_u64(&row.nrh_eff, line, "nrh_eff")?;
        let n_pcr = parse_opt_u64(&row.n_pcr, line, "n_pcr")?;
        let t_fcri = parse_opt_u64(&row.t_fcri_ns, line, "t_fcri_ns")?;
        let pacram = match (eff, n_pcr, t_fcri) {
            (None, None, None) => None,
            (Some(eff), Some(n_pcr), t) => {
                if eff == 0 {
                    return Err(ProfileError::Parse { line, message: "nrh_eff must be positive".into() });
                }
                if n_pcr == 0 {
                    return Err(ProfileError::Validation {
                        module: row.module.clone(),
                        level,
                        message: "n_pcr must be at least 1".into(),
                    });
                }
                Some(PacramParams {
                    nrh_effective: to_u32(eff, line, "nrh_eff")?,
                    n_pcr: to_u32(n_pcr, line, "n_pcr")?,
                    t_fcri: t.map_or(Fcri::AllPartial, |ns| Fcri::Finite { ns }),
                })
            }
            _ => {
                return Err(ProfileError::Parse {
                    line,
                    message: "nrh_eff and n_pcr must both be set or both be empty".into(),
                })
            }
        };
        if pacram.is_some() && level.is_nominal() {
            return Err(ProfileError::Parse {
                line,
                message: "the nominal level carries no partial-restoration parameters".into(),
            });
        }
        if pacram.is_some() && nrh.threshold().is_none() {
            return Err(ProfileError::Validation {
                module: row.module.clone(),
                level,
                message: "partial-restoration parameters given for a level without a threshold".into(),
            });
        }

        let pos = profiles.iter().position(|p| p.module_id == row.module);
        let profile = match pos {
            Some(i) => &mut profiles[i],
            None => {
                profiles.push(ChipProfile {
                    module_id: row.module.clone(),
                    mfr,
                    levels: Vec::new(),
                    anomalies: Vec::new(),
                });
                profiles.last_mut().unwrap()
            }
        };
        if profile.mfr != mfr {
            return Err(ProfileError::Parse {
                line,
                message: format!("module {} listed with two manufacturers", row.module),
            });
        }
        if profile.entry(level).is_some() {
            return Err(ProfileError::Parse {
                line,
                message: format!("duplicate level {level} for module {}", row.module),
            });
        }
        profile.levels.push(LevelEntry { level, nrh, pacram });
    }

    for p in &mut profiles {
        p.levels.sort_by_key(|e| std::cmp::Reverse(e.level));
        let nominal = p.nrh_nominal();
        for e in &p.levels {
            let (Some(params), Some(nom)) = (e.pacram, nominal) else { continue };
            if params.nrh_effective > nom {
                match validation {
                    Validation::Strict => {
                        return Err(ProfileError::Validation {
                            module: p.module_id.clone(),
                            level: e.level,
                            message: format!(
                                "effective threshold {} exceeds nominal threshold {nom}",
                                params.nrh_effective
                            ),
                        })
                    }
                    Validation::Permissive => p.anomalies.push(e.level),
                }
            }
        }
        if p.entry(RestorationLevel::NOMINAL).is_none() && p.levels.iter().any(|e| e.pacram.is_some()) {
            return Err(ProfileError::Validation {
                module: p.module_id.clone(),
                level: RestorationLevel::NOMINAL,
                message: "missing nominal level row".into(),
            });
        }
    }
    Ok(profiles)
}

/// Loads and strictly validates a profile CSV file.
pub fn load_profiles(path: &Path) -> Result<Vec<ChipProfile>, ProfileError> {
    let file = File::open(path).map_err(|source| ProfileError::Io { path: path.to_path_buf(), source })?;
    parse_profiles(file, Validation::Strict)
}

/// The bundled characterization data, loaded permissively because the
/// published tables contain a handful of effective thresholds above nominal.
pub fn bundled_profiles() -> Vec<ChipProfile> {
    parse_profiles(BUNDLED_PROFILES_CSV.as_bytes(), Validation::Permissive)
        .expect("bundled profile table is well-formed")
}

pub fn find_profile<'a>(profiles: &'a [ChipProfile], module: &str) -> Result<&'a ChipProfile, ProfileError> {
    profiles
        .iter()
        .find(|p| p.module_id == module)
        .ok_or_else(|| ProfileError::UnknownModule(module.to_string()))
}

pub fn write_profiles<W: Write>(writer: W, profiles: &[ChipProfile]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    for p in profiles {
        for e in &p.levels {
            let nrh = match e.nrh {
                NrhObservation::NoBitflips => String::new(),
                NrhObservation::RetentionFailure => "0".into(),
                NrhObservation::Threshold(n) => n.to_string(),
            };
            let (eff, n_pcr, t_fcri) = match e.pacram {
                None => (String::new(), String::new(), String::new()),
                Some(pp) => (
                    pp.nrh_effective.to_string(),
                    pp.n_pcr.to_string(),
                    match pp.t_fcri {
                        Fcri::Finite { ns } => ns.to_string(),
                        Fcri::AllPartial => String::new(),
                    },
                ),
            };
            w.serialize(ProfileRow {
                module: p.module_id.clone(),
                mfr: p.mfr.to_string(),
                level: e.level.to_string(),
                nrh,
                nrh_eff: eff,
                n_pcr,
                t_fcri_ns: t_fcri,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Threshold reduction at `level`, in whole percent of nominal (floored, capped at 100).
pub fn nrh_reduction_percent(profile: &ChipProfile, level: RestorationLevel) -> Result<u32, ProfileError> {
    let not_applicable = || ProfileError::NotApplicable { module: profile.module_id.clone(), level };
    let nominal = profile.nrh_nominal().ok_or_else(not_applicable)?;
    if level.is_nominal() {
        return Ok(100);
    }
    let params = profile.pacram_params(level).ok_or_else(not_applicable)?;
    let pct = u64::from(params.nrh_effective) * 100 / u64::from(nominal);
    Ok(pct.clamp(1, 100) as u32)
}

/// `nrh_effective / nrh_nominal` at whole-percent granularity, in (0, 1].
pub fn nrh_reduction_ratio(profile: &ChipProfile, level: RestorationLevel) -> Result<f64, ProfileError> {
    nrh_reduction_percent(profile, level).map(|p| f64::from(p) / 100.0)
}

/// Latency of one preventive refresh (an ACT/PRE pair): reduced tRAS plus tRP.
pub fn preventive_refresh_latency(timings: &DeviceTimings, level: RestorationLevel) -> f64 {
    level.t_ras_red(timings.t_ras) + timings.t_rp
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyFormula {
    /// Refresh count times total refresh time.
    #[default]
    CountTimesTotalTime,
    /// Refresh count times per-refresh energy (proportional to refresh latency).
    CountTimesRefreshEnergy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMetric {
    Time,
    Energy,
}

/// One point of a preventive-refresh cost curve, normalized to the nominal level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostPoint {
    pub level: RestorationLevel,
    pub nrh: u32,
    pub t_ras_red_ns: f64,
    pub latency_ns: f64,
    pub prev_ref_latency: f64,
    pub prev_ref_count_rate: f64,
    pub total_time_cost: f64,
    pub total_energy_cost: f64,
}

impl CostPoint {
    pub fn metric(&self, metric: CostMetric) -> f64 {
        match metric {
            CostMetric::Time => self.total_time_cost,
            CostMetric::Energy => self.total_energy_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostCurve {
    pub module_id: String,
    pub points: Vec<CostPoint>,
    pub retention_failures: Vec<RestorationLevel>,
}

/// Preventive-refresh cost at every characterized level with a finite threshold.
pub fn cost_curve(
    profile: &ChipProfile,
    timings: &DeviceTimings,
    formula: EnergyFormula,
) -> Result<CostCurve, ProfileError> {
    let nominal = profile.nrh_nominal().ok_or_else(|| ProfileError::Empty(profile.module_id.clone()))?;
    let nominal_latency = preventive_refresh_latency(timings, RestorationLevel::NOMINAL);
    let mut points = Vec::new();
    let mut retention_failures = Vec::new();
    for e in &profile.levels {
        match e.nrh {
            NrhObservation::Threshold(n) => {
                let latency_ns = preventive_refresh_latency(timings, e.level);
                let count = f64::from(nominal) / f64::from(n);
                let latency = latency_ns / nominal_latency;
                let time = count * latency;
                let energy = match formula {
                    EnergyFormula::CountTimesTotalTime => count * time,
                    EnergyFormula::CountTimesRefreshEnergy => count * latency,
                };
                points.push(CostPoint {
                    level: e.level,
                    nrh: n,
                    t_ras_red_ns: e.level.t_ras_red(timings.t_ras),
                    latency_ns,
                    prev_ref_latency: latency,
                    prev_ref_count_rate: count,
                    total_time_cost: time,
                    total_energy_cost: energy,
                });
            }
            NrhObservation::RetentionFailure => retention_failures.push(e.level),
            NrhObservation::NoBitflips => {}
        }
    }
    if points.is_empty() {
        return Err(ProfileError::Empty(profile.module_id.clone()));
    }
    Ok(CostCurve { module_id: profile.module_id.clone(), points, retention_failures })
}

/// Level minimizing `metric`; ties go to the larger (less aggressive) level.
///
/// Panics on an empty curve.
pub fn inflection_point(points: &[CostPoint], metric: CostMetric) -> RestorationLevel {
    assert!(!points.is_empty(), "inflection_point on an empty curve");
    let mut best = &points[0];
    for p in &points[1..] {
        let (a, b) = (p.metric(metric), best.metric(metric));
        let tol = 1e-12 * a.abs().max(b.abs());
        if a < b - tol || ((a - b).abs() <= tol && p.level > best.level) {
            best = p;
        }
    }
    best.level
}

/// Writes a cost curve in the `curve.csv` schema.
pub fn write_curve<W: Write>(writer: W, curve: &CostCurve) -> Result<(), csv::Error> {
    let time_min = inflection_point(&curve.points, CostMetric::Time);
    let energy_min = inflection_point(&curve.points, CostMetric::Energy);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "module",
        "m_factor",
        "t_ras_red_ns",
        "nrh",
        "latency_ns",
        "prev_ref_latency",
        "prev_ref_count",
        "total_time_cost",
        "total_energy_cost",
        "time_min",
        "energy_min",
    ])?;
    for p in &curve.points {
        w.write_record([
            curve.module_id.clone(),
            p.level.to_string(),
            format!("{}", p.t_ras_red_ns),
            p.nrh.to_string(),
            format!("{:.3}", p.latency_ns),
            format!("{:.6}", p.prev_ref_latency),
            format!("{:.6}", p.prev_ref_count_rate),
            format!("{:.6}", p.total_time_cost),
            format!("{:.6}", p.total_energy_cost),
            u8::from(p.level == time_min).to_string(),
            u8::from(p.level == energy_min).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
