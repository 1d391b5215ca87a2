//! RowHammer mitigation mechanisms behind one activation hook.

pub mod graphene;
pub mod hydra;
pub mod para;
pub mod rfm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dram::device::Device;
use crate::dram::timing::Tick;
pub use graphene::{graphene_table_size, Graphene};
pub use hydra::{hydra_region_bytes, Hydra, MetaAccess};
pub use para::{para_probability, Para};
pub use rfm::RfmPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismKind {
    None,
    Para,
    Rfm,
    Prac,
    Hydra,
    Graphene,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 5] = [Self::Para, Self::Rfm, Self::Prac, Self::Hydra, Self::Graphene];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Para => "para",
            Self::Rfm => "rfm",
            Self::Prac => "prac",
            Self::Hydra => "hydra",
            Self::Graphene => "graphene",
        }
    }

    /// Mechanisms whose preventive refreshes are performed by the device inside RFM.
    pub fn uses_rfm(self) -> bool {
        matches!(self, Self::Rfm | Self::Prac)
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MechanismKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "none" => Self::None,
            "para" => Self::Para,
            "rfm" => Self::Rfm,
            "prac" => Self::Prac,
            "hydra" => Self::Hydra,
            "graphene" => Self::Graphene,
            other => return Err(format!("unknown mitigation `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MitigationParams {
    pub blast_radius: u32,
    /// PARA probability is `min(1, para_c / nrh)`.
    pub para_c: f64,
    /// RFM threshold; `nrh / 4` when unset.
    pub rfm_raaimt: Option<u32>,
    /// Entries of the device-side aggressor table used by RFM.
    pub device_tracker_k: usize,
    /// Counter-table entries per bank; sized from the reset window when unset.
    pub graphene_k: Option<usize>,
    /// Counter reset period of Graphene and Hydra; the refresh window when unset.
    pub reset_window_ns: Option<f64>,
    pub hydra_group_size: u32,
    pub hydra_cache_entries: usize,
    pub hydra_cache_ways: usize,
    /// Overrides the derived trigger quota of Graphene, Hydra and PRAC.
    pub trigger_quota: Option<u32>,
}

impl Default for MitigationParams {
    fn default() -> Self {
        Self {
            blast_radius: 2,
            para_c: 11.0,
            rfm_raaimt: None,
            device_tracker_k: 16,
            graphene_k: None,
            reset_window_ns: None,
            hydra_group_size: 128,
            hydra_cache_entries: 4096,
            hydra_cache_ways: 16,
            trigger_quota: None,
        }
    }
}

/// Trigger quota for trackers cleared every reset window.
///
/// A victim has `2 * blast_radius` aggressors, each of which can reach `2q - 1`
/// activations between two triggers when a reset window boundary falls in
/// between, so `2br(2q - 1) < nrh`.
pub fn windowed_quota(nrh: u32, blast_radius: u32) -> u32 {
    let br = blast_radius.max(1);
    ((nrh.saturating_sub(1) + 2 * br) / (4 * br)).max(1)
}

/// Trigger quota for counters that are only cleared when serviced: `2br * q < nrh`.
pub fn persistent_quota(nrh: u32, blast_radius: u32) -> u32 {
    (nrh.saturating_sub(1) / (2 * blast_radius.max(1))).max(1)
}

pub fn default_raaimt(nrh: u32) -> u32 {
    (nrh / 4).max(1)
}

/// What the controller must do after an activation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Refresh the neighbors of `row` in `bank`.
    RefreshNeighbors { bank: usize, row: u32 },
    Rfm { bank: usize },
    Metadata(MetaAccess),
}

#[derive(Debug, Clone)]
pub enum Mitigation {
    None,
    Para(Para),
    Rfm(RfmPolicy),
    /// Back-off handling; the counters themselves live in the device.
    Prac { backoffs: u64 },
    Graphene(Graphene),
    Hydra(Hydra),
}

impl Mitigation {
    pub fn kind(&self) -> MechanismKind {
        match self {
            Self::None => MechanismKind::None,
            Self::Para(_) => MechanismKind::Para,
            Self::Rfm(_) => MechanismKind::Rfm,
            Self::Prac { .. } => MechanismKind::Prac,
            Self::Graphene(_) => MechanismKind::Graphene,
            Self::Hydra(_) => MechanismKind::Hydra,
        }
    }

    /// Observes a demand activation of `row` in `bank` (already applied to `device`).
    pub fn on_activate(&mut self, bank: usize, row: u32, now: Tick, device: &Device, out: &mut Vec<Action>) {
        match self {
            Self::None => {}
            Self::Para(p) => {
                if p.on_activate() {
                    out.push(Action::RefreshNeighbors { bank, row });
                }
            }
            Self::Rfm(r) => {
                if r.on_activate(bank) {
                    out.push(Action::Rfm { bank });
                }
            }
            Self::Prac { backoffs } => {
                if device.prac_check_backoff(bank) {
                    *backoffs += 1;
                    out.push(Action::Rfm { bank });
                }
            }
            Self::Graphene(g) => {
                if g.on_activate(bank, row, now) {
                    out.push(Action::RefreshNeighbors { bank, row });
                }
            }
            Self::Hydra(h) => {
                let o = h.on_activate(bank, row, now);
                if o.trigger {
                    out.push(Action::RefreshNeighbors { bank, row });
                }
                out.extend(o.traffic.into_iter().map(Action::Metadata));
            }
        }
    }

    /// Number of trigger events (neighbor refreshes or RFM requests).
    pub fn triggers(&self) -> u64 {
        match self {
            Self::None => 0,
            Self::Para(p) => p.triggers,
            Self::Rfm(r) => r.requests,
            Self::Prac { backoffs } => *backoffs,
            Self::Graphene(g) => g.triggers,
            Self::Hydra(h) => h.triggers,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotas_keep_four_neighbors_below_threshold() {
        for nrh in [29, 32, 58, 64, 117, 128, 1024, 3900] {
            let q = windowed_quota(nrh, 2);
            assert!(4 * (2 * q - 1) < nrh, "nrh {nrh} q {q}");
            let p = persistent_quota(nrh, 2);
            assert!(4 * p < nrh, "nrh {nrh} p {p}");
        }
        assert_eq!(default_raaimt(32), 8);
        assert_eq!(default_raaimt(29), 7);
    }

    #[test]
    fn names_round_trip() {
        for k in MechanismKind::ALL {
            assert_eq!(k.as_str().parse::<MechanismKind>().unwrap(), k);
        }
        assert!("trr".parse::<MechanismKind>().is_err());
    }
}
