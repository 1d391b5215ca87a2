//! Trace-driven DRAM subsystem simulator with RowHammer mitigations and
//! partial-charge-restoration preventive refreshes.
//!
//! The crate is organized bottom-up:
//!
//! * [`profiles`] loads per-module characterization data and evaluates the
//!   preventive-refresh cost model.
//! * [`dram`] models timings, topology and the per-bank command state machine.
//! * [`mitigation`] holds the trigger algorithms (PARA, RFM, PRAC, Graphene, Hydra).
//! * [`pacram`] selects full or partial restoration latency per preventive refresh.
//! * [`controller`] schedules requests FR-FCFS and issues every DRAM command.
//! * [`workload`] parses and generates traces, runs the core model and keeps statistics.
//! * [`verifier`] replays command logs independently for timing and disturbance safety.
//! * [`sim`] and [`sweep`] tie a [`config::RunConfig`] to a full run.

pub mod command;
pub mod config;
pub mod controller;
pub mod dram;
pub mod error;
pub mod mitigation;
pub mod pacram;
pub mod profiles;
pub mod sim;
pub mod sweep;
pub mod tracker;
pub mod verifier;
pub mod workload;

pub use dram::timing::{DeviceTimings, Tick};
pub use error::Error;
