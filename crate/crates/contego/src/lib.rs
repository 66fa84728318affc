//! Integration of sporadic security monitoring into fixed-priority
//! real-time systems: schedulability analysis, monitoring-period
//! adaptation, budgeted-server parameter selection, and a discrete-event
//! simulator that validates the resulting configurations (including
//! passive/active mode switching).
//!
//! Pipeline: [`model`] describes the system, [`analysis`] provides the
//! closed-form checks, [`period_opt`] and [`server_opt`] solve the two
//! optimization layers, [`selection`] orchestrates the full feasibility
//! check and parameter selection, [`sim`] replays solutions event by
//! event, [`workload`] generates seeded synthetic systems, and [`cli`]
//! drives experiment campaigns.

pub mod analysis;
pub mod cli;
pub mod model;
pub mod period_opt;
pub mod selection;
pub mod server_opt;
pub mod sim;
pub mod time;
pub mod workload;

pub use model::{
    ContegoSolution, Mode, RealTimeTask, SecurityTask, ServerParams, TaskSet,
};
pub use time::{Rat, Time};
