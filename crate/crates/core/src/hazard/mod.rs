//! Wildfire cellular automaton.
//!
//! Cells are `UNBURNABLE`, `FUEL`, `BURNING` or `BURNED`. Each step, every
//! fuel cell collects an ignition probability from its burning neighbours:
//!
//! ```text
//! p(b→c) = clamp(p0 · s(c) · F(c) · (1 + cw · |W(c)| · max(0, cos θ)), 0, 1)
//! P(c)   = 1 − Π_b (1 − p(b→c))
//! ```
//!
//! where `F` is the fuel factor, `s` the product of active suppression
//! factors covering `c`, `W(c)` the wind at the receiving cell and `θ` the
//! angle between that wind and the direction from `b` to `c`. Stochastic
//! variants ignite with probability `P(c)`; the threshold variant ignites
//! iff `P(c) ≥ 0.5`. Diagonal neighbours are not distance-weighted.

mod control;
pub mod dtm;
mod rules;
mod simulate;
mod state;

pub use control::{apply_control, ActionKind, ControlAction, SuppressionZone};
pub use rules::{ignition_probability, step_fire, uniform_draw};
pub use simulate::{simulate, simulate_final, FinalState, Trajectory};
pub use state::{CellState, FireState, ForcingSeries, ParameterVector, SpreadRuleVariant, WindField};

use crate::raster::{Cell, RasterError};

#[derive(Debug, thiserror::Error)]
pub enum HazardError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid fire state: {0}")]
    InvalidState(String),
    #[error("forcing covers {available} steps but {needed} are required")]
    ForcingTooShort { needed: usize, available: usize },
    #[error("action scheduled at step {start} lies outside the simulated steps [{first}, {end})")]
    ScheduleOutOfHorizon { start: u32, first: u32, end: u32 },
    #[error("cell ({}, {}) is outside the grid", .0.row, .0.col)]
    OutOfGrid(Cell),
    #[error("invalid control action: {0}")]
    InvalidAction(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}
