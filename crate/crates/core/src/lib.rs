//! Robust natural-hazard emergency modelling.
//!
//! The crate is organised around the data flow of an emergency planning cycle:
//!
//! - [`semap`]: typed arrays with units, declarative contracts and
//!   contract-checked execution of data-transformation module graphs.
//! - [`config`]: run configuration documents and provenance blocks.
//! - [`raster`]: grid geometry and ESRI ASCII grid I/O.
//! - [`hazard`]: the wildfire cellular automaton and its control actions.
//! - [`ensemble`]: scenario designs over model, forecast and parameter uncertainty.
//! - [`fusion`]: citizen reports, remote sensing and the ignition-location belief.
//! - [`polfc`]: candidate strategies, multi-criteria evaluation, Pareto
//!   filtering, selection and replanning.
//! - [`sched`]: deadline-aware parallel execution of the evaluation task array.

pub mod config;
pub mod cost;
pub mod digest;
pub mod ensemble;
pub mod fusion;
pub mod hazard;
pub mod polfc;
pub mod raster;
pub mod sched;
pub mod semap;
pub mod units;

pub use cost::{CostVector, CriteriaRegistry, Criterion};
pub use units::Unit;
