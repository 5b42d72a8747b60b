//! Oculomotor examination engine.
//!
//! Gaze geometry, the three examination tests as deterministic state machines,
//! a closed-loop synthetic subject, clinical-style metrics with
//! normal/abnormal screening, per-patient session records, and dependency-graph
//! learning paths.

pub mod geometry;
pub mod protocol;
pub mod simulator;
pub mod metrics;
pub mod pedagogy;
pub mod store;
