//! Command-line tool and HTTP control plane for oculomotor examinations.

pub mod api;
pub mod chart;
pub mod cli;
pub mod runs;
pub mod runspec;
