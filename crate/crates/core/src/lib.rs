//! Proactive beam-level handoff for mobile users in an urban grid.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod error;
pub mod features;
pub mod grid;
pub mod handoff;
pub mod learner;
pub mod metrics;
pub mod radio;
pub mod runner;
pub mod seeding;
pub mod world;

pub use error::{Error, Result};
