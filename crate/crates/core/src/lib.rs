//! Closed-form approximations to maximum likelihood for rare-event,
//! discrete-time default models, with an exact MLE for comparison and a
//! Monte Carlo harness that stress-tests both.

pub mod error;
pub mod cli;
pub mod closedform;
pub mod estimate;
pub mod gproc;
pub mod hazard;
pub mod linalg;
pub mod mle;
pub mod panel;
pub mod rng;
pub mod xlab;

pub use error::{Error, Result};
