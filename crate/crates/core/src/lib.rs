//! Coded computation over heterogeneous workers serving a stream of
//! iterative jobs: load splitting, delay analytics, code-parameter search,
//! gradient-code algebra and a discrete-event simulator.

pub mod analytics;
pub mod codeopt;
pub mod error;
pub mod export;
pub mod gradcode;
pub mod loadsplit;
pub mod quadrature;
pub mod simulator;
pub mod special;
pub mod stochastic;

pub use error::{Error, Result};
