//! A laboratory for comparing correlation-driven portfolio allocation schemes
//! on synthetic and historical return traces.

pub mod allocation;
pub mod cli;
pub mod config;
pub mod correlation;
pub mod data_io;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod returns;
pub mod trace_gen;

pub use error::{LabError, Result};
pub use returns::ReturnMatrix;
