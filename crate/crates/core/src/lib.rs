//! Offline/online generalized multiscale finite elements for the Richards
//! equation, with a neural surrogate for the online basis functions.

pub mod error;
pub mod fine_solver;
pub mod grids;
pub mod harness;
pub mod metrics;
pub mod msfem_offline;
pub mod msfem_online;
mod par;
pub mod random_fields;
pub mod surrogate;

pub use error::{Error, Result};
