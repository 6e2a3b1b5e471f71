//! Analysis and synthesis of networked discrete-time LTI systems.
//!
//! Subsystems exchange internal signals through a 0/1 connection matrix.
//! The crate checks observability and controllability of the whole network
//! from subsystem-local quantities, computes how many local outputs/inputs
//! each subsystem needs, and synthesizes interconnections that are
//! observable (or controllable) by construction.

pub mod error;
pub mod lifted;
pub mod linalg;
pub mod model;
mod serde_util;
pub mod spectra;
pub mod criteria;
pub mod selection;
pub mod construct;
pub mod ensemble;
pub mod io;
pub mod report;
pub mod tolerance;

pub use error::{NetError, Result};
pub use lifted::{LiftedSystem, Status, Verdict, Witness};
pub use model::{NetworkedSystem, SubsystemDims, SubsystemRealization};
pub use tolerance::Tolerances;
