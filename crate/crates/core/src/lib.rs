//! Synthetic dispersive qubit-readout trajectories and the classifiers used to
//! discriminate them.
//!
//! The crate is organised as the measurement chain is: [`sim`] produces
//! labelled single-shot records, [`features`] flattens and filters them,
//! [`discriminant`], [`svm`] and [`ensemble`] classify, [`cluster`] finds the
//! T1 and heating subclasses, and [`metrics`] scores the result.
//! [`pipeline`] wires these into the recipes the command-line tool runs.

pub mod cluster;
pub mod discriminant;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod sim;
pub mod svm;

pub use error::{Error, Result};
