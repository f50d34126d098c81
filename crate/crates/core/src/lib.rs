//! Exact simulation and verification toolkit for mean-field coalescence and
//! multi-fragmentation particle systems.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the bottom of this file fix the scalar to `f64`, which is what the
//! simulator and the command-line driver use.

// `!(x > 0.0)` guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dislocation;
pub mod error;
pub mod io;
pub mod kernels;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod simulator;
pub mod state;
pub mod stats;

pub use dislocation::{DislocationAtom, DislocationMeasure};
pub use error::{Error, Result};
pub use kernels::{CoagulationKernel, FragmentationKernel, Holder};
pub use rng::ReplicaRng;
pub use scalar::Scalar;
pub use simulator::{CoupledRun, EventKind, EventRecord, SimConfig, SimOptions, Trajectory};
pub use state::MassSequence;

pub type MassSeq = MassSequence<f64>;
pub type Atom = DislocationAtom<f64>;
pub type Measure = DislocationMeasure<f64>;
pub type CoagKernel = CoagulationKernel<f64>;
pub type FragKernel = FragmentationKernel<f64>;
pub type Config = SimConfig<f64>;

pub type MassSeq32 = MassSequence<f32>;
pub type Measure32 = DislocationMeasure<f32>;
