//! Reduced-order frequency and voltage dynamics for power systems in which
//! every source is a droop-controlled grid-forming inverter (GFM).
//!
//! The crate is organized bottom-up:
//!
//! * [`case`] holds the validated network description and the GFM conversion
//!   rules (aggregation, capacity threshold, negative-load treatment of the rest).
//! * [`sparse`] is a block Gaussian elimination engine with minimum-degree
//!   ordering. It backs both the Kron reduction and the Newton-Raphson solves.
//! * [`netmodel`] builds the DC susceptance Laplacian and Kron-reduces it onto
//!   the generator buses.
//! * [`powerflow`] solves the AC power flow in classic (slack/PV/PQ) and
//!   Vθ/PQ form and estimates the post-disturbance reactive injections.
//! * [`life`] and [`live`] assemble the frequency and voltage state-space models.
//! * [`sim`] discretizes them with the matrix exponential and steps them.
//! * [`metrics`] extracts nadir, RoCoF, hertz-seconds and settling figures.
//!
//! Everything here is `no_std` + `alloc`. The default `std` feature only turns
//! on the optimized dense matrix product kernels in `nalgebra`.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(a > b)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod case;
pub mod error;
pub mod life;
pub mod live;
mod math;
pub mod metrics;
pub mod netmodel;
pub mod powerflow;
pub mod sim;
pub mod sparse;
#[cfg(feature = "synth")]
pub mod synth;

pub use case::{BusId, BusKind, BusRecord, BranchRecord, GenRecord, GfmParams, NetworkCase};
pub use error::{Error, Result};
pub use life::LifeSystem;
pub use live::LiveSystem;
pub use netmodel::{ReducedNetwork, SusceptanceModel};
pub use powerflow::{AcSolver, Disturbance, PowerFlowOptions, PowerFlowSolution};
pub use sim::{DiscreteSystem, Trajectory, TrajectoryKind};

/// Dense matrix type used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense column vector type used throughout the crate.
pub type Vector = nalgebra::DVector<f64>;
