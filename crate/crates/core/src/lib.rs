//! Variable-time-gap ACC platoon toolkit: H∞ synthesis, controllers, a
//! fixed-step platoon simulator, data-driven L2-gain estimation, safety and
//! energy metrics, and differential-evolution calibration.
//!
//! The crate is `no_std` (with `alloc`); file formats, the CLI and
//! parallel execution live in the `platoon` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod fmath;

pub mod calibration;
pub mod controllers;
pub mod de;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod sim;
pub mod stability;
pub mod synthesis;

pub use model::{
    ActuationParams, CtgParams, GapState, IdmParams, QsmcParams, Trajectory, VehicleState, VtgParams,
};
