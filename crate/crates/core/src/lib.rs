//! # mixedflow
//!
//! Calibrate heterogeneous human-driver car-following models from noisy
//! vehicle trajectories, then tune the feedback gains of a connected
//! autonomous vehicle (CAV) so that one CAV keeps as many human-driven
//! vehicles (HDVs) behind it as possible from amplifying stop-and-go waves.
//!
//! The pipeline, in order:
//!
//! 1. [`trajectory_io`]: read NGSIM-style CSVs, assemble gap-free per-vehicle
//!    trajectories and pair leaders with followers.
//! 2. [`smoothing`]: recompute velocities and accelerations by differencing and
//!    apply the symmetric exponential moving-average filter.
//! 3. [`carfollowing`]: optimal-velocity / full-velocity-difference dynamics with
//!    reaction delay, follower and platoon integration.
//! 4. [`calibration`]: fit one parameter set per pair with a real-coded genetic
//!    algorithm on the mixed headway error.
//! 5. [`stability`]: linearize, evaluate frequency responses, count how many
//!    HDVs a CAV stabilizes and search the gain grid.
//! 6. [`cli`]: the `mixedflow` executable.
//!
//! ```
//! use mixedflow::carfollowing::{optimal_velocity, FvdmParams};
//!
//! let theta = FvdmParams { alpha: 2.0, beta: 1.0, b_c: 5.0, b_f: 25.0, v0: 15.0, m: 0.1, tau: 0.0 };
//! assert!(optimal_velocity(&theta, theta.b_c).abs() < 1e-12);
//! ```
//!
//! The `book/` directory next to the workspace holds a longer guide; its code
//! listings are compiled and run as doctests of this crate.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod carfollowing;
pub mod cli;
pub mod smoothing;
pub mod stability;
pub mod trajectory_io;

/// Sampling interval of NGSIM trajectories, seconds.
pub const DT: f64 = 0.1;

pub use calibration::{calibrate_ga, CalibrationResult, GaConfig};
pub use carfollowing::{FvdmParams, LeaderProfile, ParamBounds, PlatoonSpec};
pub use smoothing::{sema_smooth, smooth_trajectory, SmoothingConfig};
pub use stability::{
    optimize_gains, ControllerGains, EquilibriumSpec, GainSearchResult, GridSpec, LinearizedHdv, StabCount,
};
pub use trajectory_io::{Trajectory, TrajectoryRecord, VehiclePair};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/trajectories.md")]
    mod trajectories {}
    #[doc = include_str!("../../../book/src/smoothing.md")]
    mod smoothing {}
    #[doc = include_str!("../../../book/src/car_following.md")]
    mod car_following {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/string_stability.md")]
    mod string_stability {}
    #[doc = include_str!("../../../book/src/gain_design.md")]
    mod gain_design {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
