//! Optimal-velocity and full-velocity-difference car-following dynamics.
//!
//! The optimal velocity function is
//!
//! ```text
//! V(Δx) = V0 · [tanh m(Δx − b_f) − tanh m(b_c − b_f)]
//! ```
//!
//! and a human driver with reaction delay τ accelerates as
//!
//! ```text
//! a(t) = α · (V(Δx(t−τ)) − v(t−τ)) + β · Δv(t−τ)
//! ```
//!
//! where `Δx` is the headway to the leader and `Δv` the leader's speed minus
//! the driver's own. With `β = 0` this is the plain optimal velocity model.

mod follower;
mod platoon;
mod profile;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use follower::follower_headways;
pub use follower::simulate_follower;
pub use platoon::{simulate_platoon, simulate_platoon_run, Collision, PlatoonRun, PlatoonSpec, PlatoonVehicle};
pub use profile::{LeaderProfile, SpeedChange};

#[derive(Debug, Error, PartialEq)]
pub enum CarFollowingError {
    #[error("leader trajectory needs at least 2 samples, got {0}")]
    LeaderTooShort(usize),
    #[error("vehicle {vehicle} collided with its leader at frame {frame}")]
    CollisionDetected { vehicle: usize, frame: usize },
    #[error("platoon has no vehicles")]
    EmptyPlatoon,
    #[error("vehicle {vehicle} has no equilibrium headway at {speed} m/s")]
    NoEquilibrium { vehicle: usize, speed: f64 },
    #[error("invalid simulation setting: {0}")]
    InvalidSetting(String),
}

/// One driver's parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FvdmParams {
    /// Sensitivity to the optimal-velocity gap, 1/s.
    pub alpha: f64,
    /// Sensitivity to the speed difference, 1/s.
    pub beta: f64,
    /// Headway at which the optimal velocity is zero, m.
    pub b_c: f64,
    /// Inflection headway of the optimal velocity function, m.
    pub b_f: f64,
    /// Velocity scale, m/s.
    #[serde(rename = "V0")]
    pub v0: f64,
    /// Inverse distance scale, 1/m.
    pub m: f64,
    /// Perception-reaction delay, s.
    pub tau: f64,
}

impl FvdmParams {
    pub const GENES: usize = 7;

    /// `V0 · [1 − tanh m(b_c − b_f)]`, the limit of `V` for large headways.
    pub fn v_max(&self) -> f64 {
        self.v0 * (1.0 - (self.m * (self.b_c - self.b_f)).tanh())
    }

    /// Headway `Δx` with `V(Δx) = speed`, if the speed is reachable.
    pub fn equilibrium_headway(&self, speed: f64) -> Option<f64> {
        let y = speed / self.v0 + (self.m * (self.b_c - self.b_f)).tanh();
        (y.abs() < 1.0 && speed >= 0.0).then(|| self.b_f + y.atanh() / self.m)
    }

    pub fn to_genes(&self) -> [f64; Self::GENES] {
        [self.alpha, self.beta, self.b_c, self.b_f, self.v0, self.m, self.tau]
    }

    pub fn from_genes(g: &[f64; Self::GENES]) -> Self {
        FvdmParams {
            alpha: g[0],
            beta: g[1],
            b_c: g[2],
            b_f: g[3],
            v0: g[4],
            m: g[5],
            tau: g[6],
        }
    }
}

/// Closed box of admissible parameters, `[lo, hi]` per parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamBounds {
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub b_c: [f64; 2],
    pub b_f: [f64; 2],
    #[serde(rename = "V0")]
    pub v0: [f64; 2],
    pub m: [f64; 2],
    pub tau: [f64; 2],
}

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds {
            alpha: [1.0, 10.0],
            beta: [1.0, 10.0],
            b_c: [0.1, 8.0],
            b_f: [0.1, 100.0],
            v0: [1.0, 70.0],
            m: [1e-5, 10.0],
            tau: [0.0, 3.0],
        }
    }
}

impl ParamBounds {
    pub fn as_array(&self) -> [[f64; 2]; FvdmParams::GENES] {
        [self.alpha, self.beta, self.b_c, self.b_f, self.v0, self.m, self.tau]
    }

    /// Same box with τ pinned to zero.
    pub fn with_tau_pinned(mut self) -> Self {
        self.tau = [0.0, 0.0];
        self
    }

    pub fn contains(&self, theta: &FvdmParams) -> bool {
        self.as_array()
            .iter()
            .zip(theta.to_genes())
            .all(|([lo, hi], v)| v >= *lo && v <= *hi)
    }

    /// Name of the first parameter with `lo > hi` or a non-finite bound.
    pub fn invalid_parameter(&self) -> Option<&'static str> {
        const NAMES: [&str; 7] = ["alpha", "beta", "b_c", "b_f", "V0", "m", "tau"];
        self.as_array()
            .iter()
            .zip(NAMES)
            .find(|([lo, hi], _)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
            .map(|(_, n)| n)
    }
}

/// `V(Δx)`. Defined for every real headway; callers enforce physical ranges.
pub fn optimal_velocity(theta: &FvdmParams, headway: f64) -> f64 {
    theta.v0 * ((theta.m * (headway - theta.b_f)).tanh() - (theta.m * (theta.b_c - theta.b_f)).tanh())
}

/// `V'(Δx) = V0 · m · sech²(m(Δx − b_f))`.
pub fn ov_slope(theta: &FvdmParams, headway: f64) -> f64 {
    let c = (theta.m * (headway - theta.b_f)).cosh();
    if c.is_infinite() {
        return 0.0;
    }
    theta.v0 * theta.m / (c * c)
}

/// FVDM acceleration from the (delayed) state seen by the driver.
/// `delayed_speed_diff` is leader speed minus own speed.
pub fn fvdm_acceleration(
    theta: &FvdmParams,
    delayed_headway: f64,
    delayed_own_speed: f64,
    delayed_speed_diff: f64,
) -> f64 {
    theta.alpha * (optimal_velocity(theta, delayed_headway) - delayed_own_speed) + theta.beta * delayed_speed_diff
}

/// Whole-step delay used by the integrators: `round(τ/dt)`.
pub fn delay_steps(tau: f64, dt: f64) -> usize {
    if tau <= 0.0 {
        0
    } else {
        (tau / dt).round() as usize
    }
}
