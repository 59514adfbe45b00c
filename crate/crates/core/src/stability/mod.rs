//! String stability of mixed platoons and CAV gain design.
//!
//! Around a uniform flow at speed `v*`, a human driver linearizes to
//!
//! ```text
//! ẍ̃ᵢ(t) = k1ᵢ (x̃ᵢ₋₁ − x̃ᵢ − λ2ᵢ ẋ̃ᵢ)(t−τᵢ) − k2ᵢ ẋ̃ᵢ(t−τᵢ) + k3ᵢ (ẋ̃ᵢ₋₁ − ẋ̃ᵢ)(t−τᵢ)
//! ```
//!
//! with `k1 = α·V'(Δx*)`, `k2 = α`, `k3 = β`, giving the position transfer
//! function
//!
//! ```text
//! Tᵢ(s) = (k1 + s·k3)·e^{−sτ} / (s² + s·(k2 + k3 + k1·λ2)·e^{−sτ} + k1·e^{−sτ})
//! ```
//!
//! The CAV runs the same law without delay, `T_A(s) = (k1 + s·k3) / (s² + s·K + k1)`.
//! A disturbance at frequency ω is amplified by a vehicle when `|T(jω)| > 1`;
//! a CAV stabilizes `n` followers at ω when `|T_A| · ∏ᵢ≤ₙ |Tᵢ| ≤ 1`.

mod counts;
mod optimize;
mod transfer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use counts::{n_safe, n_stable, StabCount};
pub use optimize::{optimize_gains, AxisSpec, GainGridSpec, GainSearchConfig, GainSearchResult, HeadwayBounds};
pub use transfer::{
    cav_gain_sq, cav_string_stable, cav_transfer, critical_frequency, hdv_gain_sq, hdv_gain_sq_closed_form,
    hdv_transfer, linearize_hdv, numeric_critical_frequency, platoon_critical_frequency, platoon_critical_frequency_on,
    vehicle_critical_frequency,
};

#[derive(Debug, Error, PartialEq)]
pub enum StabilityError {
    #[error("equilibrium headway λ2·v* + λ3 = {0} m is not positive")]
    NonpositiveEquilibriumHeadway(f64),
    #[error("no equilibrium headway: {0} m/s exceeds the driver's maximum speed")]
    UnreachableSpeed(f64),
    #[error("platoon has no human-driven vehicles")]
    EmptyPlatoon,
    #[error("controller gains {0:?} are not string stable")]
    CavStringUnstable(ControllerGains),
    #[error("no gain combination on the grid satisfies the stability constraint")]
    NoFeasibleGains,
    #[error("headway bounds must satisfy min < Δx* = {desired} < max")]
    InfeasibleHeadwayBounds { desired: f64 },
    #[error("invalid setting: {0}")]
    InvalidSetting(String),
}

/// Uniform-flow speed and the constant-time-headway rule `Δx* = λ2·v* + λ3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSpec {
    pub v_star: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl EquilibriumSpec {
    pub fn desired_headway(&self) -> f64 {
        self.lambda2 * self.v_star + self.lambda3
    }

    /// The spec whose desired headway is the driver's own equilibrium headway
    /// at `v_star`, for a given slope `lambda2`.
    pub fn consistent_with(
        theta: &crate::carfollowing::FvdmParams,
        v_star: f64,
        lambda2: f64,
    ) -> Result<EquilibriumSpec, StabilityError> {
        let h = theta
            .equilibrium_headway(v_star)
            .ok_or(StabilityError::UnreachableSpeed(v_star))?;
        Ok(EquilibriumSpec {
            v_star,
            lambda2,
            lambda3: h - lambda2 * v_star,
        })
    }
}

/// Linearized human driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizedHdv {
    /// `α·V'(Δx*)`, 1/s².
    pub k1: f64,
    /// `α`, 1/s.
    pub k2: f64,
    /// `β`, 1/s.
    pub k3: f64,
    pub lambda2: f64,
    pub tau: f64,
}

/// CAV feedback gains and desired-headway slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub lambda2: f64,
}

/// Log-spaced frequency grid, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            omega_min: 1e-3,
            omega_max: 1e2,
            points: 4000,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), StabilityError> {
        if self.omega_min > 0.0 && self.omega_max > self.omega_min && self.points >= 2 {
            Ok(())
        } else {
            Err(StabilityError::InvalidSetting(format!("bad frequency grid {self:?}")))
        }
    }

    /// `points` frequencies from `omega_min` to `omega_max`, both included.
    pub fn frequencies(&self) -> Vec<f64> {
        let ratio = (self.omega_max / self.omega_min).ln();
        let last = (self.points - 1) as f64;
        (0..self.points)
            .map(|i| self.omega_min * (ratio * i as f64 / last).exp())
            .collect()
    }

    /// `points` frequencies log-spaced on `[omega_min, min(upper, omega_max))`,
    /// upper end excluded. Empty when that interval is.
    pub fn scan_below(&self, upper: f64) -> Vec<f64> {
        let hi = upper.min(self.omega_max);
        if !(hi > self.omega_min) {
            return Vec::new();
        }
        let ratio = (hi / self.omega_min).ln();
        (0..self.points)
            .map(|i| self.omega_min * (ratio * i as f64 / self.points as f64).exp())
            .collect()
    }
}
