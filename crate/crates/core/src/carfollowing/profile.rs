use serde::{Deserialize, Serialize};

use super::CarFollowingError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedChange {
    /// Time of the jump, s.
    pub at: f64,
    pub speed: f64,
}

/// Speed program of an uncontrolled lead vehicle.
///
/// Positions are the exact integral of the speed, starting from zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeaderProfile {
    Constant {
        speed: f64,
    },
    /// Speed jumps to `changes[i].speed` at `changes[i].at`; times ascending.
    PiecewiseConstant {
        initial_speed: f64,
        changes: Vec<SpeedChange>,
    },
    /// `v(t) = mean_speed + amplitude · sin(omega · t)`.
    Sinusoidal {
        mean_speed: f64,
        amplitude: f64,
        omega: f64,
    },
}

impl LeaderProfile {
    pub fn validate(&self) -> Result<(), CarFollowingError> {
        let bad = |m: &str| Err(CarFollowingError::InvalidSetting(m.to_string()));
        match self {
            LeaderProfile::Constant { speed } if !(speed.is_finite() && *speed >= 0.0) => {
                bad("constant speed must be finite and nonnegative")
            }
            LeaderProfile::PiecewiseConstant { initial_speed, changes } => {
                if std::iter::once(*initial_speed)
                    .chain(changes.iter().map(|c| c.speed))
                    .any(|v| !(v.is_finite() && v >= 0.0))
                {
                    return bad("piecewise speeds must be finite and nonnegative");
                }
                if changes.windows(2).any(|w| !(w[0].at < w[1].at)) {
                    return bad("speed change times must be strictly increasing");
                }
                Ok(())
            }
            LeaderProfile::Sinusoidal {
                mean_speed,
                amplitude,
                omega,
            } => {
                if !(omega.is_finite() && *omega > 0.0) {
                    bad("sinusoid frequency must be positive")
                } else if !(mean_speed.is_finite() && amplitude.is_finite()) || amplitude.abs() > *mean_speed {
                    bad("sinusoid must keep the speed nonnegative")
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn initial_speed(&self) -> f64 {
        self.speed_at(0.0)
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        match self {
            LeaderProfile::Constant { speed } => *speed,
            LeaderProfile::PiecewiseConstant { initial_speed, changes } => changes
                .iter()
                .take_while(|c| c.at <= t)
                .last()
                .map_or(*initial_speed, |c| c.speed),
            LeaderProfile::Sinusoidal {
                mean_speed,
                amplitude,
                omega,
            } => mean_speed + amplitude * (omega * t).sin(),
        }
    }

    /// Acceleration; zero for the piecewise profile away from (and at) jumps.
    pub fn acceleration_at(&self, t: f64) -> f64 {
        match self {
            LeaderProfile::Sinusoidal { amplitude, omega, .. } => amplitude * omega * (omega * t).cos(),
            _ => 0.0,
        }
    }

    /// Distance travelled since `t = 0`.
    pub fn position_at(&self, t: f64) -> f64 {
        match self {
            LeaderProfile::Constant { speed } => speed * t,
            LeaderProfile::PiecewiseConstant { initial_speed, changes } => {
                let mut x = 0.0;
                let mut last_t = 0.0;
                let mut v = *initial_speed;
                for c in changes {
                    if c.at >= t {
                        break;
                    }
                    let at = c.at.max(0.0);
                    x += v * (at - last_t);
                    last_t = at;
                    v = c.speed;
                }
                x + v * (t - last_t)
            }
            LeaderProfile::Sinusoidal {
                mean_speed,
                amplitude,
                omega,
            } => mean_speed * t + amplitude / omega * (1.0 - (omega * t).cos()),
        }
    }
}
