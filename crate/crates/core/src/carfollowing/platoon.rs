use serde::{Deserialize, Serialize};

use super::follower::ballistic_step;
use super::{delay_steps, fvdm_acceleration, CarFollowingError, FvdmParams, LeaderProfile};
use crate::stability::{ControllerGains, LinearizedHdv};
use crate::trajectory_io::{Trajectory, DEFAULT_VEHICLE_LENGTH};

/// A vehicle behind the uncontrolled leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlatoonVehicle {
    /// Human driver with delayed FVDM dynamics.
    Hdv { params: FvdmParams },
    /// Connected automated vehicle, delay-free linear law around the desired
    /// headway `λ2·v + λ3`.
    Cav { gains: ControllerGains, lambda3: f64 },
    /// Human driver replaced by its linearization (delayed linear law).
    LinearHdv { model: LinearizedHdv, lambda3: f64 },
}

/// Lead vehicle profile plus the ordered followers. Every follower starts at
/// its own equilibrium headway for `initial_speed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatoonSpec {
    pub lead_profile: LeaderProfile,
    pub vehicles: Vec<PlatoonVehicle>,
    pub initial_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    /// Platoon index of the colliding follower (the leader is 0).
    pub vehicle: usize,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonRun {
    /// Leader first. Truncated at the collision frame if there was one.
    pub trajectories: Vec<Trajectory>,
    pub collision: Option<Collision>,
}

impl PlatoonVehicle {
    fn equilibrium_headway(&self, v_star: f64, index: usize) -> Result<f64, CarFollowingError> {
        let h = match self {
            PlatoonVehicle::Hdv { params } => params.equilibrium_headway(v_star),
            PlatoonVehicle::Cav { gains, lambda3 } => Some(gains.lambda2 * v_star + lambda3),
            PlatoonVehicle::LinearHdv { model, lambda3 } => Some(model.lambda2 * v_star + lambda3),
        };
        h.filter(|h| *h > 0.0).ok_or(CarFollowingError::NoEquilibrium {
            vehicle: index,
            speed: v_star,
        })
    }

    fn delay(&self, dt: f64) -> usize {
        match self {
            PlatoonVehicle::Hdv { params } => delay_steps(params.tau, dt),
            PlatoonVehicle::Cav { .. } => 0,
            PlatoonVehicle::LinearHdv { model, .. } => delay_steps(model.tau, dt),
        }
    }

    /// Acceleration from the state the driver sees.
    fn acceleration(&self, headway: f64, v: f64, dv: f64, v_star: f64) -> f64 {
        let linear =
            |k1: f64, k2: f64, k3: f64, l2: f64, l3: f64| k1 * (headway - l2 * v - l3) - k2 * (v - v_star) + k3 * dv;
        match self {
            PlatoonVehicle::Hdv { params } => fvdm_acceleration(params, headway, v, dv),
            PlatoonVehicle::Cav { gains: g, lambda3 } => linear(g.k1, g.k2, g.k3, g.lambda2, *lambda3),
            PlatoonVehicle::LinearHdv { model: m, lambda3 } => linear(m.k1, m.k2, m.k3, m.lambda2, *lambda3),
        }
    }
}

/// Integrate the whole platoon, stopping at the first collision.
pub fn simulate_platoon_run(spec: &PlatoonSpec, duration: f64, dt: f64) -> Result<PlatoonRun, CarFollowingError> {
    if spec.vehicles.is_empty() {
        return Err(CarFollowingError::EmptyPlatoon);
    }
    if !(dt > 0.0 && duration > 0.0 && dt.is_finite() && duration.is_finite()) {
        return Err(CarFollowingError::InvalidSetting(
            "duration and dt must be positive".into(),
        ));
    }
    spec.lead_profile.validate()?;
    let v_star = spec.initial_speed;
    let steps = (duration / dt).round() as usize;
    let n = steps + 1;
    let m = spec.vehicles.len() + 1;

    let mut x: Vec<Vec<f64>> = vec![Vec::with_capacity(n); m];
    let mut v: Vec<Vec<f64>> = vec![Vec::with_capacity(n); m];
    let mut a: Vec<Vec<f64>> = vec![Vec::with_capacity(n); m];
    let delays: Vec<usize> = spec.vehicles.iter().map(|veh| veh.delay(dt)).collect();

    x[0].push(0.0);
    v[0].push(spec.lead_profile.speed_at(0.0));
    for (i, veh) in spec.vehicles.iter().enumerate() {
        let h = veh.equilibrium_headway(v_star, i + 1)?;
        let prev = x[i][0];
        x[i + 1].push(prev - h);
        v[i + 1].push(v_star);
    }

    let mut collision = None;
    'time: for k in 0..n {
        let t = k as f64 * dt;
        a[0].push(spec.lead_profile.acceleration_at(t));
        for (i, veh) in spec.vehicles.iter().enumerate() {
            let kd = k.saturating_sub(delays[i]);
            let (me, ahead) = (i + 1, i);
            let acc = veh.acceleration(x[ahead][kd] - x[me][kd], v[me][kd], v[ahead][kd] - v[me][kd], v_star);
            a[me].push(acc);
        }
        if k + 1 == n {
            break;
        }
        let tn = (k + 1) as f64 * dt;
        x[0].push(spec.lead_profile.position_at(tn));
        v[0].push(spec.lead_profile.speed_at(tn));
        for me in 1..m {
            let (xn, vn) = ballistic_step(x[me][k], v[me][k], a[me][k], dt);
            x[me].push(xn);
            v[me].push(vn);
        }
        for me in 1..m {
            let gap = x[me - 1][k + 1] - x[me][k + 1];
            if !(gap > 0.0) {
                collision = Some(Collision {
                    vehicle: me,
                    frame: k + 1,
                });
                // keep the arrays rectangular for export
                for acc in a.iter_mut() {
                    acc.push(f64::NAN);
                }
                break 'time;
            }
        }
    }

    let trajectories = (0..m)
        .map(|i| {
            let len = x[i].len();
            Trajectory {
                vehicle_id: i as u64 + 1,
                start_frame: 0,
                positions: std::mem::take(&mut x[i]),
                velocities: std::mem::take(&mut v[i]),
                accelerations: std::mem::take(&mut a[i]),
                length: DEFAULT_VEHICLE_LENGTH,
                lane_ids: vec![1; len],
                preceding_ids: vec![i as u64; len],
            }
        })
        .collect();
    Ok(PlatoonRun {
        trajectories,
        collision,
    })
}

/// Like [`simulate_platoon_run`] but a collision is an error.
pub fn simulate_platoon(spec: &PlatoonSpec, duration: f64, dt: f64) -> Result<Vec<Trajectory>, CarFollowingError> {
    let run = simulate_platoon_run(spec, duration, dt)?;
    match run.collision {
        Some(c) => Err(CarFollowingError::CollisionDetected {
            vehicle: c.vehicle,
            frame: c.frame,
        }),
        None => Ok(run.trajectories),
    }
}
