use super::{Trajectory, TrajectoryError, VehiclePair};
use crate::carfollowing::{simulate_follower, FvdmParams, LeaderProfile, ParamBounds};
use crate::DT;

pub const DEFAULT_VEHICLE_LENGTH: f64 = 4.5;

/// Noise-free leader/follower pair with a known driver.
///
/// The leader (id 1) follows `leader_profile` from position `initial_headway`;
/// the follower (id 2) starts at 0 with the leader's initial speed and is
/// integrated with [`simulate_follower`]. The pair spans
/// `duration / dt + 1` frames.
pub fn generate_synthetic_pair(
    theta: &FvdmParams,
    leader_profile: &LeaderProfile,
    duration: f64,
    initial_headway: f64,
) -> Result<VehiclePair, TrajectoryError> {
    if !ParamBounds::default().contains(theta) {
        return Err(TrajectoryError::ParamsOutOfBounds(format!("{theta:?}")));
    }
    leader_profile.validate()?;
    let steps = duration / DT;
    if !(steps >= 1.0 && (steps - steps.round()).abs() < 1e-9) {
        return Err(TrajectoryError::InvalidDuration(duration));
    }
    if !(initial_headway > theta.b_c) {
        return Err(TrajectoryError::InfeasibleInitialState {
            headway: initial_headway,
            b_c: theta.b_c,
        });
    }

    let n = steps.round() as usize + 1;
    let time = |k: usize| k as f64 * DT;
    let leader = Trajectory {
        vehicle_id: 1,
        start_frame: 0,
        positions: (0..n)
            .map(|k| initial_headway + leader_profile.position_at(time(k)))
            .collect(),
        velocities: (0..n).map(|k| leader_profile.speed_at(time(k))).collect(),
        accelerations: (0..n).map(|k| leader_profile.acceleration_at(time(k))).collect(),
        length: DEFAULT_VEHICLE_LENGTH,
        lane_ids: vec![1; n],
        preceding_ids: vec![0; n],
    };

    let mut follower = simulate_follower(theta, &leader, 0.0, leader.velocities[0])?;
    follower.vehicle_id = 2;
    follower.length = DEFAULT_VEHICLE_LENGTH;

    let pair = VehiclePair {
        leader,
        follower,
        overlap_start: 0,
        overlap_len: n,
    };
    if let Some(k) = pair.headways().iter().position(|&h| !(h > 0.0)) {
        return Err(TrajectoryError::SyntheticCollision(k as i64));
    }
    Ok(pair)
}
