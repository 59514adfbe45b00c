use super::{delay_steps, fvdm_acceleration, CarFollowingError, FvdmParams};
use crate::trajectory_io::Trajectory;
use crate::DT;

/// One ballistic step. Speeds never go negative: a vehicle that would reverse
/// stops after its braking distance `v²/(2|a|)` instead.
#[inline]
pub(crate) fn ballistic_step(x: f64, v: f64, a: f64, dt: f64) -> (f64, f64) {
    let v_next = v + a * dt;
    if v_next >= 0.0 {
        (x + v * dt + 0.5 * a * dt * dt, v_next)
    } else {
        (x + v * v / (2.0 * -a), 0.0)
    }
}

pub(crate) struct FollowerRun {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    /// First index with headway ≤ 0 (or a non-finite state).
    pub contact: Option<usize>,
}

/// Integrate a delayed-FVDM follower behind a prescribed leader. For
/// `k < round(τ/dt)` the driver sees the initial state of both vehicles.
pub(crate) fn integrate_follower(
    theta: &FvdmParams,
    leader_x: &[f64],
    leader_v: &[f64],
    x0: f64,
    v0: f64,
    dt: f64,
    stop_on_contact: bool,
) -> FollowerRun {
    let n = leader_x.len();
    let d = delay_steps(theta.tau, dt);
    let mut run = FollowerRun {
        x: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        a: Vec::with_capacity(n),
        contact: None,
    };
    run.x.push(x0);
    run.v.push(v0.max(0.0));

    for k in 0..n {
        let (x, v) = (run.x[k], run.v[k]);
        if run.contact.is_none() && !(leader_x[k] - x > 0.0 && x.is_finite() && v.is_finite()) {
            run.contact = Some(k);
            if stop_on_contact {
                break;
            }
        }
        let kd = k.saturating_sub(d);
        let a = fvdm_acceleration(theta, leader_x[kd] - run.x[kd], run.v[kd], leader_v[kd] - run.v[kd]);
        run.a.push(a);
        if k + 1 < n {
            let (xn, vn) = ballistic_step(x, v, a, dt);
            run.x.push(xn);
            run.v.push(vn);
        }
    }
    run
}

/// Simulated headways `x_leader − x_sim` for a follower started at the given
/// state, or `None` if the follower reaches the leader.
pub(crate) fn follower_headways(
    theta: &FvdmParams,
    leader_x: &[f64],
    leader_v: &[f64],
    x0: f64,
    v0: f64,
) -> Option<Vec<f64>> {
    let run = integrate_follower(theta, leader_x, leader_v, x0, v0, DT, true);
    if run.contact.is_some() {
        return None;
    }
    Some(leader_x.iter().zip(&run.x).map(|(l, f)| l - f).collect())
}

/// Follower trajectory behind a measured (or synthetic) leader, sampled on the
/// leader's frames with the fixed 0.1 s step.
///
/// The returned trajectory has vehicle id 0, the leader's lanes and length, and
/// the leader's id as its preceding id.
pub fn simulate_follower(
    theta: &FvdmParams,
    leader: &Trajectory,
    init_position: f64,
    init_speed: f64,
) -> Result<Trajectory, CarFollowingError> {
    if leader.len() < 2 {
        return Err(CarFollowingError::LeaderTooShort(leader.len()));
    }
    let run = integrate_follower(
        theta,
        &leader.positions,
        &leader.velocities,
        init_position,
        init_speed,
        DT,
        false,
    );
    Ok(Trajectory {
        vehicle_id: 0,
        start_frame: leader.start_frame,
        positions: run.x,
        velocities: run.v,
        accelerations: run.a,
        length: leader.length,
        lane_ids: leader.lane_ids.clone(),
        preceding_ids: vec![leader.vehicle_id; leader.len()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carfollowing::{optimal_velocity, LeaderProfile, SpeedChange};

    fn theta() -> FvdmParams {
        FvdmParams {
            alpha: 2.0,
            beta: 1.0,
            b_c: 4.0,
            b_f: 20.0,
            v0: 12.0,
            m: 0.12,
            tau: 0.0,
        }
    }

    fn leader_from(profile: &LeaderProfile, n: usize, x0: f64) -> Trajectory {
        Trajectory {
            vehicle_id: 1,
            start_frame: 0,
            positions: (0..n).map(|k| x0 + profile.position_at(k as f64 * DT)).collect(),
            velocities: (0..n).map(|k| profile.speed_at(k as f64 * DT)).collect(),
            accelerations: (0..n).map(|k| profile.acceleration_at(k as f64 * DT)).collect(),
            length: 4.5,
            lane_ids: vec![1; n],
            preceding_ids: vec![0; n],
        }
    }

    /// Straightforward delay-free reference: explicit loop, no history buffer.
    fn reference_no_delay(th: &FvdmParams, leader: &Trajectory, x0: f64, v0: f64) -> Vec<f64> {
        let mut x = x0;
        let mut v = v0;
        let mut xs = vec![x];
        for k in 0..leader.len() - 1 {
            let a =
                th.alpha * (optimal_velocity(th, leader.positions[k] - x) - v) + th.beta * (leader.velocities[k] - v);
            let vn = v + a * DT;
            if vn >= 0.0 {
                x += v * DT + 0.5 * a * DT * DT;
                v = vn;
            } else {
                x += v * v / (-2.0 * a);
                v = 0.0;
            }
            xs.push(x);
        }
        xs
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let th = theta();
        let v_star = 10.0;
        let h = th.equilibrium_headway(v_star).unwrap();
        let leader = leader_from(&LeaderProfile::Constant { speed: v_star }, 1001, h);
        let f = simulate_follower(&th, &leader, 0.0, v_star).unwrap();
        for k in 0..leader.len() {
            assert!((leader.positions[k] - f.positions[k] - h).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_delay_matches_reference() {
        let th = theta();
        let leader = leader_from(
            &LeaderProfile::Sinusoidal {
                mean_speed: 10.0,
                amplitude: 2.0,
                omega: 0.4,
            },
            600,
            30.0,
        );
        let f = simulate_follower(&th, &leader, 0.0, 9.0).unwrap();
        let reference = reference_no_delay(&th, &leader, 0.0, 9.0);
        assert_eq!(f.positions.len(), reference.len());
        for (a, b) in f.positions.iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn step_converges_to_new_equilibrium() {
        let th = theta();
        let v_star = 8.0;
        let h0 = th.equilibrium_headway(v_star).unwrap();
        let profile = LeaderProfile::PiecewiseConstant {
            initial_speed: v_star,
            changes: vec![SpeedChange {
                at: 10.0,
                speed: v_star + 1.0,
            }],
        };
        let leader = leader_from(&profile, 3000, h0);
        let f = simulate_follower(&th, &leader, 0.0, v_star).unwrap();

        // oracle: solve V(Δx) = v*+1 by bisection
        let (mut lo, mut hi) = (th.b_c, 500.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if optimal_velocity(&th, mid) < v_star + 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let n = leader.len() - 1;
        assert!((f.velocities[n] - (v_star + 1.0)).abs() < 1e-6);
        assert!((leader.positions[n] - f.positions[n] - lo).abs() < 1e-5);
    }

    #[test]
    fn delayed_driver_starts_from_frozen_state() {
        let mut th = theta();
        th.tau = 0.5;
        let leader = leader_from(&LeaderProfile::Constant { speed: 10.0 }, 50, 30.0);
        let run = integrate_follower(&th, &leader.positions, &leader.velocities, 0.0, 6.0, DT, false);
        // first five accelerations all see the initial state
        for k in 1..5 {
            assert_eq!(run.a[k], run.a[0]);
        }
        assert_ne!(run.a[6], run.a[0]);
    }

    #[test]
    fn speed_never_negative() {
        let th = theta();
        // Leader stopped just ahead: hard braking.
        let leader = leader_from(&LeaderProfile::Constant { speed: 0.0 }, 200, 6.0);
        let f = simulate_follower(&th, &leader, 0.0, 15.0).unwrap();
        assert!(f.velocities.iter().all(|&v| v >= 0.0));
        assert!(f.positions.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn short_leader_is_rejected() {
        let leader = leader_from(&LeaderProfile::Constant { speed: 1.0 }, 1, 10.0);
        assert_eq!(
            simulate_follower(&theta(), &leader, 0.0, 1.0),
            Err(CarFollowingError::LeaderTooShort(1))
        );
    }
}
