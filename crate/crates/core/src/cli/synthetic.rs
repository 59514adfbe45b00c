use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::CliError;
use crate::carfollowing::{simulate_platoon, FvdmParams, LeaderProfile, PlatoonSpec, PlatoonVehicle};
use crate::smoothing::differentiate;
use crate::trajectory_io::DEFAULT_VEHICLE_LENGTH;
use crate::DT;

const FEET_PER_METER: f64 = 1.0 / 0.3048;
const LANE: i64 = 2;

/// Sinusoidal leader followed by a few string-unstable drivers, recorded with
/// uniform position noise.
#[derive(Debug, Clone, Serialize)]
pub(crate) struct Scenario {
    pub v_star: f64,
    pub profile: LeaderProfile,
    pub drivers: Vec<FvdmParams>,
    pub frames: usize,
    pub noise_m: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        let d = |alpha, beta, b_c, b_f, v0, m, tau| FvdmParams {
            alpha,
            beta,
            b_c,
            b_f,
            v0,
            m,
            tau,
        };
        Scenario {
            v_star: 10.0,
            profile: LeaderProfile::Sinusoidal {
                mean_speed: 10.0,
                amplitude: 1.0,
                omega: 0.4,
            },
            drivers: vec![
                d(1.2, 1.0, 2.0, 15.0, 8.0, 0.3, 0.2),
                d(1.5, 1.1, 2.5, 17.0, 8.5, 0.28, 0.0),
                d(1.1, 1.0, 1.5, 14.0, 7.5, 0.32, 0.3),
                d(1.3, 1.2, 2.0, 16.0, 8.0, 0.3, 0.1),
            ],
            frames: 1000,
            noise_m: 0.2,
        }
    }
}

/// NGSIM-style CSV (feet) of the scenario; the noise is drawn from `seed`.
pub(crate) fn ngsim_csv(sc: &Scenario, seed: u64) -> Result<String, CliError> {
    let spec = PlatoonSpec {
        lead_profile: sc.profile.clone(),
        vehicles: sc
            .drivers
            .iter()
            .map(|&params| PlatoonVehicle::Hdv { params })
            .collect(),
        initial_speed: sc.v_star,
    };
    let trajs = simulate_platoon(&spec, (sc.frames - 1) as f64 * DT, DT)?;
    let offset = 10.0 - trajs.last().map_or(0.0, |t| t.positions[0]);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("Vehicle_ID,Frame_ID,Local_Y,v_Vel,v_Acc,Lane_ID,Preceding,v_length\n");
    for (i, t) in trajs.iter().enumerate() {
        let x: Vec<f64> = t
            .positions
            .iter()
            .map(|p| p + offset + rng.random_range(-sc.noise_m..=sc.noise_m))
            .collect();
        let v = differentiate(&x, DT)?;
        let a = differentiate(&v, DT)?;
        for k in 0..x.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                i + 1,
                k + 1,
                x[k] * FEET_PER_METER,
                v[k] * FEET_PER_METER,
                a[k] * FEET_PER_METER,
                LANE,
                i,
                DEFAULT_VEHICLE_LENGTH * FEET_PER_METER
            ));
        }
    }
    Ok(out)
}
