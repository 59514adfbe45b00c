use super::CalibrationError;
use crate::carfollowing::{follower_headways, FvdmParams};
use crate::trajectory_io::VehiclePair;

/// Fitness assigned to parameter sets whose simulated follower reaches the
/// leader.
pub const COLLISION_PENALTY: f64 = 1e6;

fn check(sim: &[f64], data: &[f64]) -> Result<(), CalibrationError> {
    if sim.len() != data.len() || data.is_empty() {
        return Err(CalibrationError::LengthMismatch {
            sim: sim.len(),
            data: data.len(),
        });
    }
    if let Some(k) = data.iter().position(|&s| !(s > 0.0)) {
        return Err(CalibrationError::NonpositiveHeadway(k));
    }
    Ok(())
}

fn mean(it: impl Iterator<Item = f64>, n: usize) -> f64 {
    it.sum::<f64>() / n as f64
}

/// `sqrt(⟨(s_sim − s_data)²⟩ / ⟨s_data⟩²)`, weighted towards large headways.
pub fn error_abs(sim: &[f64], data: &[f64]) -> Result<f64, CalibrationError> {
    check(sim, data)?;
    let n = data.len();
    let num = mean(sim.iter().zip(data).map(|(s, d)| (s - d).powi(2)), n);
    let den = mean(data.iter().copied(), n);
    Ok((num / (den * den)).sqrt())
}

/// `sqrt(⟨((s_sim − s_data)/s_data)²⟩)`, weighted towards small headways.
pub fn error_rel(sim: &[f64], data: &[f64]) -> Result<f64, CalibrationError> {
    check(sim, data)?;
    let n = data.len();
    Ok(mean(sim.iter().zip(data).map(|(s, d)| ((s - d) / d).powi(2)), n).sqrt())
}

/// `sqrt(⟨(s_sim − s_data)²/|s_data|⟩ / ⟨|s_data|⟩)`, between the two.
pub fn error_mixed(sim: &[f64], data: &[f64]) -> Result<f64, CalibrationError> {
    check(sim, data)?;
    let n = data.len();
    let num = mean(sim.iter().zip(data).map(|(s, d)| (s - d).powi(2) / d.abs()), n);
    let den = mean(data.iter().map(|d| d.abs()), n);
    Ok((num / den).sqrt())
}

/// A pair prepared for repeated fitness evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Objective<'a> {
    pair: &'a VehiclePair,
    data: Vec<f64>,
}

impl<'a> Objective<'a> {
    pub fn new(pair: &'a VehiclePair) -> Result<Self, CalibrationError> {
        let n = pair.leader.len().min(pair.follower.len());
        if n < 2 {
            return Err(CalibrationError::PairTooShort(n));
        }
        let data = pair.headways();
        check(&data, &data)?;
        Ok(Objective { pair, data })
    }

    pub fn simulate(&self, theta: &FvdmParams) -> Option<Vec<f64>> {
        let f = &self.pair.follower;
        follower_headways(
            theta,
            &self.pair.leader.positions,
            &self.pair.leader.velocities,
            f.positions[0],
            f.velocities[0],
        )
    }

    pub fn fitness(&self, theta: &FvdmParams) -> f64 {
        match self.simulate(theta) {
            Some(sim) => match error_mixed(&sim, &self.data) {
                Ok(e) if e.is_finite() => e,
                _ => COLLISION_PENALTY,
            },
            None => COLLISION_PENALTY,
        }
    }

    /// `(mixed, abs, rel)`, all equal to the penalty on collision.
    pub fn all_errors(&self, theta: &FvdmParams) -> (f64, f64, f64) {
        let Some(sim) = self.simulate(theta) else {
            return (COLLISION_PENALTY, COLLISION_PENALTY, COLLISION_PENALTY);
        };
        let finite = |r: Result<f64, CalibrationError>| r.ok().filter(|e| e.is_finite()).unwrap_or(COLLISION_PENALTY);
        (
            finite(error_mixed(&sim, &self.data)),
            finite(error_abs(&sim, &self.data)),
            finite(error_rel(&sim, &self.data)),
        )
    }
}

/// Mixed headway error of `theta` on a pair: the follower is simulated from
/// its measured initial state behind the measured leader.
/// Returns [`COLLISION_PENALTY`] if the simulated follower reaches the leader.
pub fn evaluate_fitness(theta: &FvdmParams, pair: &VehiclePair) -> Result<f64, CalibrationError> {
    Ok(Objective::new(pair)?.fitness(theta))
}
