//! Trajectory records, per-vehicle time series and leader/follower pairs.
//!
//! Raw NGSIM rows become [`TrajectoryRecord`]s ([`parse_ngsim_csv`]), which are
//! grouped into gap-free [`Trajectory`] runs ([`build_trajectories`]) and then
//! matched into [`VehiclePair`]s ([`pair_leader_follower`]).

mod ngsim;
mod pairing;
mod synthetic;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::DT;

pub use ngsim::{
    parse_canonical_csv, parse_ngsim_csv, write_canonical_csv, write_trajectories_csv, Units, CANONICAL_HEADER,
};
pub use pairing::{
    pair_index, pair_leader_follower, resolve_pairs, PairDiagnostic, PairIndexEntry, PairingReport, RejectReason,
};
pub use synthetic::{generate_synthetic_pair, DEFAULT_VEHICLE_LENGTH};

/// Minimum overlap, in samples, for a pair to be used for calibration.
pub const MIN_CALIBRATION_SAMPLES: usize = 600;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: cannot parse column `{column}`")]
    UnparsableField { row: usize, column: String },
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("vehicle {vehicle_id} has two records for frame {frame_id}")]
    DuplicateFrame { vehicle_id: u64, frame_id: i64 },
    #[error("initial headway {headway} m does not exceed the minimum headway b_c = {b_c} m")]
    InfeasibleInitialState { headway: f64, b_c: f64 },
    #[error("parameters outside the calibration bounds: {0}")]
    ParamsOutOfBounds(String),
    #[error("duration {0} s is not a positive whole number of sampling steps")]
    InvalidDuration(f64),
    #[error("synthetic follower reached the leader at frame {0}")]
    SyntheticCollision(i64),
    #[error("pair index refers to unknown vehicle {0}")]
    UnknownVehicle(u64),
    #[error("pair index window for follower {follower_id} is not covered by the trajectories")]
    WindowNotCovered { follower_id: u64 },
    #[error(transparent)]
    Dynamics(#[from] crate::carfollowing::CarFollowingError),
}

/// One row of trajectory data, in meters and seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub vehicle_id: u64,
    pub frame_id: i64,
    /// Longitudinal position along the roadway.
    pub local_y: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub lane_id: i64,
    /// Vehicle ahead in the same lane, `0` when there is none.
    pub preceding_id: u64,
    pub vehicle_length: f64,
}

impl TrajectoryRecord {
    pub fn time(&self) -> f64 {
        self.frame_id as f64 * DT
    }
}

/// Gap-free kinematic series of one vehicle, one sample per frame starting at
/// `start_frame`.
///
/// Lane and leader ids ride along per frame so that pairing and CSV export do
/// not need the original records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub vehicle_id: u64,
    pub start_frame: i64,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub accelerations: Vec<f64>,
    pub length: f64,
    pub lane_ids: Vec<i64>,
    pub preceding_ids: Vec<u64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// One past the last frame.
    pub fn end_frame(&self) -> i64 {
        self.start_frame + self.len() as i64
    }

    pub fn covers(&self, frame: i64) -> bool {
        frame >= self.start_frame && frame < self.end_frame()
    }

    pub fn index_of(&self, frame: i64) -> Option<usize> {
        self.covers(frame).then(|| (frame - self.start_frame) as usize)
    }

    /// Copy of the frames `[start, start + len)`. Panics if the window is not
    /// covered.
    pub fn window(&self, start: i64, len: usize) -> Trajectory {
        let a = self.index_of(start).expect("window start outside trajectory");
        let b = a + len;
        assert!(b <= self.len(), "window end outside trajectory");
        Trajectory {
            vehicle_id: self.vehicle_id,
            start_frame: start,
            positions: self.positions[a..b].to_vec(),
            velocities: self.velocities[a..b].to_vec(),
            accelerations: self.accelerations[a..b].to_vec(),
            length: self.length,
            lane_ids: self.lane_ids[a..b].to_vec(),
            preceding_ids: self.preceding_ids[a..b].to_vec(),
        }
    }

    pub fn to_records(&self) -> Vec<TrajectoryRecord> {
        (0..self.len())
            .map(|i| TrajectoryRecord {
                vehicle_id: self.vehicle_id,
                frame_id: self.start_frame + i as i64,
                local_y: self.positions[i],
                velocity: self.velocities[i],
                acceleration: self.accelerations[i],
                lane_id: self.lane_ids[i],
                preceding_id: self.preceding_ids[i],
                vehicle_length: self.length,
            })
            .collect()
    }

    fn from_run(run: &[&TrajectoryRecord]) -> Trajectory {
        Trajectory {
            vehicle_id: run[0].vehicle_id,
            start_frame: run[0].frame_id,
            positions: run.iter().map(|r| r.local_y).collect(),
            velocities: run.iter().map(|r| r.velocity).collect(),
            accelerations: run.iter().map(|r| r.acceleration).collect(),
            length: run[0].vehicle_length,
            lane_ids: run.iter().map(|r| r.lane_id).collect(),
            preceding_ids: run.iter().map(|r| r.preceding_id).collect(),
        }
    }
}

/// Leader and follower restricted to the same frame window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehiclePair {
    pub leader: Trajectory,
    pub follower: Trajectory,
    pub overlap_start: i64,
    pub overlap_len: usize,
}

impl VehiclePair {
    /// Measured headways `x_leader − x_follower` over the window.
    pub fn headways(&self) -> Vec<f64> {
        self.leader
            .positions
            .iter()
            .zip(&self.follower.positions)
            .map(|(l, f)| l - f)
            .collect()
    }

    /// Whether the window is long enough to calibrate on.
    pub fn calibration_ready(&self) -> bool {
        self.overlap_len >= MIN_CALIBRATION_SAMPLES
    }
}

/// Per-vehicle trajectories plus the number of fragments that lost to a longer
/// run of the same vehicle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuildOutcome {
    pub trajectories: BTreeMap<u64, Trajectory>,
    pub fragments_discarded: usize,
}

/// Group records by vehicle and keep each vehicle's longest run of
/// consecutive frames. Ties go to the earliest run.
pub fn build_trajectories(records: &[TrajectoryRecord]) -> Result<BuildOutcome, TrajectoryError> {
    let mut by_vehicle: BTreeMap<u64, Vec<&TrajectoryRecord>> = BTreeMap::new();
    for r in records {
        by_vehicle.entry(r.vehicle_id).or_default().push(r);
    }

    let mut out = BuildOutcome::default();
    for (id, mut rows) in by_vehicle {
        rows.sort_by_key(|r| r.frame_id);
        if let Some(w) = rows.windows(2).find(|w| w[0].frame_id == w[1].frame_id) {
            return Err(TrajectoryError::DuplicateFrame {
                vehicle_id: id,
                frame_id: w[0].frame_id,
            });
        }

        let mut runs: Vec<&[&TrajectoryRecord]> = Vec::new();
        let mut start = 0;
        for i in 1..=rows.len() {
            if i == rows.len() || rows[i].frame_id != rows[i - 1].frame_id + 1 {
                runs.push(&rows[start..i]);
                start = i;
            }
        }
        let mut best = runs[0];
        for run in &runs[1..] {
            if run.len() > best.len() {
                best = run;
            }
        }
        out.fragments_discarded += runs.len() - 1;
        out.trajectories.insert(id, Trajectory::from_run(best));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(vehicle_id: u64, frame_id: i64) -> TrajectoryRecord {
        TrajectoryRecord {
            vehicle_id,
            frame_id,
            local_y: frame_id as f64,
            velocity: 10.0,
            acceleration: 0.0,
            lane_id: 1,
            preceding_id: 0,
            vehicle_length: 4.5,
        }
    }

    #[test]
    fn assembles_consecutive_frames() {
        let recs = vec![rec(9, 12), rec(9, 10), rec(9, 11)];
        let out = build_trajectories(&recs).unwrap();
        let t = &out.trajectories[&9];
        assert_eq!(t.len(), 3);
        assert_eq!(t.start_frame, 10);
        assert_eq!(t.positions, vec![10.0, 11.0, 12.0]);
        assert_eq!(out.fragments_discarded, 0);
    }

    #[test]
    fn keeps_longest_run() {
        let recs: Vec<_> = [10, 11, 13, 14, 15].iter().map(|&f| rec(9, f)).collect();
        let out = build_trajectories(&recs).unwrap();
        let t = &out.trajectories[&9];
        assert_eq!(t.start_frame, 13);
        assert_eq!(t.len(), 3);
        assert_eq!(out.fragments_discarded, 1);
    }

    #[test]
    fn duplicate_frame_is_an_error() {
        let recs = vec![rec(9, 10), rec(9, 11), rec(9, 11)];
        assert_eq!(
            build_trajectories(&recs),
            Err(TrajectoryError::DuplicateFrame {
                vehicle_id: 9,
                frame_id: 11
            })
        );
    }

    #[test]
    fn window_and_records_agree() {
        let recs: Vec<_> = (0..10).map(|f| rec(3, f)).collect();
        let t = build_trajectories(&recs).unwrap().trajectories.remove(&3).unwrap();
        let w = t.window(4, 3);
        assert_eq!(w.start_frame, 4);
        assert_eq!(w.to_records(), recs[4..7].to_vec());
    }
}
