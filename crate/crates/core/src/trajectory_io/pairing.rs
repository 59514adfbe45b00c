use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Trajectory, TrajectoryError, VehiclePair};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    /// The referenced leader has no trajectory.
    LeaderMissing,
    /// Leader and follower never share a frame in the same lane.
    NoSharedWindow,
    /// Fewer than two shared frames.
    TooShort,
    /// Leader not ahead of the follower at `frame`.
    NonPositiveHeadway { frame: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostic {
    pub leader_id: u64,
    pub follower_id: u64,
    pub window_start: i64,
    pub window_len: usize,
    #[serde(flatten)]
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairingReport {
    /// Accepted pairs, longest overlap first.
    pub pairs: Vec<VehiclePair>,
    pub rejected: Vec<PairDiagnostic>,
}

/// One line of the pair index file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairIndexEntry {
    pub leader_id: u64,
    pub follower_id: u64,
    pub overlap_start: i64,
    pub overlap_len: usize,
    /// `false` marks pairs shorter than the calibration minimum.
    #[serde(default = "default_true")]
    pub calibration_ready: bool,
}

fn default_true() -> bool {
    true
}

/// Maximal runs `[a, b)` of follower indices with a constant, nonzero leader id
/// and a constant lane.
fn leader_segments(f: &Trajectory, lane_filter: Option<i64>) -> Vec<(usize, usize)> {
    let keep = |i: usize| f.preceding_ids[i] != 0 && lane_filter.is_none_or(|l| f.lane_ids[i] == l);
    let mut segs = Vec::new();
    let mut i = 0;
    while i < f.len() {
        if !keep(i) {
            i += 1;
            continue;
        }
        let start = i;
        while i + 1 < f.len()
            && keep(i + 1)
            && f.preceding_ids[i + 1] == f.preceding_ids[start]
            && f.lane_ids[i + 1] == f.lane_ids[start]
        {
            i += 1;
        }
        segs.push((start, i + 1));
        i += 1;
    }
    segs
}

/// Pair each follower with the vehicle it reports as its leader.
///
/// A pair covers the longest window in which the follower's leader id and lane
/// stay constant, the leader trajectory exists, and the leader is in the same
/// lane. Windows where the leader is not strictly ahead are rejected and
/// reported, never silently dropped.
pub fn pair_leader_follower(trajectories: &BTreeMap<u64, Trajectory>, lane_filter: Option<i64>) -> PairingReport {
    let mut report = PairingReport::default();

    for follower in trajectories.values() {
        for (a, b) in leader_segments(follower, lane_filter) {
            let leader_id = follower.preceding_ids[a];
            let lane = follower.lane_ids[a];
            let seg_start = follower.start_frame + a as i64;
            let seg_end = follower.start_frame + b as i64;
            let diag = |start: i64, len: usize, reason| PairDiagnostic {
                leader_id,
                follower_id: follower.vehicle_id,
                window_start: start,
                window_len: len,
                reason,
            };

            let Some(leader) = trajectories.get(&leader_id) else {
                report
                    .rejected
                    .push(diag(seg_start, b - a, RejectReason::LeaderMissing));
                continue;
            };

            // Longest sub-window of the intersection where the leader is in
            // the follower's lane.
            let lo = seg_start.max(leader.start_frame);
            let hi = seg_end.min(leader.end_frame());
            let mut best: Option<(i64, usize)> = None;
            let mut frame = lo;
            while frame < hi {
                if leader.lane_ids[leader.index_of(frame).unwrap()] != lane {
                    frame += 1;
                    continue;
                }
                let start = frame;
                while frame < hi && leader.lane_ids[leader.index_of(frame).unwrap()] == lane {
                    frame += 1;
                }
                let len = (frame - start) as usize;
                if best.is_none_or(|(_, l)| len > l) {
                    best = Some((start, len));
                }
            }

            let Some((start, len)) = best else {
                report
                    .rejected
                    .push(diag(seg_start, b - a, RejectReason::NoSharedWindow));
                continue;
            };
            if len < 2 {
                report.rejected.push(diag(start, len, RejectReason::TooShort));
                continue;
            }

            let pair = VehiclePair {
                leader: leader.window(start, len),
                follower: follower.window(start, len),
                overlap_start: start,
                overlap_len: len,
            };
            if let Some(k) = pair.headways().iter().position(|&h| !(h > 0.0)) {
                report.rejected.push(diag(
                    start,
                    len,
                    RejectReason::NonPositiveHeadway {
                        frame: start + k as i64,
                    },
                ));
                continue;
            }
            report.pairs.push(pair);
        }
    }

    report.pairs.sort_by(|x, y| {
        y.overlap_len
            .cmp(&x.overlap_len)
            .then(x.follower.vehicle_id.cmp(&y.follower.vehicle_id))
            .then(x.overlap_start.cmp(&y.overlap_start))
    });
    report
}

pub fn pair_index(pairs: &[VehiclePair]) -> Vec<PairIndexEntry> {
    pairs
        .iter()
        .map(|p| PairIndexEntry {
            leader_id: p.leader.vehicle_id,
            follower_id: p.follower.vehicle_id,
            overlap_start: p.overlap_start,
            overlap_len: p.overlap_len,
            calibration_ready: p.calibration_ready(),
        })
        .collect()
}

/// Rebuild pairs from an index and the trajectories it was computed from.
pub fn resolve_pairs(
    index: &[PairIndexEntry],
    trajectories: &BTreeMap<u64, Trajectory>,
) -> Result<Vec<VehiclePair>, TrajectoryError> {
    index
        .iter()
        .map(|e| {
            let leader = trajectories
                .get(&e.leader_id)
                .ok_or(TrajectoryError::UnknownVehicle(e.leader_id))?;
            let follower = trajectories
                .get(&e.follower_id)
                .ok_or(TrajectoryError::UnknownVehicle(e.follower_id))?;
            let last = e.overlap_start + e.overlap_len as i64 - 1;
            for t in [leader, follower] {
                if e.overlap_len < 2 || !t.covers(e.overlap_start) || !t.covers(last) {
                    return Err(TrajectoryError::WindowNotCovered {
                        follower_id: e.follower_id,
                    });
                }
            }
            Ok(VehiclePair {
                leader: leader.window(e.overlap_start, e.overlap_len),
                follower: follower.window(e.overlap_start, e.overlap_len),
                overlap_start: e.overlap_start,
                overlap_len: e.overlap_len,
            })
        })
        .collect()
}
