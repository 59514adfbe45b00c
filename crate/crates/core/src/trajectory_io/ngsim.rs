use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Trajectory, TrajectoryError, TrajectoryRecord};
use crate::DT;

const FEET_TO_METERS: f64 = 0.3048;

pub const CANONICAL_HEADER: &str = "vehicle_id,frame_id,t,local_y_m,v_mps,a_mps2,lane_id,preceding_id,length_m";

/// Length unit of the position/velocity/acceleration/length columns of an
/// NGSIM file. Never auto-detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Feet,
    #[default]
    Meters,
}

impl Units {
    fn factor(self) -> f64 {
        match self {
            Units::Feet => FEET_TO_METERS,
            Units::Meters => 1.0,
        }
    }
}

struct Columns {
    vehicle_id: usize,
    frame_id: usize,
    local_y: usize,
    velocity: usize,
    acceleration: usize,
    lane_id: usize,
    preceding_id: usize,
    length: usize,
}

impl Columns {
    fn locate(headers: &csv::StringRecord, names: [&str; 8]) -> Result<Columns, TrajectoryError> {
        let lookup: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_ascii_lowercase(), i))
            .collect();
        let find = |name: &str| {
            lookup
                .get(&name.to_ascii_lowercase())
                .copied()
                .ok_or_else(|| TrajectoryError::MissingColumn(name.to_string()))
        };
        Ok(Columns {
            vehicle_id: find(names[0])?,
            frame_id: find(names[1])?,
            local_y: find(names[2])?,
            velocity: find(names[3])?,
            acceleration: find(names[4])?,
            lane_id: find(names[5])?,
            preceding_id: find(names[6])?,
            length: find(names[7])?,
        })
    }
}

struct Row<'a> {
    record: &'a csv::StringRecord,
    headers: &'a csv::StringRecord,
    row: usize,
}

impl Row<'_> {
    fn field(&self, idx: usize) -> &str {
        self.record.get(idx).unwrap_or("").trim()
    }

    fn err(&self, idx: usize) -> TrajectoryError {
        TrajectoryError::UnparsableField {
            row: self.row,
            column: self.headers.get(idx).unwrap_or("?").to_string(),
        }
    }

    fn real(&self, idx: usize) -> Result<f64, TrajectoryError> {
        self.field(idx).parse::<f64>().map_err(|_| self.err(idx))
    }

    /// Integers may be written as `12` or `12.0`.
    fn int(&self, idx: usize) -> Result<i64, TrajectoryError> {
        let s = self.field(idx);
        if let Ok(v) = s.parse::<i64>() {
            return Ok(v);
        }
        match s.parse::<f64>() {
            Ok(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
            _ => Err(self.err(idx)),
        }
    }

    fn id(&self, idx: usize) -> Result<u64, TrajectoryError> {
        u64::try_from(self.int(idx)?).map_err(|_| self.err(idx))
    }
}

fn read_records(text: &str, names: [&str; 8], scale: f64) -> Result<Vec<TrajectoryRecord>, TrajectoryError> {
    if text.trim().is_empty() {
        return Err(TrajectoryError::EmptyInput);
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|_| TrajectoryError::EmptyInput)?.clone();
    let cols = Columns::locate(&headers, names)?;

    let mut out = Vec::new();
    for (i, result) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = result.map_err(|_| TrajectoryError::UnparsableField {
            row: row_no,
            column: "<row>".into(),
        })?;
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let row = Row {
            record: &record,
            headers: &headers,
            row: row_no,
        };
        out.push(TrajectoryRecord {
            vehicle_id: row.id(cols.vehicle_id)?,
            frame_id: row.int(cols.frame_id)?,
            local_y: row.real(cols.local_y)? * scale,
            velocity: row.real(cols.velocity)? * scale,
            acceleration: row.real(cols.acceleration)? * scale,
            lane_id: row.int(cols.lane_id)?,
            preceding_id: row.id(cols.preceding_id)?,
            vehicle_length: row.real(cols.length)? * scale,
        });
    }
    if out.is_empty() {
        return Err(TrajectoryError::EmptyInput);
    }
    Ok(out)
}

/// Parse an NGSIM trajectory table. Column names match case-insensitively and
/// extra columns are ignored. With [`Units::Feet`] every length-based column
/// is multiplied by 0.3048.
pub fn parse_ngsim_csv(text: &str, units: Units) -> Result<Vec<TrajectoryRecord>, TrajectoryError> {
    read_records(
        text,
        [
            "Vehicle_ID",
            "Frame_ID",
            "Local_Y",
            "v_Vel",
            "v_Acc",
            "Lane_ID",
            "Preceding",
            "v_length",
        ],
        units.factor(),
    )
}

/// Parse the canonical meter-unit CSV written by [`write_canonical_csv`]. The
/// `t` column is informational and ignored.
pub fn parse_canonical_csv(text: &str) -> Result<Vec<TrajectoryRecord>, TrajectoryError> {
    read_records(
        text,
        [
            "vehicle_id",
            "frame_id",
            "local_y_m",
            "v_mps",
            "a_mps2",
            "lane_id",
            "preceding_id",
            "length_m",
        ],
        1.0,
    )
}

fn push_row(out: &mut String, r: &TrajectoryRecord, dt: f64) {
    let t = (r.frame_id as f64 * dt * 1e6).round() / 1e6;
    // `{}` on f64 prints the shortest string that parses back to the same bits.
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{}",
        r.vehicle_id, r.frame_id, t, r.local_y, r.velocity, r.acceleration, r.lane_id, r.preceding_id, r.vehicle_length
    );
}

pub fn write_canonical_csv(records: &[TrajectoryRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CANONICAL_HEADER);
    out.push('\n');
    for r in records {
        push_row(&mut out, r, DT);
    }
    out
}

/// Canonical CSV of several trajectories, in the given order, with the `t`
/// column computed from `dt`.
pub fn write_trajectories_csv<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>, dt: f64) -> String {
    let mut out = String::new();
    out.push_str(CANONICAL_HEADER);
    out.push('\n');
    for t in trajectories {
        for r in t.to_records() {
            push_row(&mut out, &r, dt);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "Vehicle_ID,Frame_ID,Total_Frames,Local_Y,v_Vel,v_Acc,Lane_ID,Preceding,v_Length";

    #[test]
    fn maps_fields_in_meters() {
        let text = format!("{HEADER}\n7,100,50,55.0,12.0,0.3,2,5,4.5\n");
        let recs = parse_ngsim_csv(&text, Units::Meters).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!((r.vehicle_id, r.frame_id, r.lane_id, r.preceding_id), (7, 100, 2, 5));
        assert_eq!(r.local_y, 55.0);
        assert_eq!(r.velocity, 12.0);
        assert_eq!(r.acceleration, 0.3);
        assert_eq!(r.vehicle_length, 4.5);
    }

    #[test]
    fn converts_feet() {
        let text = format!("{HEADER}\n7,100,50,55.0,12.0,0.3,2,5,4.5\n");
        let r = &parse_ngsim_csv(&text, Units::Feet).unwrap()[0];
        assert!((r.local_y - 16.764).abs() < 1e-12);
        assert!((r.velocity - 12.0 * 0.3048).abs() < 1e-12);
    }

    #[test]
    fn header_match_is_case_insensitive() {
        let text = "vehicle_id,FRAME_ID,local_y,V_VEL,v_acc,lane_id,preceding,V_LENGTH\n1,2,3,4,5,6,0,4\n";
        assert_eq!(parse_ngsim_csv(text, Units::Meters).unwrap().len(), 1);
    }

    #[test]
    fn bad_number_is_reported_with_row_and_column() {
        let text = format!("{HEADER}\n7,100,50,55.0,12.0,0.3,2,5,4.5\n7,101,50,56.0,abc,0.3,2,5,4.5\n");
        assert_eq!(
            parse_ngsim_csv(&text, Units::Meters),
            Err(TrajectoryError::UnparsableField {
                row: 2,
                column: "v_Vel".into()
            })
        );
    }

    #[test]
    fn missing_column() {
        let text = "Vehicle_ID,Frame_ID,Local_Y,v_Vel,v_Acc,Lane_ID,v_Length\n1,2,3,4,5,6,7\n";
        assert_eq!(
            parse_ngsim_csv(text, Units::Meters),
            Err(TrajectoryError::MissingColumn("Preceding".into()))
        );
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_ngsim_csv("", Units::Meters), Err(TrajectoryError::EmptyInput));
        assert_eq!(parse_ngsim_csv(HEADER, Units::Meters), Err(TrajectoryError::EmptyInput));
    }

    fn any_record() -> impl Strategy<Value = TrajectoryRecord> {
        (
            0u64..100_000,
            -10i64..1_000_000,
            -1e6f64..1e6,
            -1e3f64..1e3,
            -1e3f64..1e3,
            0i64..9,
            0u64..100_000,
            0.1f64..30.0,
        )
            .prop_map(|(v, f, y, vel, a, lane, p, len)| TrajectoryRecord {
                vehicle_id: v,
                frame_id: f,
                local_y: y,
                velocity: vel,
                acceleration: a,
                lane_id: lane,
                preceding_id: p,
                vehicle_length: len,
            })
    }

    proptest! {
        #[test]
        fn canonical_round_trip_is_bit_exact(recs in proptest::collection::vec(any_record(), 1..40)) {
            let text = write_canonical_csv(&recs);
            let back = parse_canonical_csv(&text).unwrap();
            prop_assert_eq!(back.len(), recs.len());
            for (a, b) in recs.iter().zip(&back) {
                prop_assert_eq!(a.local_y.to_bits(), b.local_y.to_bits());
                prop_assert_eq!(a.velocity.to_bits(), b.velocity.to_bits());
                prop_assert_eq!(a.acceleration.to_bits(), b.acceleration.to_bits());
                prop_assert_eq!(a.vehicle_length.to_bits(), b.vehicle_length.to_bits());
                prop_assert_eq!(a, b);
            }
        }
    }
}
