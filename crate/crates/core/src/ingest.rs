//! Sensor stream parsing, per-agent track state, detection zones, and
//! feature-window assembly for the predictors.
//!
//! Wire format (JSON Lines, one record per line, SI units):
//! `t, agent_id, kind, lat, lon, speed, ax, ay, az, gx, gy, gz`.
//! A CSV alternative uses the same column order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{haversine_distance, GeoPoint, GeodesyError, PathFix, PathPolyline};
use crate::predictor::NormParams;

/// Feature order consumed by the predictors:
/// speed, ax, ay, az, gx, gy, gz, distance.
pub const FEATURE_COUNT: usize = 8;

#[derive(Error, Debug, PartialEq)]
pub enum IngestError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("non-monotonic timestamp: {next} after {prev}")]
    NonMonotonicTimestamp { prev: f64, next: f64 },
    #[error("insufficient history: have {have}, need {need}")]
    InsufficientHistory { have: usize, need: usize },
    #[error("no aligned sample near t = {t}")]
    NoAlignedSample { t: f64 },
    #[error("invalid zone: {0}")]
    InvalidZone(String),
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Pedestrian,
    Vehicle,
}

/// One timestamped sensor reading for one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorRecord {
    pub t: f64,
    pub agent_id: String,
    pub kind: AgentKind,
    pub pos: GeoPoint,
    pub speed_mps: f64,
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
}

/// Flat on-wire shape shared by the JSONL and CSV formats.
#[derive(Serialize, Deserialize)]
struct WireRecord {
    t: f64,
    agent_id: String,
    kind: AgentKind,
    lat: f64,
    lon: f64,
    speed: f64,
    ax: f64,
    ay: f64,
    az: f64,
    gx: f64,
    gy: f64,
    gz: f64,
}

pub const CSV_HEADER: &str = "t,agent_id,kind,lat,lon,speed,ax,ay,az,gx,gy,gz";

impl WireRecord {
    fn validate(self) -> Result<SensorRecord, IngestError> {
        let nums = [
            self.t, self.lat, self.lon, self.speed, self.ax, self.ay, self.az, self.gx, self.gy,
            self.gz,
        ];
        if nums.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::Validation("non-finite field".into()));
        }
        if self.speed < 0.0 {
            return Err(IngestError::Validation(format!(
                "negative speed {}",
                self.speed
            )));
        }
        let pos = GeoPoint::new(self.lat, self.lon)
            .map_err(|e| IngestError::Validation(e.to_string()))?;
        Ok(SensorRecord {
            t: self.t,
            agent_id: self.agent_id,
            kind: self.kind,
            pos,
            speed_mps: self.speed,
            accel: [self.ax, self.ay, self.az],
            gyro: [self.gx, self.gy, self.gz],
        })
    }

    fn from_record(r: &SensorRecord) -> Self {
        Self {
            t: r.t,
            agent_id: r.agent_id.clone(),
            kind: r.kind,
            lat: r.pos.lat_deg,
            lon: r.pos.lon_deg,
            speed: r.speed_mps,
            ax: r.accel[0],
            ay: r.accel[1],
            az: r.accel[2],
            gx: r.gyro[0],
            gy: r.gyro[1],
            gz: r.gyro[2],
        }
    }
}

/// Parses one JSONL line into a validated record.
pub fn parse_record(line: &str) -> Result<SensorRecord, IngestError> {
    let wire: WireRecord =
        serde_json::from_str(line).map_err(|e| IngestError::Parse(e.to_string()))?;
    wire.validate()
}

/// Serializes one record as a JSONL line (no trailing newline).
pub fn serialize_record(r: &SensorRecord) -> String {
    serde_json::to_string(&WireRecord::from_record(r)).expect("record serialization")
}

/// Parses one CSV line (column order of [`CSV_HEADER`]).
pub fn parse_csv_record(line: &str) -> Result<SensorRecord, IngestError> {
    let fields: Vec<&str> = line.trim_end().split(',').collect();
    if fields.len() != 12 {
        return Err(IngestError::Parse(format!(
            "expected 12 CSV fields, got {}",
            fields.len()
        )));
    }
    let num = |i: usize| -> Result<f64, IngestError> {
        fields[i]
            .trim()
            .parse::<f64>()
            .map_err(|e| IngestError::Parse(format!("field {}: {e}", i + 1)))
    };
    let kind = match fields[2].trim() {
        "pedestrian" => AgentKind::Pedestrian,
        "vehicle" => AgentKind::Vehicle,
        other => return Err(IngestError::Parse(format!("unknown kind {other:?}"))),
    };
    WireRecord {
        t: num(0)?,
        agent_id: fields[1].trim().to_string(),
        kind,
        lat: num(3)?,
        lon: num(4)?,
        speed: num(5)?,
        ax: num(6)?,
        ay: num(7)?,
        az: num(8)?,
        gx: num(9)?,
        gy: num(10)?,
        gz: num(11)?,
    }
    .validate()
}

/// Serializes one record as a CSV line matching [`CSV_HEADER`].
pub fn serialize_csv_record(r: &SensorRecord) -> String {
    let kind = match r.kind {
        AgentKind::Pedestrian => "pedestrian",
        AgentKind::Vehicle => "vehicle",
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        r.t,
        r.agent_id,
        kind,
        r.pos.lat_deg,
        r.pos.lon_deg,
        r.speed_mps,
        r.accel[0],
        r.accel[1],
        r.accel[2],
        r.gyro[0],
        r.gyro[1],
        r.gyro[2]
    )
}

/// One track sample: the raw record plus derived cumulative traveled
/// distance and the map-matched fix.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackEntry {
    pub record: SensorRecord,
    pub cumulative_m: f64,
    pub fix: PathFix,
}

/// Time-ordered history for one agent, matched onto one path.
#[derive(Clone, Debug)]
pub struct TrackState {
    pub agent_id: String,
    pub kind: AgentKind,
    pub sample_period_s: f64,
    entries: Vec<TrackEntry>,
}

impl TrackState {
    pub fn new(agent_id: impl Into<String>, kind: AgentKind, sample_period_s: f64) -> Self {
        Self {
            agent_id: agent_id.into(),
            kind,
            sample_period_s,
            entries: Vec::new(),
        }
    }

    /// Appends a record: cumulative distance grows by the Haversine distance
    /// from the previous position and the record is map-matched onto `path`.
    pub fn append(&mut self, record: SensorRecord, path: &PathPolyline) -> Result<(), IngestError> {
        let cumulative_m = match self.entries.last() {
            Some(last) => {
                if record.t <= last.record.t {
                    return Err(IngestError::NonMonotonicTimestamp {
                        prev: last.record.t,
                        next: record.t,
                    });
                }
                last.cumulative_m + haversine_distance(last.record.pos, record.pos)
            }
            None => 0.0,
        };
        let fix = path.project(record.pos);
        self.entries.push(TrackEntry {
            record,
            cumulative_m,
            fix,
        });
        Ok(())
    }

    pub fn entries(&self) -> &[TrackEntry] {
        &self.entries
    }

    pub fn latest(&self) -> Option<&TrackEntry> {
        self.entries.last()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of the last entry with `t <= t_max`, if any.
    fn latest_at(&self, t_max: f64) -> Option<usize> {
        self.entries
            .iter()
            .rposition(|e| e.record.t <= t_max + 1e-9)
    }

    /// Resamples the history to a fixed step ending at `t_end`, picking the
    /// recorded sample nearest each grid time. Stops once grid times run out
    /// of recorded history. Entries keep their original timestamps and
    /// derived values.
    pub fn resample_nearest(&self, t_end: f64, step_s: f64) -> TrackState {
        let mut picked: Vec<TrackEntry> = Vec::new();
        if !self.entries.is_empty() {
            let t_first = self.entries[0].record.t;
            let mut j = 0usize;
            loop {
                let target = t_end - j as f64 * step_s;
                if target < t_first - step_s / 2.0 {
                    break;
                }
                let idx = self
                    .entries
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        let da = (a.record.t - target).abs();
                        let db = (b.record.t - target).abs();
                        da.partial_cmp(&db).expect("finite timestamps")
                    })
                    .map(|(i, _)| i)
                    .expect("non-empty entries");
                // Strictly decreasing pick times; a repeated pick means the
                // grid has outrun the recorded history.
                if let Some(last) = picked.last() {
                    if self.entries[idx].record.t >= last.record.t {
                        break;
                    }
                }
                picked.push(self.entries[idx].clone());
                j += 1;
            }
        }
        picked.reverse();
        TrackState {
            agent_id: self.agent_id.clone(),
            kind: self.kind,
            sample_period_s: step_s,
            entries: picked,
        }
    }
}

/// Spatial gate along a path: an arc-length band plus a lateral tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionZone {
    pub kind: AgentKind,
    pub s_min: f64,
    pub s_max: f64,
    pub half_width_m: f64,
}

impl DetectionZone {
    pub fn new(
        kind: AgentKind,
        s_min: f64,
        s_max: f64,
        half_width_m: f64,
        path_len: f64,
    ) -> Result<Self, IngestError> {
        if !(0.0 <= s_min && s_min < s_max && s_max <= path_len) {
            return Err(IngestError::InvalidZone(format!(
                "bounds [{s_min}, {s_max}] outside path of length {path_len}"
            )));
        }
        let width_ok = half_width_m.is_finite() && half_width_m > 0.0;
        if !width_ok {
            return Err(IngestError::InvalidZone("half width must be > 0".into()));
        }
        Ok(Self {
            kind,
            s_min,
            s_max,
            half_width_m,
        })
    }
}

/// Zone membership; all boundaries inclusive.
pub fn in_zone(zone: &DetectionZone, fix: &PathFix) -> bool {
    zone.s_min <= fix.s && fix.s <= zone.s_max && fix.lateral_offset_m.abs() <= zone.half_width_m
}

/// Vehicle detection-zone bounds as distances before the crosswalk:
/// `final` = stopping sight distance plus one second of travel, `start` =
/// distance covered while the pedestrian crosses the whole crosswalk.
pub fn compute_vehicle_zone(
    ssd_m: f64,
    speed_mps: f64,
    crossing_time_s: f64,
) -> Result<(f64, f64), IngestError> {
    let ssd_ok = ssd_m.is_finite() && ssd_m > 0.0;
    if !ssd_ok {
        return Err(IngestError::InvalidZone(format!(
            "ssd_m {ssd_m} must be > 0"
        )));
    }
    let final_m = ssd_m + speed_mps * 1.0;
    let start_m = speed_mps * crossing_time_s;
    if start_m <= final_m {
        return Err(IngestError::InvalidZone(format!(
            "start {start_m} must exceed final {final_m}"
        )));
    }
    Ok((final_m, start_m))
}

/// A `time_steps x 8` feature matrix in the fixed feature order.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureWindow {
    pub values: Vec<[f64; FEATURE_COUNT]>,
    pub normalized: bool,
}

fn feature_row(entry: &TrackEntry, base_cumulative_m: f64) -> [f64; FEATURE_COUNT] {
    let r = &entry.record;
    [
        r.speed_mps,
        r.accel[0],
        r.accel[1],
        r.accel[2],
        r.gyro[0],
        r.gyro[1],
        r.gyro[2],
        entry.cumulative_m - base_cumulative_m,
    ]
}

/// Raw (unnormalized) window over explicit entries; the distance channel is
/// relative to the first row.
pub fn build_raw_window(entries: &[&TrackEntry]) -> FeatureWindow {
    let base = entries.first().map_or(0.0, |e| e.cumulative_m);
    FeatureWindow {
        values: entries.iter().map(|e| feature_row(e, base)).collect(),
        normalized: false,
    }
}

/// Normalized window over the last `steps` samples of a track.
pub fn build_feature_window(
    track: &TrackState,
    steps: usize,
    norm: &NormParams,
) -> Result<FeatureWindow, IngestError> {
    if track.len() < steps {
        return Err(IngestError::InsufficientHistory {
            have: track.len(),
            need: steps,
        });
    }
    let tail: Vec<&TrackEntry> = track.entries[track.len() - steps..].iter().collect();
    Ok(norm.normalize_window(&build_raw_window(&tail)))
}

/// Supervised examples from one run: stride-1 windows of `input_steps` rows
/// paired with the next `output_steps` traveled-distance increments
/// (relative to the window's last row).
pub fn build_training_examples(
    entries: &[TrackEntry],
    input_steps: usize,
    output_steps: usize,
) -> Vec<(FeatureWindow, Vec<f64>)> {
    let n = entries.len();
    if n < input_steps + output_steps {
        return Vec::new();
    }
    let mut examples = Vec::with_capacity(n - input_steps - output_steps + 1);
    for i in 0..=(n - input_steps - output_steps) {
        let rows: Vec<&TrackEntry> = entries[i..i + input_steps].iter().collect();
        let window = build_raw_window(&rows);
        let anchor = entries[i + input_steps - 1].cumulative_m;
        let targets: Vec<f64> = (1..=output_steps)
            .map(|k| entries[i + input_steps - 1 + k].cumulative_m - anchor)
            .collect();
        examples.push((window, targets));
    }
    examples
}

/// Time-aligned pair of tracks at one twin tick. The pedestrian history is
/// resampled to the twin step (the vehicle sample period) so both predictors
/// share the same one-second horizon.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub ped: TrackState,
    pub veh: TrackState,
}

/// Pairs the latest records at or before `t`; a track whose first in-range
/// sample lands slightly after `t` still pairs as long as it is within
/// `tol_s`. Errors when either track has no sample within tolerance.
pub fn snapshot_at(
    ped: &TrackState,
    veh: &TrackState,
    t: f64,
    tol_s: f64,
) -> Result<Snapshot, IngestError> {
    let pick = |track: &TrackState| -> Result<usize, IngestError> {
        if let Some(idx) = track.latest_at(t) {
            if (t - track.entries[idx].record.t).abs() <= tol_s {
                return Ok(idx);
            }
        }
        let after = track
            .entries
            .iter()
            .position(|e| e.record.t > t && (e.record.t - t).abs() <= tol_s);
        after.ok_or(IngestError::NoAlignedSample { t })
    };
    let ped_idx = pick(ped)?;
    let veh_idx = pick(veh)?;

    let twin_step = veh.sample_period_s;
    let ped_resampled = ped.resample_nearest(ped.entries[ped_idx].record.t, twin_step);
    let veh_cut = TrackState {
        agent_id: veh.agent_id.clone(),
        kind: veh.kind,
        sample_period_s: veh.sample_period_s,
        entries: veh.entries[..=veh_idx].to_vec(),
    };
    Ok(Snapshot {
        t,
        ped: ped_resampled,
        veh: veh_cut,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::EARTH_RADIUS_M;

    fn gp(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn record(t: f64, lon: f64, speed: f64) -> SensorRecord {
        SensorRecord {
            t,
            agent_id: "a1".into(),
            kind: AgentKind::Pedestrian,
            pos: gp(0.0, lon),
            speed_mps: speed,
            accel: [0.0; 3],
            gyro: [0.0; 3],
        }
    }

    fn equator_path() -> PathPolyline {
        PathPolyline::new(vec![gp(0.0, 0.0), gp(0.0, 0.01)]).unwrap()
    }

    /// Longitude degrees east of the origin for a given equatorial distance.
    fn deg_for_meters(m: f64) -> f64 {
        m / (std::f64::consts::PI * EARTH_RADIUS_M / 180.0)
    }

    #[test]
    fn parse_valid_line() {
        let line = r#"{"t":1.0,"agent_id":"p1","kind":"pedestrian","lat":33.2,"lon":-87.5,"speed":1.4,"ax":0.1,"ay":0.0,"az":9.8,"gx":0.0,"gy":0.0,"gz":0.01}"#;
        let r = parse_record(line).unwrap();
        assert_eq!(r.speed_mps, 1.4);
        assert_eq!(r.kind, AgentKind::Pedestrian);
        assert_eq!(r.pos, gp(33.2, -87.5));
    }

    #[test]
    fn parse_rejects_missing_field_and_bad_values() {
        let missing_lat = r#"{"t":1.0,"agent_id":"p1","kind":"pedestrian","lon":-87.5,"speed":1.4,"ax":0,"ay":0,"az":0,"gx":0,"gy":0,"gz":0}"#;
        assert!(matches!(
            parse_record(missing_lat),
            Err(IngestError::Parse(_))
        ));

        let negative_speed = r#"{"t":1.0,"agent_id":"p1","kind":"pedestrian","lat":33.2,"lon":-87.5,"speed":-2.0,"ax":0,"ay":0,"az":0,"gx":0,"gy":0,"gz":0}"#;
        assert!(matches!(
            parse_record(negative_speed),
            Err(IngestError::Validation(_))
        ));
    }

    #[test]
    fn json_round_trip_is_identity() {
        let r = record(12.25, 0.003, 1.4);
        let back = parse_record(&serialize_record(&r)).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn round_trip_is_identity_on_random_records() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2718);
        for i in 0..200 {
            let r = SensorRecord {
                t: rng.random_range(0.0..1e6),
                agent_id: format!("agent-{i}"),
                kind: if rng.random::<bool>() {
                    AgentKind::Pedestrian
                } else {
                    AgentKind::Vehicle
                },
                pos: gp(
                    rng.random_range(-89.9..89.9),
                    rng.random_range(-179.9..179.9),
                ),
                speed_mps: rng.random_range(0.0..40.0),
                accel: std::array::from_fn(|_| rng.random_range(-20.0..20.0)),
                gyro: std::array::from_fn(|_| rng.random_range(-3.0..3.0)),
            };
            assert_eq!(parse_record(&serialize_record(&r)).unwrap(), r);
            assert_eq!(parse_csv_record(&serialize_csv_record(&r)).unwrap(), r);
        }
    }

    #[test]
    fn csv_round_trip_matches_json_fields() {
        let r = SensorRecord {
            t: 3.5,
            agent_id: "v1".into(),
            kind: AgentKind::Vehicle,
            pos: gp(33.21, -87.54),
            speed_mps: 11.176,
            accel: [0.5, -0.25, 0.0],
            gyro: [0.0, 0.0, 0.125],
        };
        let back = parse_csv_record(&serialize_csv_record(&r)).unwrap();
        assert_eq!(back, r);
        assert_eq!(CSV_HEADER.split(',').count(), 12);
    }

    #[test]
    fn append_accumulates_haversine_distance() {
        let path = equator_path();
        let mut track = TrackState::new("p1", AgentKind::Pedestrian, 0.2);
        track.append(record(0.0, 0.0, 1.4), &path).unwrap();
        assert_eq!(track.latest().unwrap().cumulative_m, 0.0);

        track
            .append(record(1.0, deg_for_meters(1.0), 1.4), &path)
            .unwrap();
        let cum = track.latest().unwrap().cumulative_m;
        assert!((cum - 1.0).abs() < 1e-6, "got {cum}");
    }

    #[test]
    fn append_rejects_non_monotonic_time() {
        let path = equator_path();
        let mut track = TrackState::new("p1", AgentKind::Pedestrian, 0.2);
        track.append(record(1.0, 0.0, 1.4), &path).unwrap();
        let err = track.append(record(1.0, 0.001, 1.4), &path).unwrap_err();
        assert!(matches!(err, IngestError::NonMonotonicTimestamp { .. }));
    }

    #[test]
    fn cumulative_distance_matches_independent_fold() {
        let path = equator_path();
        let mut track = TrackState::new("p1", AgentKind::Pedestrian, 0.2);
        let lons = [0.0, 0.0001, 0.00025, 0.0004, 0.00055];
        for (i, lon) in lons.iter().enumerate() {
            track.append(record(i as f64, *lon, 1.4), &path).unwrap();
        }
        let mut expected = 0.0;
        for pair in lons.windows(2) {
            expected += haversine_distance(gp(0.0, pair[0]), gp(0.0, pair[1]));
        }
        assert!((track.latest().unwrap().cumulative_m - expected).abs() < 1e-12);
    }

    #[test]
    fn zone_membership_boundaries() {
        let zone = DetectionZone::new(AgentKind::Pedestrian, 10.0, 20.0, 2.0, 50.0).unwrap();
        let fix = |s: f64, off: f64| PathFix {
            s,
            lateral_offset_m: off,
            heading_deg: 90.0,
        };
        assert!(in_zone(&zone, &fix(15.0, 0.0)));
        assert!(!in_zone(&zone, &fix(20.01, 0.0)));
        assert!(in_zone(&zone, &fix(15.0, 2.0)));
        assert!(in_zone(&zone, &fix(10.0, -2.0)));
        assert!(!in_zone(&zone, &fix(9.99, 0.0)));
    }

    #[test]
    fn zone_membership_monotone_in_half_width() {
        let narrow = DetectionZone::new(AgentKind::Pedestrian, 0.0, 30.0, 1.0, 50.0).unwrap();
        let wide = DetectionZone::new(AgentKind::Pedestrian, 0.0, 30.0, 3.0, 50.0).unwrap();
        for off in [-3.5, -2.0, -1.0, 0.0, 0.5, 1.0, 2.9, 3.1] {
            let fix = PathFix {
                s: 12.0,
                lateral_offset_m: off,
                heading_deg: 0.0,
            };
            if in_zone(&narrow, &fix) {
                assert!(in_zone(&wide, &fix), "offset {off}");
            }
        }
    }

    #[test]
    fn zone_construction_validates_bounds() {
        assert!(DetectionZone::new(AgentKind::Vehicle, 20.0, 10.0, 2.0, 50.0).is_err());
        assert!(DetectionZone::new(AgentKind::Vehicle, 0.0, 60.0, 2.0, 50.0).is_err());
        assert!(DetectionZone::new(AgentKind::Vehicle, 0.0, 10.0, 0.0, 50.0).is_err());
    }

    #[test]
    fn vehicle_zone_matches_reference_bounds() {
        let (final_m, start_m) = compute_vehicle_zone(47.24, 11.176, 15.0).unwrap();
        assert!((final_m - 58.42).abs() < 0.01, "final {final_m}");
        assert!((start_m - 167.64).abs() < 0.01, "start {start_m}");
    }

    #[test]
    fn vehicle_zone_arithmetic_and_errors() {
        let (final_m, start_m) = compute_vehicle_zone(10.0, 5.0, 10.0).unwrap();
        assert_eq!(final_m, 15.0);
        assert_eq!(start_m, 50.0);

        assert!(matches!(
            compute_vehicle_zone(47.24, 0.0, 15.0),
            Err(IngestError::InvalidZone(_))
        ));
    }

    #[test]
    fn vehicle_zone_start_is_linear_in_speed() {
        let (_, s1) = compute_vehicle_zone(10.0, 5.0, 20.0).unwrap();
        let (_, s2) = compute_vehicle_zone(10.0, 10.0, 20.0).unwrap();
        assert!((s2 - 2.0 * s1).abs() < 1e-12);
    }

    #[test]
    fn feature_window_shape_and_distance_channel() {
        let path = equator_path();
        let mut track = TrackState::new("p1", AgentKind::Pedestrian, 1.0);
        // Constant speed 2 m/s at 1 Hz.
        for i in 0..6 {
            track
                .append(record(i as f64, deg_for_meters(2.0 * i as f64), 2.0), &path)
                .unwrap();
        }
        let norm = NormParams::identity();
        let w = build_feature_window(&track, 4, &norm).unwrap();
        assert_eq!(w.values.len(), 4);
        assert!(w.normalized);
        // Window-relative distance: 0, 2, 4, 6 meters before normalization
        // (identity params leave values unchanged).
        for (i, row) in w.values.iter().enumerate() {
            assert!(
                (row[7] - 2.0 * i as f64).abs() < 1e-6,
                "row {i}: {}",
                row[7]
            );
        }

        let err = build_feature_window(&track, 10, &norm).unwrap_err();
        assert!(matches!(err, IngestError::InsufficientHistory { .. }));
    }

    #[test]
    fn training_examples_window_count_and_targets() {
        let path = equator_path();
        let mut track = TrackState::new("p1", AgentKind::Pedestrian, 1.0);
        for i in 0..50 {
            track
                .append(record(i as f64, deg_for_meters(1.4 * i as f64), 1.4), &path)
                .unwrap();
        }
        let examples = build_training_examples(track.entries(), 4, 8);
        assert_eq!(examples.len(), 50 - 4 - 8 + 1);
        // Constant 1.4 m/s: every target vector is 1.4k.
        for (_, targets) in &examples {
            for (k, v) in targets.iter().enumerate() {
                assert!((v - 1.4 * (k + 1) as f64).abs() < 1e-6);
            }
        }

        let short = build_training_examples(&track.entries()[..11], 4, 8);
        assert!(short.is_empty());
    }

    #[test]
    fn snapshot_pairs_latest_records() {
        let path = equator_path();
        let mut ped = TrackState::new("p1", AgentKind::Pedestrian, 0.2);
        let mut veh = TrackState::new("v1", AgentKind::Vehicle, 1.0);
        for i in 0..51 {
            let t = 0.2 * i as f64;
            ped.append(record(t, deg_for_meters(1.4 * t), 1.4), &path)
                .unwrap();
        }
        for i in 0..11 {
            let t = i as f64;
            let mut r = record(t, deg_for_meters(11.0 * t / 10.0), 11.0);
            r.kind = AgentKind::Vehicle;
            r.agent_id = "v1".into();
            veh.append(r, &path).unwrap();
        }
        let snap = snapshot_at(&ped, &veh, 10.0, 0.5).unwrap();
        assert_eq!(snap.t, 10.0);
        assert_eq!(snap.ped.sample_period_s, 1.0);
        // 1 Hz resampling of a 10 s 5 Hz stream yields 11 grid points.
        assert_eq!(snap.ped.len(), 11);
        let times: Vec<f64> = snap.ped.entries().iter().map(|e| e.record.t).collect();
        for (i, t) in times.iter().enumerate() {
            assert!((t - i as f64).abs() <= 0.11, "grid {i}: picked {t}");
        }

        let err = snapshot_at(&ped, &veh, 30.0, 0.5).unwrap_err();
        assert!(matches!(err, IngestError::NoAlignedSample { .. }));
    }

    #[test]
    fn snapshot_tolerates_small_skew() {
        let path = equator_path();
        let mut ped = TrackState::new("p1", AgentKind::Pedestrian, 0.2);
        let mut veh = TrackState::new("v1", AgentKind::Vehicle, 1.0);
        ped.append(record(10.05, 0.0, 1.4), &path).unwrap();
        let mut vr = record(10.0, 0.001, 11.0);
        vr.kind = AgentKind::Vehicle;
        veh.append(vr, &path).unwrap();

        // Pedestrian sample 0.05 s after t still pairs within tolerance.
        let snap = snapshot_at(&ped, &veh, 10.0, 0.2).unwrap();
        assert_eq!(snap.ped.len(), 1);
        assert_eq!(snap.veh.len(), 1);

        // Vehicle latest at 9.2 with tol 0.5 leaves t = 10 unaligned.
        let mut veh2 = TrackState::new("v2", AgentKind::Vehicle, 1.0);
        let mut vr2 = record(9.2, 0.001, 11.0);
        vr2.kind = AgentKind::Vehicle;
        veh2.append(vr2, &path).unwrap();
        assert!(matches!(
            snapshot_at(&ped, &veh2, 10.0, 0.5),
            Err(IngestError::NoAlignedSample { .. })
        ));
    }
}
