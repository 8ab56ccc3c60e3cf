//! The digital-twin orchestrator: detection-zone gating, parallel
//! evaluation of the pedestrian against both vehicle maneuvers over eight
//! one-second future steps, crash identification, and alert emission.
//!
//! The twin ticks at the vehicle rate (the slowest stream); pedestrian
//! history is resampled to that step when snapshots form, so every
//! predictor shares the same 8 x 1 s horizon.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{GeoPoint, GeodesyError, PathPolyline};
use crate::ingest::{
    build_feature_window, compute_vehicle_zone, in_zone, snapshot_at, AgentKind, DetectionZone,
    IngestError, SensorRecord, Snapshot, TrackState,
};
use crate::predictor::{EncoderDecoderModel, PredictorError, Role};
use crate::risk::{assess_step, CrrParams, Maneuver, RiskAssessment};

#[derive(Error, Debug)]
pub enum EngineError {
    #[error("invalid site: {0}")]
    InvalidSite(String),
    #[error("model for {expected:?} has role {got:?}")]
    RoleMismatch { expected: Role, got: Role },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
}

/// Static scene description: the pedestrian walkway, the vehicle approach
/// with its two continuations, and both detection zones.
///
/// The through and left-turn paths carry the approach as a shared prefix,
/// so one arc-length coordinate serves the vehicle on either hypothesis
/// while it is upstream of the junction.
#[derive(Clone, Debug)]
pub struct Site {
    pub ped_path: PathPolyline,
    pub approach: PathPolyline,
    pub through: PathPolyline,
    pub left: PathPolyline,
    pub ped_zone: DetectionZone,
    pub veh_zone: DetectionZone,
    /// Arc position of the crosswalk along the approach.
    pub crosswalk_approach_s: f64,
    pub speed_limit_mps: f64,
    pub ssd_m: f64,
    pub crossing_time_s: f64,
}

/// On-disk site schema: named vertex lists, the crosswalk span and width,
/// and the zone-defining scalars. The vehicle zone is derived on load.
#[derive(Serialize, Deserialize)]
struct SiteFile {
    speed_limit_mps: f64,
    ssd_m: f64,
    crossing_time_s: f64,
    paths: SitePaths,
    crosswalk: CrosswalkFile,
}

#[derive(Serialize, Deserialize)]
struct SitePaths {
    pedestrian: Vec<[f64; 2]>,
    approach: Vec<[f64; 2]>,
    through: Vec<[f64; 2]>,
    left_turn: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct CrosswalkFile {
    s_min: f64,
    s_max: f64,
    half_width_m: f64,
    approach_s: f64,
    #[serde(default = "default_lane_half_width")]
    vehicle_half_width_m: f64,
}

fn default_lane_half_width() -> f64 {
    3.0
}

fn vertices_to_path(name: &str, verts: &[[f64; 2]]) -> Result<PathPolyline, EngineError> {
    let points: Result<Vec<GeoPoint>, GeodesyError> =
        verts.iter().map(|v| GeoPoint::new(v[0], v[1])).collect();
    let points = points.map_err(|e| EngineError::InvalidSite(format!("path {name}: {e}")))?;
    PathPolyline::new(points).map_err(|e| EngineError::InvalidSite(format!("path {name}: {e}")))
}

fn path_to_vertices(path: &PathPolyline) -> Vec<[f64; 2]> {
    path.vertices()
        .iter()
        .map(|p| [p.lat_deg, p.lon_deg])
        .collect()
}

impl Site {
    pub fn maneuver_path(&self, m: Maneuver) -> &PathPolyline {
        match m {
            Maneuver::Through => &self.through,
            Maneuver::LeftTurn => &self.left,
        }
    }

    /// Builds a site from parts, deriving the vehicle zone from the
    /// stopping-sight-distance rule and validating the path layout.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        ped_path: PathPolyline,
        approach: PathPolyline,
        through: PathPolyline,
        left: PathPolyline,
        crosswalk_span: (f64, f64),
        crosswalk_half_width_m: f64,
        vehicle_half_width_m: f64,
        crosswalk_approach_s: f64,
        speed_limit_mps: f64,
        ssd_m: f64,
        crossing_time_s: f64,
    ) -> Result<Self, EngineError> {
        let (final_m, start_m) = compute_vehicle_zone(ssd_m, speed_limit_mps, crossing_time_s)?;
        let veh_s_min = crosswalk_approach_s - start_m;
        let veh_s_max = crosswalk_approach_s - final_m;
        if veh_s_min < 0.0 {
            return Err(EngineError::InvalidSite(format!(
                "approach too short: zone start {veh_s_min} before the path"
            )));
        }
        let ped_zone = DetectionZone::new(
            AgentKind::Pedestrian,
            crosswalk_span.0,
            crosswalk_span.1,
            crosswalk_half_width_m,
            ped_path.total_len(),
        )?;
        let veh_zone = DetectionZone::new(
            AgentKind::Vehicle,
            veh_s_min,
            veh_s_max,
            vehicle_half_width_m,
            approach.total_len(),
        )?;
        let site = Self {
            ped_path,
            approach,
            through,
            left,
            ped_zone,
            veh_zone,
            crosswalk_approach_s,
            speed_limit_mps,
            ssd_m,
            crossing_time_s,
        };
        site.validate()?;
        Ok(site)
    }

    /// Checks that both maneuver paths start with the approach vertex for
    /// vertex and that the crosswalk sits on the approach.
    pub fn validate(&self) -> Result<(), EngineError> {
        for (name, path) in [("through", &self.through), ("left_turn", &self.left)] {
            let prefix = self.approach.vertices();
            if path.vertices().len() < prefix.len() || path.vertices()[..prefix.len()] != *prefix {
                return Err(EngineError::InvalidSite(format!(
                    "{name} path does not extend the approach"
                )));
            }
        }
        if !(0.0 < self.crosswalk_approach_s
            && self.crosswalk_approach_s <= self.approach.total_len())
        {
            return Err(EngineError::InvalidSite(
                "crosswalk lies outside the approach".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = SiteFile {
            speed_limit_mps: self.speed_limit_mps,
            ssd_m: self.ssd_m,
            crossing_time_s: self.crossing_time_s,
            paths: SitePaths {
                pedestrian: path_to_vertices(&self.ped_path),
                approach: path_to_vertices(&self.approach),
                through: path_to_vertices(&self.through),
                left_turn: path_to_vertices(&self.left),
            },
            crosswalk: CrosswalkFile {
                s_min: self.ped_zone.s_min,
                s_max: self.ped_zone.s_max,
                half_width_m: self.ped_zone.half_width_m,
                approach_s: self.crosswalk_approach_s,
                vehicle_half_width_m: self.veh_zone.half_width_m,
            },
        };
        serde_json::to_string_pretty(&file).expect("site serialization")
    }

    pub fn from_json(json: &str) -> Result<Self, EngineError> {
        let file: SiteFile =
            serde_json::from_str(json).map_err(|e| EngineError::InvalidSite(e.to_string()))?;
        Site::assemble(
            vertices_to_path("pedestrian", &file.paths.pedestrian)?,
            vertices_to_path("approach", &file.paths.approach)?,
            vertices_to_path("through", &file.paths.through)?,
            vertices_to_path("left_turn", &file.paths.left_turn)?,
            (file.crosswalk.s_min, file.crosswalk.s_max),
            file.crosswalk.half_width_m,
            file.crosswalk.vehicle_half_width_m,
            file.crosswalk.approach_s,
            file.speed_limit_mps,
            file.ssd_m,
            file.crossing_time_s,
        )
    }

    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        fs::write(path, self.to_json())
            .map_err(|e| EngineError::InvalidSite(format!("write {}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let json = fs::read_to_string(path)
            .map_err(|e| EngineError::InvalidSite(format!("read {}: {e}", path.display())))?;
        Self::from_json(&json)
    }
}

/// Gate verdict with the reason predictions were skipped.
#[derive(Clone, Debug, PartialEq)]
pub struct GateDecision {
    pub activated: bool,
    pub reason: Option<&'static str>,
}

/// The twin runs only when a pedestrian occupies the crosswalk zone and a
/// vehicle occupies the approach band.
pub fn gate(snapshot: &Snapshot, site: &Site) -> GateDecision {
    let ped_ok = snapshot
        .ped
        .latest()
        .is_some_and(|e| in_zone(&site.ped_zone, &e.fix));
    if !ped_ok {
        return GateDecision {
            activated: false,
            reason: Some("no pedestrian in zone"),
        };
    }
    let veh_ok = snapshot
        .veh
        .latest()
        .is_some_and(|e| in_zone(&site.veh_zone, &e.fix));
    if !veh_ok {
        return GateDecision {
            activated: false,
            reason: Some("no vehicle in zone"),
        };
    }
    GateDecision {
        activated: true,
        reason: None,
    }
}

/// Predicted arc-length increments for the pedestrian and both vehicle
/// hypotheses, plus the base arc lengths they extend.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioPredictions {
    pub t: f64,
    pub ped_base_s: f64,
    pub veh_base_s: f64,
    /// +1 or -1: the pedestrian's direction of travel along the path,
    /// taken from recent arc-length progress.
    pub ped_direction: f64,
    pub ped_increments: Vec<f64>,
    pub through_increments: Vec<f64>,
    pub left_increments: Vec<f64>,
}

fn ped_direction(track: &TrackState) -> f64 {
    let entries = track.entries();
    let Some(last) = entries.last() else {
        return 1.0;
    };
    for earlier in entries.iter().rev().skip(1) {
        let delta = last.fix.s - earlier.fix.s;
        if delta.abs() > 0.01 {
            return delta.signum();
        }
    }
    1.0
}

/// Three forward passes over the snapshot: the pedestrian model on the
/// resampled pedestrian window and both vehicle models on the vehicle
/// window.
pub fn predict_scenarios(
    snapshot: &Snapshot,
    ped_model: &EncoderDecoderModel,
    through_model: &EncoderDecoderModel,
    left_model: &EncoderDecoderModel,
) -> Result<ScenarioPredictions, EngineError> {
    let ped_window =
        build_feature_window(&snapshot.ped, ped_model.config.input_steps, &ped_model.norm)?;
    let ped_increments = ped_model.forward(&ped_window)?;

    let veh_window = build_feature_window(
        &snapshot.veh,
        through_model.config.input_steps,
        &through_model.norm,
    )?;
    let through_increments = through_model.forward(&veh_window)?;
    let left_window = build_feature_window(
        &snapshot.veh,
        left_model.config.input_steps,
        &left_model.norm,
    )?;
    let left_increments = left_model.forward(&left_window)?;

    Ok(ScenarioPredictions {
        t: snapshot.t,
        ped_base_s: snapshot.ped.latest().map_or(0.0, |e| e.fix.s),
        veh_base_s: snapshot.veh.latest().map_or(0.0, |e| e.fix.s),
        ped_direction: ped_direction(&snapshot.ped),
        ped_increments,
        through_increments,
        left_increments,
    })
}

/// Predicted (pedestrian, vehicle, vehicle heading) at step `k` of a
/// maneuver. Arc overshoot saturates at the path ends.
pub fn step_positions(
    preds: &ScenarioPredictions,
    site: &Site,
    maneuver: Maneuver,
    k: usize,
) -> (GeoPoint, GeoPoint, f64) {
    let incr = match maneuver {
        Maneuver::Through => &preds.through_increments,
        Maneuver::LeftTurn => &preds.left_increments,
    };
    let path = site.maneuver_path(maneuver);
    let veh_s = (preds.veh_base_s + incr[k - 1]).clamp(0.0, path.total_len());
    let veh = path.point_at(veh_s).expect("clamped arc length");

    let ped_s = (preds.ped_base_s + preds.ped_direction * preds.ped_increments[k - 1])
        .clamp(0.0, site.ped_path.total_len());
    let ped = site.ped_path.point_at(ped_s).expect("clamped arc length");
    (ped.point, veh.point, veh.heading_deg)
}

/// All 16 assessments (8 steps x 2 maneuvers) in fixed through-then-left,
/// ascending-step order. Pure over its inputs; results do not depend on
/// evaluation order.
pub fn evaluate_scenarios(
    preds: &ScenarioPredictions,
    site: &Site,
    params: &CrrParams,
) -> Vec<RiskAssessment> {
    let steps = preds.ped_increments.len();
    let mut out = Vec::with_capacity(2 * steps);
    for maneuver in Maneuver::ALL {
        for k in 1..=steps {
            let (ped, veh, veh_heading) = step_positions(preds, site, maneuver, k);
            out.push(assess_step(k, maneuver, veh, veh_heading, ped, params));
        }
    }
    out
}

/// A proactive warning: the earliest predicted crash step for one maneuver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub t_issued: f64,
    pub maneuver: Maneuver,
    pub k: usize,
    pub cre: f64,
    pub ped_lat: f64,
    pub ped_lon: f64,
    pub veh_lat: f64,
    pub veh_lon: f64,
}

/// Per maneuver: if any step crashes, one alert at the minimum crash step.
pub fn generate_alerts(
    assessments: &[RiskAssessment],
    preds: &ScenarioPredictions,
    site: &Site,
) -> Vec<Alert> {
    let mut alerts = Vec::new();
    for maneuver in Maneuver::ALL {
        let earliest = assessments
            .iter()
            .filter(|a| a.maneuver == maneuver && a.is_crash)
            .min_by_key(|a| a.step_k);
        if let Some(a) = earliest {
            let (ped, veh, _) = step_positions(preds, site, maneuver, a.step_k);
            alerts.push(Alert {
                t_issued: preds.t,
                maneuver,
                k: a.step_k,
                cre: a.cre,
                ped_lat: ped.lat_deg,
                ped_lon: ped.lon_deg,
                veh_lat: veh.lat_deg,
                veh_lon: veh.lon_deg,
            });
        }
    }
    alerts
}

/// One engine tick outcome. Exactly one event per tick; alert ticks carry
/// every alert raised in that tick (at most one per maneuver).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TwinEvent {
    GateSkipped {
        t: f64,
        reason: String,
    },
    Evaluated {
        t: f64,
        assessments: Vec<RiskAssessment>,
    },
    AlertIssued {
        t: f64,
        alerts: Vec<Alert>,
        assessments: Vec<RiskAssessment>,
    },
}

impl TwinEvent {
    pub fn t(&self) -> f64 {
        match self {
            TwinEvent::GateSkipped { t, .. }
            | TwinEvent::Evaluated { t, .. }
            | TwinEvent::AlertIssued { t, .. } => *t,
        }
    }

    pub fn alerts(&self) -> &[Alert] {
        match self {
            TwinEvent::AlertIssued { alerts, .. } => alerts,
            _ => &[],
        }
    }

    pub fn assessments(&self) -> &[RiskAssessment] {
        match self {
            TwinEvent::Evaluated { assessments, .. }
            | TwinEvent::AlertIssued { assessments, .. } => assessments,
            TwinEvent::GateSkipped { .. } => &[],
        }
    }
}

/// The three predictors keyed by role.
pub struct ModelSet {
    pub pedestrian: EncoderDecoderModel,
    pub through: EncoderDecoderModel,
    pub left: EncoderDecoderModel,
}

impl ModelSet {
    fn validate(&self) -> Result<(), EngineError> {
        for (expected, model) in [
            (Role::Pedestrian, &self.pedestrian),
            (Role::VehicleThrough, &self.through),
            (Role::VehicleLeft, &self.left),
        ] {
            if model.role != expected {
                return Err(EngineError::RoleMismatch {
                    expected,
                    got: model.role,
                });
            }
        }
        Ok(())
    }
}

/// Single-writer engine state: the site, the risk parameters, the three
/// predictors, and both live tracks.
pub struct TwinEngine {
    site: Site,
    params: CrrParams,
    models: ModelSet,
    tol_s: f64,
    ped_track: TrackState,
    veh_track: TrackState,
}

impl TwinEngine {
    pub fn new(site: Site, models: ModelSet, params: CrrParams) -> Result<Self, EngineError> {
        site.validate()?;
        models.validate()?;
        Ok(Self {
            ped_track: TrackState::new("pedestrian", AgentKind::Pedestrian, 0.2),
            veh_track: TrackState::new("vehicle", AgentKind::Vehicle, 1.0),
            tol_s: 0.5,
            site,
            params,
            models,
        })
    }

    pub fn site(&self) -> &Site {
        &self.site
    }

    /// One tick: appends the tick's records, forms a snapshot, gates,
    /// predicts, evaluates, and alerts. Ingest problems surface as a
    /// gate-skip event for the tick instead of aborting a replay.
    pub fn step(&mut self, t: f64, records: &[SensorRecord]) -> TwinEvent {
        for r in records {
            let result = match r.kind {
                AgentKind::Pedestrian => self.ped_track.append(r.clone(), &self.site.ped_path),
                // The through path extends the approach, so one projection
                // serves both maneuver hypotheses upstream of the junction.
                AgentKind::Vehicle => self.veh_track.append(r.clone(), &self.site.through),
            };
            if let Err(e) = result {
                return TwinEvent::GateSkipped {
                    t,
                    reason: format!("ingest: {e}"),
                };
            }
        }

        let snapshot = match snapshot_at(&self.ped_track, &self.veh_track, t, self.tol_s) {
            Ok(s) => s,
            Err(e) => {
                return TwinEvent::GateSkipped {
                    t,
                    reason: format!("alignment: {e}"),
                }
            }
        };

        let decision = gate(&snapshot, &self.site);
        if !decision.activated {
            return TwinEvent::GateSkipped {
                t,
                reason: decision.reason.unwrap_or("gate closed").to_string(),
            };
        }

        let preds = match predict_scenarios(
            &snapshot,
            &self.models.pedestrian,
            &self.models.through,
            &self.models.left,
        ) {
            Ok(p) => p,
            Err(e) => {
                return TwinEvent::GateSkipped {
                    t,
                    reason: format!("prediction: {e}"),
                }
            }
        };

        let assessments = evaluate_scenarios(&preds, &self.site, &self.params);
        let alerts = generate_alerts(&assessments, &preds, &self.site);
        if alerts.is_empty() {
            TwinEvent::Evaluated { t, assessments }
        } else {
            TwinEvent::AlertIssued {
                t,
                alerts,
                assessments,
            }
        }
    }

    /// Replays merged sensor streams, ticking at each vehicle record and
    /// feeding every record timestamped at or before the tick.
    pub fn replay(&mut self, records: &[SensorRecord]) -> Vec<TwinEvent> {
        let mut ordered: Vec<&SensorRecord> = records.iter().collect();
        ordered.sort_by(|a, b| a.t.partial_cmp(&b.t).expect("finite timestamps"));

        let mut events = Vec::new();
        let mut pending: Vec<SensorRecord> = Vec::new();
        for r in ordered {
            let is_tick = r.kind == AgentKind::Vehicle;
            pending.push(r.clone());
            if is_tick {
                let t = pending.last().expect("just pushed").t;
                events.push(self.step(t, &pending));
                pending.clear();
            }
        }
        events
    }
}

/// Per-maneuver rollup of a replay's alerts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ManeuverSummary {
    pub alerts: usize,
    pub earliest_k: Option<usize>,
    pub max_cre: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub ticks: usize,
    pub gate_skipped: usize,
    pub evaluated: usize,
    pub alert_ticks: usize,
    pub through: ManeuverSummary,
    pub left_turn: ManeuverSummary,
}

pub fn summarize(events: &[TwinEvent]) -> ReplaySummary {
    let mut summary = ReplaySummary {
        ticks: events.len(),
        gate_skipped: 0,
        evaluated: 0,
        alert_ticks: 0,
        through: ManeuverSummary::default(),
        left_turn: ManeuverSummary::default(),
    };
    for event in events {
        match event {
            TwinEvent::GateSkipped { .. } => summary.gate_skipped += 1,
            TwinEvent::Evaluated { .. } => summary.evaluated += 1,
            TwinEvent::AlertIssued { alerts, .. } => {
                summary.alert_ticks += 1;
                for alert in alerts {
                    let entry = match alert.maneuver {
                        Maneuver::Through => &mut summary.through,
                        Maneuver::LeftTurn => &mut summary.left_turn,
                    };
                    entry.alerts += 1;
                    entry.earliest_k = Some(entry.earliest_k.map_or(alert.k, |k| k.min(alert.k)));
                    entry.max_cre = Some(entry.max_cre.map_or(alert.cre, |c| c.max(alert.cre)));
                }
            }
        }
    }
    summary
}

/// Serializes events as JSON Lines with stable field order.
pub fn events_to_jsonl(events: &[TwinEvent]) -> String {
    let mut out = String::new();
    for event in events {
        out.push_str(&serde_json::to_string(event).expect("event serialization"));
        out.push('\n');
    }
    out
}

pub fn events_from_jsonl(text: &str) -> Result<Vec<TwinEvent>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
