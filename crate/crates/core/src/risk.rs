//! Collision-risk-region geometry and the collision-risk-estimate rule.
//!
//! The risk region is a circular sector ahead of the vehicle with radius
//! equal to the typical stop distance and half-angle derived from the
//! vehicle width. The risk estimate divides the stop distance by the
//! current vehicle-pedestrian distance; values above 1 flag a crash risk.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{bearing, haversine_distance, normalize_bearing_offset, GeoPoint};

#[derive(Error, Debug, PartialEq)]
pub enum RiskError {
    #[error("non-positive input: {0}")]
    NonPositiveInput(&'static str),
    #[error("zero vehicle-pedestrian distance")]
    ZeroDistance,
}

/// The vehicle maneuver a prediction or assessment refers to.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    Through,
    LeftTurn,
}

impl Maneuver {
    pub const ALL: [Maneuver; 2] = [Maneuver::Through, Maneuver::LeftTurn];

    pub fn as_str(self) -> &'static str {
        match self {
            Maneuver::Through => "through",
            Maneuver::LeftTurn => "left_turn",
        }
    }
}

/// Risk-region parameters: sector radius (stop distance), vehicle width,
/// and the derived sector half-angle.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrrParams {
    pub stop_distance_m: f64,
    pub vehicle_width_m: f64,
    pub half_angle_deg: f64,
}

impl CrrParams {
    pub fn new(stop_distance_m: f64, vehicle_width_m: f64) -> Result<Self, RiskError> {
        Ok(Self {
            stop_distance_m,
            vehicle_width_m,
            half_angle_deg: crr_half_angle(vehicle_width_m, stop_distance_m)?,
        })
    }
}

impl Default for CrrParams {
    /// 25 mph defaults: 16.95 m stop distance, 2.6 m vehicle width.
    fn default() -> Self {
        Self::new(16.95, 2.6).unwrap()
    }
}

/// Sector half-angle in degrees: arctangent(width / stop distance).
pub fn crr_half_angle(vehicle_width_m: f64, stop_distance_m: f64) -> Result<f64, RiskError> {
    // Positive-and-finite checks; NaN fails both.
    let width_ok = vehicle_width_m.is_finite() && vehicle_width_m > 0.0;
    if !width_ok {
        return Err(RiskError::NonPositiveInput("vehicle_width_m"));
    }
    let stop_ok = stop_distance_m.is_finite() && stop_distance_m > 0.0;
    if !stop_ok {
        return Err(RiskError::NonPositiveInput("stop_distance_m"));
    }
    Ok((vehicle_width_m / stop_distance_m).atan().to_degrees())
}

/// Vehicle-relative position of the pedestrian: straight-line distance and
/// the bearing offset from the vehicle heading, signed positive to the right.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativeGeometry {
    pub distance_m: f64,
    pub bearing_offset_deg: f64,
}

/// Distance and heading-relative bearing from the vehicle to the pedestrian.
/// Coincident positions yield (0, 0) by convention.
pub fn relative_geometry(
    vehicle_pos: GeoPoint,
    vehicle_heading_deg: f64,
    ped_pos: GeoPoint,
) -> RelativeGeometry {
    if vehicle_pos == ped_pos {
        return RelativeGeometry {
            distance_m: 0.0,
            bearing_offset_deg: 0.0,
        };
    }
    let distance_m = haversine_distance(vehicle_pos, ped_pos);
    let to_ped = bearing(vehicle_pos, ped_pos).expect("distinct positions");
    RelativeGeometry {
        distance_m,
        bearing_offset_deg: normalize_bearing_offset(to_ped - vehicle_heading_deg),
    }
}

/// True iff the pedestrian lies inside the risk sector. Both the radius and
/// the half-angle boundaries are inclusive.
pub fn in_crr(geom: RelativeGeometry, params: &CrrParams) -> bool {
    geom.distance_m <= params.stop_distance_m
        && geom.bearing_offset_deg.abs() <= params.half_angle_deg
}

/// Collision risk estimate: stop distance divided by vehicle-pedestrian
/// distance. Zero distance is an error; callers treat it as maximal risk.
pub fn compute_cre(stop_distance_m: f64, ped_veh_distance_m: f64) -> Result<f64, RiskError> {
    if ped_veh_distance_m == 0.0 {
        return Err(RiskError::ZeroDistance);
    }
    Ok(stop_distance_m / ped_veh_distance_m)
}

/// One future-step crash verdict.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub step_k: usize,
    pub maneuver: Maneuver,
    pub geometry: RelativeGeometry,
    pub in_crr: bool,
    pub cre: f64,
    pub is_crash: bool,
}

/// Assesses one predicted future step. A crash requires sector containment
/// and a risk estimate strictly above 1; coincident positions count as a
/// crash with an infinite estimate.
pub fn assess_step(
    step_k: usize,
    maneuver: Maneuver,
    vehicle_pos: GeoPoint,
    vehicle_heading_deg: f64,
    ped_pos: GeoPoint,
    params: &CrrParams,
) -> RiskAssessment {
    let geometry = relative_geometry(vehicle_pos, vehicle_heading_deg, ped_pos);
    assess_geometry(step_k, maneuver, geometry, params)
}

/// Verdict for an already-computed relative geometry.
pub fn assess_geometry(
    step_k: usize,
    maneuver: Maneuver,
    geometry: RelativeGeometry,
    params: &CrrParams,
) -> RiskAssessment {
    let contained = in_crr(geometry, params);
    let cre = match compute_cre(params.stop_distance_m, geometry.distance_m) {
        Ok(v) => v,
        Err(RiskError::ZeroDistance) => f64::INFINITY,
        Err(_) => unreachable!(),
    };
    RiskAssessment {
        step_k,
        maneuver,
        geometry,
        in_crr: contained,
        cre,
        is_crash: contained && cre > 1.0,
    }
}
