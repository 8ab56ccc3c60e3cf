//! Spherical geodesy primitives: Haversine distance, initial bearing,
//! arc-length parametrized polylines, and nearest-segment map matching.
//!
//! All distances are meters on a sphere of radius [`EARTH_RADIUS_M`]; angles
//! are degrees. Everything here is a pure function over immutable values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Error, Debug, PartialEq)]
pub enum GeodesyError {
    #[error("invalid coordinate: lat {lat}, lon {lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("negative arc length: {0}")]
    NegativeArcLength(f64),
}

/// A geographic position in degrees.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl GeoPoint {
    /// Validates latitude in [-90, 90] and longitude in [-180, 180].
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<Self, GeodesyError> {
        if !lat_deg.is_finite()
            || !lon_deg.is_finite()
            || !(-90.0..=90.0).contains(&lat_deg)
            || !(-180.0..=180.0).contains(&lon_deg)
        {
            return Err(GeodesyError::InvalidCoordinate {
                lat: lat_deg,
                lon: lon_deg,
            });
        }
        Ok(Self { lat_deg, lon_deg })
    }
}

/// Great-circle distance in meters between two points (Haversine formula).
pub fn haversine_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat1 = a.lat_deg.to_radians();
    let lat2 = b.lat_deg.to_radians();
    let d_lat = (b.lat_deg - a.lat_deg).to_radians();
    let d_lon = (b.lon_deg - a.lon_deg).to_radians();

    let sin_lat = (d_lat * 0.5).sin();
    let sin_lon = (d_lon * 0.5).sin();
    let h = sin_lat * sin_lat + lat1.cos() * lat2.cos() * sin_lon * sin_lon;
    // Clamp guards rounding that could push h a hair outside [0, 1].
    let h = h.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_M * h.sqrt().atan2((1.0 - h).sqrt())
}

/// Initial great-circle bearing from `a` to `b` in degrees [0, 360);
/// 0 = north, 90 = east.
pub fn bearing(a: GeoPoint, b: GeoPoint) -> Result<f64, GeodesyError> {
    if a == b {
        return Err(GeodesyError::DegenerateInput(
            "bearing of coincident points".into(),
        ));
    }
    let lat1 = a.lat_deg.to_radians();
    let lat2 = b.lat_deg.to_radians();
    let d_lon = (b.lon_deg - a.lon_deg).to_radians();

    let y = d_lon.sin() * lat2.cos();
    let x = lat1.cos() * lat2.sin() - lat1.sin() * lat2.cos() * d_lon.cos();
    Ok(y.atan2(x).to_degrees().rem_euclid(360.0))
}

/// Normalizes an angle difference to (-180, 180].
pub fn normalize_bearing_offset(deg: f64) -> f64 {
    let mut d = deg.rem_euclid(360.0);
    if d > 180.0 {
        d -= 360.0;
    }
    d
}

/// A position matched onto a path: arc length, signed lateral offset
/// (positive = right of travel direction), and the path tangent bearing.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathFix {
    pub s: f64,
    pub lateral_offset_m: f64,
    pub heading_deg: f64,
}

/// Interpolated point on a path. `saturated` flags an arc length that was
/// clamped to the path end.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PathPoint {
    pub point: GeoPoint,
    pub heading_deg: f64,
    pub saturated: bool,
}

/// A geodesic polyline with a cumulative arc-length table.
#[derive(Clone, Debug, PartialEq)]
pub struct PathPolyline {
    vertices: Vec<GeoPoint>,
    cum_s: Vec<f64>,
}

impl PathPolyline {
    /// Builds the cumulative arc-length table by accumulating Haversine
    /// distances over consecutive vertices.
    pub fn new(vertices: Vec<GeoPoint>) -> Result<Self, GeodesyError> {
        if vertices.len() < 2 {
            return Err(GeodesyError::DegenerateInput(
                "path needs at least 2 vertices".into(),
            ));
        }
        let mut cum_s = Vec::with_capacity(vertices.len());
        cum_s.push(0.0);
        for pair in vertices.windows(2) {
            if pair[0] == pair[1] {
                return Err(GeodesyError::DegenerateInput(
                    "consecutive duplicate vertices".into(),
                ));
            }
            let d = haversine_distance(pair[0], pair[1]);
            if d <= 0.0 {
                return Err(GeodesyError::DegenerateInput("zero-length segment".into()));
            }
            cum_s.push(cum_s.last().unwrap() + d);
        }
        Ok(Self { vertices, cum_s })
    }

    pub fn vertices(&self) -> &[GeoPoint] {
        &self.vertices
    }

    pub fn cum_s(&self) -> &[f64] {
        &self.cum_s
    }

    /// Total arc length in meters.
    pub fn total_len(&self) -> f64 {
        *self.cum_s.last().unwrap()
    }

    /// Projects `p` onto the nearest segment and returns the matched fix.
    ///
    /// Each segment is treated in a local equirectangular tangent plane
    /// centered at its start vertex (sub-centimeter error at sub-kilometer
    /// scene scale). Ties break toward the smaller arc length.
    pub fn project(&self, p: GeoPoint) -> PathFix {
        let mut best_d2 = f64::INFINITY;
        let mut best = PathFix {
            s: 0.0,
            lateral_offset_m: 0.0,
            heading_deg: 0.0,
        };
        for i in 0..self.vertices.len() - 1 {
            let a = self.vertices[i];
            let b = self.vertices[i + 1];
            let (bx, by) = local_plane(a, b);
            let (px, py) = local_plane(a, p);
            let seg_d2 = bx * bx + by * by;
            let t = ((px * bx + py * by) / seg_d2).clamp(0.0, 1.0);
            let dx = px - t * bx;
            let dy = py - t * by;
            let d2 = dx * dx + dy * dy;
            if d2 < best_d2 {
                best_d2 = d2;
                // Right of travel direction is the -90 degree rotation of
                // the segment vector, so the sign comes from dot(w, (by, -bx)).
                let cross = dx * by - dy * bx;
                let offset = cross.signum() * d2.sqrt();
                let offset = if d2 == 0.0 { 0.0 } else { offset };
                best = PathFix {
                    s: self.cum_s[i] + t * (self.cum_s[i + 1] - self.cum_s[i]),
                    lateral_offset_m: offset,
                    heading_deg: bearing(a, b).expect("non-degenerate segment"),
                };
            }
        }
        best
    }

    /// Point and tangent heading at arc length `s`.
    ///
    /// `s` beyond the path end clamps to the end and sets `saturated`;
    /// negative `s` is an error.
    pub fn point_at(&self, s: f64) -> Result<PathPoint, GeodesyError> {
        if s < 0.0 {
            return Err(GeodesyError::NegativeArcLength(s));
        }
        let total = self.total_len();
        if s >= total {
            let n = self.vertices.len();
            return Ok(PathPoint {
                point: self.vertices[n - 1],
                heading_deg: bearing(self.vertices[n - 2], self.vertices[n - 1])
                    .expect("non-degenerate segment"),
                saturated: s > total,
            });
        }
        // Last index with cum_s[i] <= s; s < total guarantees i < n-1.
        let i = match self
            .cum_s
            .binary_search_by(|v| v.partial_cmp(&s).expect("finite arc table"))
        {
            Ok(i) => i.min(self.vertices.len() - 2),
            Err(ins) => ins - 1,
        };
        let a = self.vertices[i];
        let b = self.vertices[i + 1];
        let f = (s - self.cum_s[i]) / (self.cum_s[i + 1] - self.cum_s[i]);
        Ok(PathPoint {
            point: GeoPoint {
                lat_deg: a.lat_deg + f * (b.lat_deg - a.lat_deg),
                lon_deg: a.lon_deg + f * (b.lon_deg - a.lon_deg),
            },
            heading_deg: bearing(a, b).expect("non-degenerate segment"),
            saturated: false,
        })
    }

    /// Offsets the point at arc length `s` perpendicular to the path tangent;
    /// positive offsets move right of the travel direction.
    pub fn offset_point(&self, s: f64, lateral_m: f64) -> Result<GeoPoint, GeodesyError> {
        let at = self.point_at(s)?;
        let heading = (at.heading_deg + 90.0).to_radians();
        let dn = lateral_m * heading.cos();
        let de = lateral_m * heading.sin();
        let lat = at.point.lat_deg + (dn / EARTH_RADIUS_M).to_degrees();
        let lon = at.point.lon_deg
            + (de / (EARTH_RADIUS_M * at.point.lat_deg.to_radians().cos())).to_degrees();
        Ok(GeoPoint {
            lat_deg: lat,
            lon_deg: lon,
        })
    }
}

/// East/north meters of `p` in the tangent plane centered at `origin`.
fn local_plane(origin: GeoPoint, p: GeoPoint) -> (f64, f64) {
    let east = (p.lon_deg - origin.lon_deg).to_radians()
        * EARTH_RADIUS_M
        * origin.lat_deg.to_radians().cos();
    let north = (p.lat_deg - origin.lat_deg).to_radians() * EARTH_RADIUS_M;
    (east, north)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gp(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    /// One degree of equatorial arc: pi * R / 180.
    fn equatorial_degree_m() -> f64 {
        std::f64::consts::PI * EARTH_RADIUS_M / 180.0
    }

    /// Independent oracle: spherical law of cosines at the same radius.
    fn slc_distance(a: GeoPoint, b: GeoPoint) -> f64 {
        let (p1, p2) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
        let dl = (b.lon_deg - a.lon_deg).to_radians();
        let c = (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).clamp(-1.0, 1.0);
        EARTH_RADIUS_M * c.acos()
    }

    #[test]
    fn haversine_identical_points_is_zero() {
        let p = gp(33.0, -87.0);
        assert_eq!(haversine_distance(p, p), 0.0);
    }

    #[test]
    fn haversine_equatorial_degree() {
        let d = haversine_distance(gp(0.0, 0.0), gp(0.0, 1.0));
        assert!((d - equatorial_degree_m()).abs() < 0.01, "got {d}");
        assert!((d - 111_194.93).abs() < 0.01);
    }

    #[test]
    fn haversine_matches_law_of_cosines_oracle() {
        let a = gp(33.214, -87.545);
        let b = gp(33.214, -87.544);
        let d = haversine_distance(a, b);
        assert!((d - slc_distance(a, b)).abs() < 0.05, "got {d}");
        assert!((d - 93.04).abs() < 0.05, "got {d}");
    }

    #[test]
    fn haversine_is_symmetric() {
        let pairs = [
            (gp(0.0, 0.0), gp(0.0, 1.0)),
            (gp(33.214, -87.545), gp(33.209, -87.541)),
            (gp(-45.0, 170.0), gp(-44.0, 171.0)),
            (gp(89.0, 10.0), gp(88.0, -10.0)),
        ];
        for (a, b) in pairs {
            assert_eq!(haversine_distance(a, b), haversine_distance(b, a));
        }
    }

    #[test]
    fn bearing_cardinal_directions() {
        assert!((bearing(gp(0.0, 0.0), gp(1.0, 0.0)).unwrap() - 0.0).abs() < 1e-9);
        assert!((bearing(gp(0.0, 0.0), gp(0.0, 1.0)).unwrap() - 90.0).abs() < 1e-9);
        assert!((bearing(gp(10.0, 10.0), gp(9.0, 10.0)).unwrap() - 180.0).abs() < 1e-6);
    }

    #[test]
    fn bearing_of_coincident_points_is_degenerate() {
        let p = gp(5.0, 5.0);
        assert!(matches!(
            bearing(p, p),
            Err(GeodesyError::DegenerateInput(_))
        ));
    }

    #[test]
    fn bearing_reverses_mod_180() {
        for (a, b) in [
            (gp(0.0, 0.0), gp(0.0, 1.0)),
            (gp(10.0, 10.0), gp(9.0, 10.0)),
            (gp(0.0, -3.0), gp(0.0, 4.0)),
        ] {
            let fwd = bearing(a, b).unwrap();
            let back = bearing(b, a).unwrap();
            let diff = normalize_bearing_offset(back - fwd).abs();
            assert!((diff - 180.0).abs() < 1e-6, "fwd {fwd} back {back}");
        }
    }

    #[test]
    fn build_path_accumulates_arc_length() {
        let path = PathPolyline::new(vec![gp(0.0, 0.0), gp(0.0, 1.0)]).unwrap();
        assert!((path.total_len() - equatorial_degree_m()).abs() < 0.01);

        let three = PathPolyline::new(vec![gp(0.0, 0.0), gp(0.0, 1.0), gp(0.0, 2.0)]).unwrap();
        let d = equatorial_degree_m();
        assert!((three.cum_s()[1] - d).abs() < 1e-6);
        assert!((three.cum_s()[2] - 2.0 * d).abs() < 1e-6);
    }

    #[test]
    fn build_path_rejects_degenerate_inputs() {
        assert!(matches!(
            PathPolyline::new(vec![gp(0.0, 0.0)]),
            Err(GeodesyError::DegenerateInput(_))
        ));
        assert!(matches!(
            PathPolyline::new(vec![gp(0.0, 0.0), gp(0.0, 0.0), gp(0.0, 1.0)]),
            Err(GeodesyError::DegenerateInput(_))
        ));
    }

    #[test]
    fn cum_s_strictly_increasing_and_consistent() {
        let path = PathPolyline::new(vec![
            gp(33.210, -87.545),
            gp(33.211, -87.545),
            gp(33.212, -87.544),
            gp(33.213, -87.544),
        ])
        .unwrap();
        for i in 0..path.vertices().len() - 1 {
            let seg = path.cum_s()[i + 1] - path.cum_s()[i];
            let d = haversine_distance(path.vertices()[i], path.vertices()[i + 1]);
            assert!(seg > 0.0);
            assert!((seg - d).abs() <= 1e-9 * d.max(1.0));
        }
    }

    #[test]
    fn project_vertex_and_midpoint() {
        let path = PathPolyline::new(vec![gp(0.0, 0.0), gp(0.0, 0.01), gp(0.0, 0.02)]).unwrap();
        let at_start = path.project(gp(0.0, 0.0));
        assert_eq!(at_start.s, 0.0);
        assert_eq!(at_start.lateral_offset_m, 0.0);

        let mid = path.project(gp(0.0, 0.005));
        assert!((mid.s - path.cum_s()[1] / 2.0).abs() < 0.01);
        assert!(mid.lateral_offset_m.abs() < 0.01);
    }

    #[test]
    fn project_reports_signed_lateral_offset() {
        // Path heads east along the equator; right of travel is south.
        let path = PathPolyline::new(vec![gp(0.0, 0.0), gp(0.0, 0.01)]).unwrap();
        let mid_s = path.total_len() / 2.0;
        let right = path.offset_point(mid_s, 3.0).unwrap();
        let fix = path.project(right);
        assert!((fix.s - mid_s).abs() < 0.05, "s {} vs {}", fix.s, mid_s);
        assert!((fix.lateral_offset_m - 3.0).abs() < 0.05, "{fix:?}");

        let left = path.offset_point(mid_s, -3.0).unwrap();
        let fix = path.project(left);
        assert!((fix.lateral_offset_m + 3.0).abs() < 0.05, "{fix:?}");
    }

    #[test]
    fn point_at_endpoints_and_midpoint() {
        let path = PathPolyline::new(vec![gp(0.0, 0.0), gp(0.0, 0.02)]).unwrap();
        let start = path.point_at(0.0).unwrap();
        assert_eq!(start.point, gp(0.0, 0.0));
        assert!(!start.saturated);

        let end = path.point_at(path.total_len()).unwrap();
        assert_eq!(end.point, gp(0.0, 0.02));
        assert!(!end.saturated);

        let mid = path.point_at(path.cum_s()[1] / 2.0).unwrap();
        assert!((mid.point.lon_deg - 0.01).abs() < 1e-7);
        assert!((mid.heading_deg - 90.0).abs() < 1e-6);
    }

    #[test]
    fn point_at_clamps_overshoot_and_rejects_negative() {
        let path = PathPolyline::new(vec![gp(0.0, 0.0), gp(0.0, 0.01)]).unwrap();
        let over = path.point_at(path.total_len() + 50.0).unwrap();
        assert!(over.saturated);
        assert_eq!(over.point, gp(0.0, 0.01));

        assert!(matches!(
            path.point_at(-0.1),
            Err(GeodesyError::NegativeArcLength(_))
        ));
    }

    #[test]
    fn project_point_at_round_trip() {
        let path = PathPolyline::new(vec![
            gp(0.0, 0.0),
            gp(0.001, 0.001),
            gp(0.002, 0.0015),
            gp(0.0025, 0.003),
        ])
        .unwrap();
        let total = path.total_len();
        for i in 0..=40 {
            let s = total * i as f64 / 40.0;
            let p = path.point_at(s).unwrap().point;
            let fix = path.project(p);
            assert!((fix.s - s).abs() < 0.05, "s {s}: projected {}", fix.s);
            assert!(fix.lateral_offset_m.abs() < 0.05);
        }
    }
}
