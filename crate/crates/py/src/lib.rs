//! Python bindings for the crosswalk digital-twin engine.
//!
//! Exposes the geodesy and risk primitives, the vehicle detection-zone
//! rule, and the encoder-decoder predictor (train, predict, save, load)
//! as an extension module.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use crosswalk_twin::geodesy::{self, GeoPoint};
use crosswalk_twin::ingest::{self, FeatureWindow, FEATURE_COUNT};
use crosswalk_twin::predictor::{self, Dataset, EncoderDecoderModel, ModelConfig, Role};
use crosswalk_twin::risk;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn point(lat: f64, lon: f64) -> PyResult<GeoPoint> {
    GeoPoint::new(lat, lon).map_err(value_err)
}

/// Great-circle distance in meters between two lat/lon pairs (degrees).
#[pyfunction]
fn haversine_distance(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> PyResult<f64> {
    Ok(geodesy::haversine_distance(
        point(lat1, lon1)?,
        point(lat2, lon2)?,
    ))
}

/// Initial great-circle bearing in degrees [0, 360); 0 = north, 90 = east.
#[pyfunction]
fn bearing(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> PyResult<f64> {
    geodesy::bearing(point(lat1, lon1)?, point(lat2, lon2)?).map_err(value_err)
}

/// Risk-sector half-angle in degrees: arctangent(width / stop distance).
#[pyfunction]
fn crr_half_angle(vehicle_width_m: f64, stop_distance_m: f64) -> PyResult<f64> {
    risk::crr_half_angle(vehicle_width_m, stop_distance_m).map_err(value_err)
}

/// Collision risk estimate: stop distance over vehicle-pedestrian distance.
#[pyfunction]
fn compute_cre(stop_distance_m: f64, ped_veh_distance_m: f64) -> PyResult<f64> {
    risk::compute_cre(stop_distance_m, ped_veh_distance_m).map_err(value_err)
}

/// Whether a pedestrian at the given range and heading-relative bearing
/// lies inside the collision risk region.
#[pyfunction]
#[pyo3(signature = (distance_m, bearing_offset_deg, stop_distance_m=16.95, vehicle_width_m=2.6))]
fn in_crr(
    distance_m: f64,
    bearing_offset_deg: f64,
    stop_distance_m: f64,
    vehicle_width_m: f64,
) -> PyResult<bool> {
    let params = risk::CrrParams::new(stop_distance_m, vehicle_width_m).map_err(value_err)?;
    Ok(risk::in_crr(
        risk::RelativeGeometry {
            distance_m,
            bearing_offset_deg,
        },
        &params,
    ))
}

/// Vehicle detection-zone bounds as distances before the crosswalk:
/// returns (final_m, start_m).
#[pyfunction]
fn compute_vehicle_zone(ssd_m: f64, speed_mps: f64, crossing_time_s: f64) -> PyResult<(f64, f64)> {
    ingest::compute_vehicle_zone(ssd_m, speed_mps, crossing_time_s).map_err(value_err)
}

fn rows_to_window(rows: Vec<Vec<f64>>) -> PyResult<FeatureWindow> {
    let mut values = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != FEATURE_COUNT {
            return Err(PyValueError::new_err(format!(
                "row {i} has {} features, expected {FEATURE_COUNT}",
                row.len()
            )));
        }
        values.push(std::array::from_fn(|j| row[j]));
    }
    Ok(FeatureWindow {
        values,
        normalized: false,
    })
}

/// An encoder-decoder distance predictor.
#[pyclass]
struct Model {
    inner: EncoderDecoderModel,
}

#[pymethods]
impl Model {
    /// Load a model from its JSON file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = predictor::load_model(std::path::Path::new(path)).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        predictor::save_model(&self.inner, std::path::Path::new(path)).map_err(value_err)
    }

    /// The model role: "pedestrian", "vehicle_through", or "vehicle_left".
    #[getter]
    fn role(&self) -> &'static str {
        self.inner.role.as_str()
    }

    #[getter]
    fn input_steps(&self) -> usize {
        self.inner.config.input_steps
    }

    /// Predicted traveled distances (meters) for the next 8 one-second
    /// steps, from raw (unnormalized) feature rows in the order
    /// speed, ax, ay, az, gx, gy, gz, distance.
    fn predict(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let window = self.inner.norm.normalize_window(&rows_to_window(rows)?);
        self.inner.forward(&window).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(role={}, input_steps={}, output_steps={})",
            self.inner.role.as_str(),
            self.inner.config.input_steps,
            self.inner.config.output_steps
        )
    }
}

/// Train a predictor on raw windows and meter-space targets.
///
/// Returns (model, final_rmse_m). Deterministic for a given seed.
#[pyfunction]
#[pyo3(signature = (role, windows, targets, epochs=60, seed=7, units=(16, 16, 8), batch_size=16, split=0.8))]
#[allow(clippy::too_many_arguments)]
fn train_model(
    role: &str,
    windows: Vec<Vec<Vec<f64>>>,
    targets: Vec<Vec<f64>>,
    epochs: usize,
    seed: u64,
    units: (usize, usize, usize),
    batch_size: usize,
    split: f64,
) -> PyResult<(Model, f64)> {
    let role =
        Role::parse(role).ok_or_else(|| PyValueError::new_err(format!("unknown role {role:?}")))?;
    let mut dataset = Dataset::default();
    for (rows, t) in windows.into_iter().zip(targets) {
        dataset.push(rows_to_window(rows)?, t);
    }
    let config = ModelConfig {
        epochs,
        seed,
        batch_size,
        ..ModelConfig::reduced(role, units.0, units.1, units.2)
    };
    let (inner, report) = predictor::train(role, &config, &dataset, split).map_err(value_err)?;
    Ok((Model { inner }, report.final_rmse_m))
}

#[pymodule]
fn crosswalk_twin_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("FEATURE_COUNT", FEATURE_COUNT)?;
    m.add_function(wrap_pyfunction!(haversine_distance, m)?)?;
    m.add_function(wrap_pyfunction!(bearing, m)?)?;
    m.add_function(wrap_pyfunction!(crr_half_angle, m)?)?;
    m.add_function(wrap_pyfunction!(compute_cre, m)?)?;
    m.add_function(wrap_pyfunction!(in_crr, m)?)?;
    m.add_function(wrap_pyfunction!(compute_vehicle_zone, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
