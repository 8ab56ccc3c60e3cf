//! A deterministic digital-twin engine for proactive vehicle-pedestrian
//! collision alerts.
//!
//! The pipeline mirrors a physical scene onto predefined paths (map
//! matching over Haversine geodesy), predicts each agent's traveled
//! distance with encoder-decoder LSTMs, evaluates every vehicle maneuver
//! against a collision-risk-region rule in parallel, and emits proactive
//! alerts. A scenario generator produces synthetic training corpora and
//! replayable encounters with ground truth for oracle checks.

pub mod cli;
pub mod engine;
pub mod geodesy;
pub mod ingest;
pub mod predictor;
pub mod risk;
pub mod scenario;

pub use engine::{Alert, ScenarioPredictions, Site, TwinEngine, TwinEvent};
pub use geodesy::{GeoPoint, PathFix, PathPolyline};
pub use ingest::{AgentKind, DetectionZone, FeatureWindow, SensorRecord, Snapshot, TrackState};
pub use predictor::{EncoderDecoderModel, ModelConfig, NormParams, Role, TrainReport};
pub use risk::{CrrParams, Maneuver, RiskAssessment};
pub use scenario::GenConfig;
