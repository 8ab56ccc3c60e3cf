//! Deterministic synthetic data factory: a crosswalk site, kinematic
//! pedestrian and vehicle trajectories with configurable noise, training
//! corpora for all three predictor roles, and staged encounters with
//! ground-truth futures for oracle checks.
//!
//! Local layout (meters east/north of the junction): the vehicle approaches
//! from the south along a meridian, continues north (through) or sweeps a
//! quarter circle to the west (left turn). The crosswalk crosses the
//! approach a few meters before the junction; the pedestrian walks it west
//! to east with a lead-in and trail-out outside the detection zone.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, Site};
use crate::geodesy::{normalize_bearing_offset, GeoPoint, GeodesyError, PathPolyline};
use crate::ingest::{AgentKind, IngestError, SensorRecord, TrackState};
use crate::predictor::{Dataset, Role};
use crate::risk::Maneuver;

#[derive(Error, Debug)]
pub enum ScenarioError {
    #[error("infeasible encounter: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Site geometry knobs (meters). Defaults make the reference zone bounds
/// self-consistent: crossing the 21 m crosswalk at 1.4 m/s takes 15 s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiteParams {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub approach_len_m: f64,
    pub beyond_len_m: f64,
    pub turn_radius_m: f64,
    pub turn_exit_len_m: f64,
    pub crosswalk_before_junction_m: f64,
    pub crosswalk_len_m: f64,
    pub lead_in_m: f64,
    pub trail_out_m: f64,
    pub crosswalk_half_width_m: f64,
    pub lane_half_width_m: f64,
    pub speed_limit_mps: f64,
    pub ssd_m: f64,
    pub crossing_time_s: f64,
}

impl Default for SiteParams {
    fn default() -> Self {
        Self {
            origin_lat: 0.0,
            origin_lon: 0.0,
            approach_len_m: 200.0,
            beyond_len_m: 60.0,
            turn_radius_m: 8.0,
            turn_exit_len_m: 30.0,
            crosswalk_before_junction_m: 5.0,
            crosswalk_len_m: 21.0,
            lead_in_m: 20.0,
            trail_out_m: 10.0,
            crosswalk_half_width_m: 2.0,
            lane_half_width_m: 3.0,
            speed_limit_mps: 11.176,
            ssd_m: 47.24,
            crossing_time_s: 15.0,
        }
    }
}

/// Generator configuration: seeds, nominal speeds, noise levels, rates,
/// and the vehicle maneuver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub ped_speed_mps: f64,
    pub veh_speed_mps: f64,
    pub speed_noise_sigma: f64,
    pub position_noise_sigma_m: f64,
    pub imu_noise_sigma: f64,
    pub maneuver: Maneuver,
    /// Initial arc lengths (pedestrian, vehicle); `gen_encounter` solves
    /// these, plain runs start at the path origin.
    pub start_offsets: Option<(f64, f64)>,
    pub duration_s: f64,
    pub ped_rate_hz: f64,
    pub veh_rate_hz: f64,
    pub site: SiteParams,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            ped_speed_mps: 1.4,
            veh_speed_mps: 11.176,
            speed_noise_sigma: 0.0,
            position_noise_sigma_m: 0.0,
            imu_noise_sigma: 0.0,
            maneuver: Maneuver::Through,
            start_offsets: None,
            duration_s: 40.0,
            ped_rate_hz: 5.0,
            veh_rate_hz: 1.0,
            site: SiteParams::default(),
        }
    }
}

impl GenConfig {
    /// Vehicle generation speed; zero falls back to the speed limit.
    pub fn effective_veh_speed(&self) -> f64 {
        if self.veh_speed_mps > 0.0 {
            self.veh_speed_mps
        } else {
            self.site.speed_limit_mps
        }
    }
}

fn local_to_geo(p: &SiteParams, east_m: f64, north_m: f64) -> GeoPoint {
    let r = crate::geodesy::EARTH_RADIUS_M;
    let lat = p.origin_lat + (north_m / r).to_degrees();
    let lon = p.origin_lon + (east_m / (r * p.origin_lat.to_radians().cos())).to_degrees();
    GeoPoint::new(lat, lon).expect("site coordinates in range")
}

/// Builds the synthetic site: straight approach from the south, straight
/// through continuation, quarter-circle left turn to the west with a short
/// exit, and the perpendicular crosswalk.
pub fn make_site(config: &GenConfig) -> Result<Site, ScenarioError> {
    let p = &config.site;
    let south = local_to_geo(p, 0.0, -p.approach_len_m);
    let junction = local_to_geo(p, 0.0, 0.0);
    let north = local_to_geo(p, 0.0, p.beyond_len_m);

    let approach = PathPolyline::new(vec![south, junction])?;
    let through = PathPolyline::new(vec![south, junction, north])?;

    // Quarter circle from heading north to heading west, center west of
    // the junction, then a straight exit.
    let mut left_verts = vec![south, junction];
    let segments = 16;
    for i in 1..=segments {
        let phi = (i as f64 / segments as f64) * std::f64::consts::FRAC_PI_2;
        let east = -p.turn_radius_m + p.turn_radius_m * phi.cos();
        let north_m = p.turn_radius_m * phi.sin();
        left_verts.push(local_to_geo(p, east, north_m));
    }
    left_verts.push(local_to_geo(
        p,
        -p.turn_radius_m - p.turn_exit_len_m,
        p.turn_radius_m,
    ));
    let left = PathPolyline::new(left_verts)?;

    let cross_north = -p.crosswalk_before_junction_m;
    let half_cross = p.crosswalk_len_m / 2.0;
    let ped_start = local_to_geo(p, -(half_cross + p.lead_in_m), cross_north);
    let ped_end = local_to_geo(p, half_cross + p.trail_out_m, cross_north);
    let ped_path = PathPolyline::new(vec![ped_start, ped_end])?;

    let crosswalk_span = (p.lead_in_m, p.lead_in_m + p.crosswalk_len_m);
    let crosswalk_approach_s = p.approach_len_m - p.crosswalk_before_junction_m;

    Ok(Site::assemble(
        ped_path,
        approach,
        through,
        left,
        crosswalk_span,
        p.crosswalk_half_width_m,
        p.lane_half_width_m,
        crosswalk_approach_s,
        p.speed_limit_mps,
        p.ssd_m,
        p.crossing_time_s,
    )?)
}

/// Ground-truth arc length at one timestamp.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthPoint {
    pub t: f64,
    pub arc_s: f64,
}

/// One generated trajectory: the sensor records an agent would emit plus
/// the noise-free arc lengths behind them.
#[derive(Clone, Debug)]
pub struct Run {
    pub agent_id: String,
    pub kind: AgentKind,
    pub records: Vec<SensorRecord>,
    pub truth: Vec<TruthPoint>,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn sub_seed(seed: u64, tag: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(tag)
}

/// Generates one agent trajectory along its path at nominal speed with
/// seeded Gaussian perturbations. Acceleration and gyro channels come from
/// finite differences of speed and heading plus optional noise. The run
/// truncates when the agent reaches the path end.
pub fn gen_trajectory(
    site: &Site,
    config: &GenConfig,
    kind: AgentKind,
    seed_tag: u64,
) -> Result<Run, ScenarioError> {
    let (path, nominal, rate, agent_id) = match kind {
        AgentKind::Pedestrian => (
            &site.ped_path,
            config.ped_speed_mps,
            config.ped_rate_hz,
            "ped-1".to_string(),
        ),
        AgentKind::Vehicle => (
            site.maneuver_path(config.maneuver),
            config.effective_veh_speed(),
            config.veh_rate_hz,
            "veh-1".to_string(),
        ),
    };
    let start = match (kind, config.start_offsets) {
        (AgentKind::Pedestrian, Some((p, _))) => p,
        (AgentKind::Vehicle, Some((_, v))) => v,
        _ => 0.0,
    };

    let dt = 1.0 / rate;
    let n = (config.duration_s * rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, seed_tag));

    let mut records = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut s = start;
    let mut prev_speed = nominal;
    let mut prev_heading = path.point_at(s.min(path.total_len()))?.heading_deg;

    for i in 1..=n {
        let t = i as f64 * dt;
        let speed = (nominal + config.speed_noise_sigma * gauss(&mut rng)).max(0.0);
        s += speed * dt;
        if s > path.total_len() {
            break;
        }
        let at = path.point_at(s)?;
        let lateral = config.position_noise_sigma_m * gauss(&mut rng);
        let pos = if lateral == 0.0 {
            at.point
        } else {
            path.offset_point(s, lateral)?
        };

        let ax = (speed - prev_speed) / dt;
        let yaw_rate = normalize_bearing_offset(at.heading_deg - prev_heading).to_radians() / dt;
        let ay = speed * yaw_rate;
        let imu = config.imu_noise_sigma;
        let noise: [f64; 6] = std::array::from_fn(|_| imu * gauss(&mut rng));

        records.push(SensorRecord {
            t,
            agent_id: agent_id.clone(),
            kind,
            pos,
            speed_mps: speed,
            accel: [ax + noise[0], ay + noise[1], noise[2]],
            gyro: [noise[3], noise[4], yaw_rate + noise[5]],
        });
        truth.push(TruthPoint { t, arc_s: s });
        prev_speed = speed;
        prev_heading = at.heading_deg;
    }
    Ok(Run {
        agent_id,
        kind,
        records,
        truth,
    })
}

/// Supervised training corpora for the three roles.
pub struct RoleDatasets {
    pub pedestrian: Dataset,
    pub vehicle_through: Dataset,
    pub vehicle_left: Dataset,
}

impl RoleDatasets {
    pub fn for_role(&self, role: Role) -> &Dataset {
        match role {
            Role::Pedestrian => &self.pedestrian,
            Role::VehicleThrough => &self.vehicle_through,
            Role::VehicleLeft => &self.vehicle_left,
        }
    }
}

/// Sliding-window examples from recorded sensor data for one role.
/// Pedestrian streams are resampled to the twin's one-second step first,
/// matching what the engine feeds the pedestrian model at replay time.
pub fn examples_from_records(
    site: &Site,
    records: &[SensorRecord],
    role: Role,
) -> Result<Dataset, ScenarioError> {
    let (path, period, kind) = match role {
        Role::Pedestrian => (&site.ped_path, 0.2, AgentKind::Pedestrian),
        Role::VehicleThrough => (&site.through, 1.0, AgentKind::Vehicle),
        Role::VehicleLeft => (&site.left, 1.0, AgentKind::Vehicle),
    };
    let agent_id = records.first().map_or("agent", |r| r.agent_id.as_str());
    let mut track = TrackState::new(agent_id, kind, period);
    for r in records {
        track.append(r.clone(), path)?;
    }
    let entries = match role {
        Role::Pedestrian => {
            let t_end = track.latest().map_or(0.0, |e| e.record.t);
            track.resample_nearest(t_end, 1.0).entries().to_vec()
        }
        _ => track.entries().to_vec(),
    };
    let mut ds = Dataset::default();
    for (window, targets) in crate::ingest::build_training_examples(&entries, role.input_steps(), 8)
    {
        ds.push(window, targets);
    }
    Ok(ds)
}

/// Sliding-window examples from one generated run.
pub fn examples_from_run(site: &Site, run: &Run, role: Role) -> Result<Dataset, ScenarioError> {
    examples_from_records(site, &run.records, role)
}

/// One corpus run for one role.
pub struct RoleRun {
    pub role: Role,
    pub index: usize,
    pub run: Run,
}

/// Generates `n_runs` seeded runs per role: pedestrians walk the crosswalk
/// path, vehicle runs drive their maneuver path.
pub fn gen_role_runs(
    site: &Site,
    config: &GenConfig,
    n_runs: usize,
) -> Result<Vec<RoleRun>, ScenarioError> {
    let mut out = Vec::with_capacity(3 * n_runs);
    for (role_idx, role) in Role::ALL.iter().enumerate() {
        for run_idx in 0..n_runs {
            let mut run_cfg = config.clone();
            run_cfg.start_offsets = None;
            run_cfg.seed = sub_seed(config.seed, (role_idx as u64) << 32 | run_idx as u64);
            let (kind, maneuver) = match role {
                Role::Pedestrian => (AgentKind::Pedestrian, config.maneuver),
                Role::VehicleThrough => (AgentKind::Vehicle, Maneuver::Through),
                Role::VehicleLeft => (AgentKind::Vehicle, Maneuver::LeftTurn),
            };
            run_cfg.maneuver = maneuver;
            let run = gen_trajectory(site, &run_cfg, kind, 0)?;
            out.push(RoleRun {
                role: *role,
                index: run_idx,
                run,
            });
        }
    }
    Ok(out)
}

/// Generates `n_runs` runs per role and assembles stride-1 windowed
/// datasets with 8-step-ahead distance targets.
pub fn gen_dataset(
    site: &Site,
    config: &GenConfig,
    n_runs: usize,
) -> Result<RoleDatasets, ScenarioError> {
    let mut out = RoleDatasets {
        pedestrian: Dataset::default(),
        vehicle_through: Dataset::default(),
        vehicle_left: Dataset::default(),
    };
    for role_run in gen_role_runs(site, config, n_runs)? {
        let ds = examples_from_run(site, &role_run.run, role_run.role)?;
        match role_run.role {
            Role::Pedestrian => out.pedestrian.extend(ds),
            Role::VehicleThrough => out.vehicle_through.extend(ds),
            Role::VehicleLeft => out.vehicle_left.extend(ds),
        }
    }
    Ok(out)
}

/// A staged pedestrian-vehicle encounter with ground truth.
#[derive(Clone, Debug)]
pub struct Encounter {
    pub ped: Run,
    pub veh: Run,
    pub maneuver: Maneuver,
    pub collide: bool,
    /// When the vehicle reaches the conflict point.
    pub t_conflict_veh: f64,
    /// When the pedestrian reaches it (equal to the vehicle time when
    /// colliding, at least 2 s later when safe).
    pub t_conflict_ped: f64,
}

/// Arc positions of the conflict point (where the vehicle lane crosses the
/// crosswalk) on the vehicle maneuver path and the pedestrian path.
pub fn conflict_arcs(site: &Site) -> (f64, f64) {
    let veh_s = site.crosswalk_approach_s;
    let cross_point = site
        .approach
        .point_at(veh_s)
        .expect("crosswalk on approach")
        .point;
    let ped_s = site.ped_path.project(cross_point).s;
    (veh_s, ped_s)
}

/// Stages an encounter by solving the start offsets from constant speeds.
///
/// Colliding: both agents reach the conflict point at the same instant,
/// placed late enough that the twin has warmed up and the vehicle is still
/// inside its detection zone for at least one alert opportunity. Safe: the
/// pedestrian clears the conflict point more than three seconds before the
/// vehicle arrives, which keeps it outside the risk sector at every
/// evaluated step while the gate still opens.
pub fn gen_encounter(
    site: &Site,
    config: &GenConfig,
    collide: bool,
) -> Result<Encounter, ScenarioError> {
    let v_ped = config.ped_speed_mps;
    let v_veh = config.effective_veh_speed();
    if v_ped <= 0.0 {
        return Err(ScenarioError::Infeasible(
            "pedestrian speed must be positive to reach the conflict point".into(),
        ));
    }
    if v_veh <= 0.0 {
        return Err(ScenarioError::Infeasible(
            "vehicle speed must be positive".into(),
        ));
    }

    let (s_conf_veh, s_conf_ped) = conflict_arcs(site);
    let warmup_s = 10.0; // vehicle window length at 1 Hz
    let final_m = site.crosswalk_approach_s - site.veh_zone.s_max;
    let t_min = warmup_s + final_m / v_veh + 0.25;
    let t_max_veh = s_conf_veh / v_veh;
    let t_max_ped = s_conf_ped / v_ped;

    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, 0xE4C0));
    let draw = rng.random::<f64>();
    // Safe staging sends the pedestrian through the conflict point 3-4 s
    // ahead of the vehicle: on the twin's one-second evaluation grid the
    // pedestrian is then laterally clear of the risk sector at every step
    // while both detection zones still overlap in time.
    let gap = if collide {
        0.0
    } else {
        -(3.0 + rng.random::<f64>())
    };

    // Whole-second conflict times: the twin assesses futures on the 1 Hz
    // vehicle grid, so staged coincidences land on a tick.
    let t_veh_lo = t_min.ceil();
    let t_veh_hi = t_max_veh.min(t_max_ped - gap).floor();
    if t_veh_lo > t_veh_hi {
        return Err(ScenarioError::Infeasible(format!(
            "no conflict time in [{t_veh_lo:.2}, {t_veh_hi:.2}] for speeds ped {v_ped} veh {v_veh}"
        )));
    }
    let span = (t_veh_hi - t_veh_lo) as u64 + 1;
    let t_veh = t_veh_lo + (draw * span as f64).floor().min(span as f64 - 1.0);
    let t_ped = t_veh + gap;

    let ped_start = s_conf_ped - v_ped * t_ped;
    let veh_start = s_conf_veh - v_veh * t_veh;
    debug_assert!(ped_start >= 0.0 && veh_start >= 0.0);

    let duration = config.duration_s.max(t_ped + 5.0);
    let mut ped_cfg = config.clone();
    ped_cfg.start_offsets = Some((ped_start, veh_start));
    ped_cfg.duration_s = duration;
    let veh_cfg = ped_cfg.clone();

    let ped = gen_trajectory(site, &ped_cfg, AgentKind::Pedestrian, 0xA11)?;
    let veh = gen_trajectory(site, &veh_cfg, AgentKind::Vehicle, 0xB22)?;
    Ok(Encounter {
        ped,
        veh,
        maneuver: config.maneuver,
        collide,
        t_conflict_veh: t_veh,
        t_conflict_ped: t_ped,
    })
}
