//! Command implementations behind the `crosswalk-twin` binary: data
//! generation, training, evaluation, and twin replay. Every command writes
//! its machine outputs to files plus one run manifest whose checksums make
//! the run verifiable and reproducible.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{
    events_to_jsonl, summarize, EngineError, ModelSet, ReplaySummary, Site, TwinEngine,
};
use crate::ingest::{parse_csv_record, parse_record, serialize_record, IngestError, SensorRecord};
use crate::predictor::{load_model, save_model, train, Dataset, ModelConfig, PredictorError, Role};
use crate::risk::CrrParams;
use crate::scenario::{
    examples_from_records, gen_encounter, gen_role_runs, make_site, GenConfig, ScenarioError,
};

#[derive(Error, Debug)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one CLI run: the command, its seed, a digest of the effective
/// configuration, and checksums of every input and output file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: Option<u64>,
    pub config_digest: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn digest_file(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(FileDigest {
        path: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string()),
        sha256: sha256_hex(&bytes),
    })
}

/// Digest with the path recorded relative to `base` (the manifest's
/// directory), so verification can re-resolve it.
fn digest_file_rel(base: &Path, path: &Path) -> Result<FileDigest, CliError> {
    let mut digest = digest_file(path)?;
    digest.path = path
        .strip_prefix(base)
        .map(|p| p.to_string_lossy().into_owned())
        .unwrap_or_else(|_| path.display().to_string());
    Ok(digest)
}

fn digest_files(paths: &[PathBuf]) -> Result<Vec<FileDigest>, CliError> {
    paths.iter().map(|p| digest_file(p)).collect()
}

fn digest_files_rel(base: &Path, paths: &[PathBuf]) -> Result<Vec<FileDigest>, CliError> {
    paths.iter().map(|p| digest_file_rel(base, p)).collect()
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf, CliError> {
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest).expect("manifest serialization");
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(path)
}

/// Re-hashes every output listed in a directory's manifest.
pub fn verify_manifest(dir: &Path) -> Result<RunManifest, CliError> {
    let path = dir.join("manifest.json");
    let json = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: RunManifest =
        serde_json::from_str(&json).map_err(|e| CliError::ManifestMismatch(e.to_string()))?;
    for entry in &manifest.outputs {
        let file = dir.join(&entry.path);
        let actual = digest_file(&file)?;
        if actual.sha256 != entry.sha256 {
            return Err(CliError::ManifestMismatch(format!(
                "{}: expected {}, found {}",
                entry.path, entry.sha256, actual.sha256
            )));
        }
    }
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// Stream files
// ---------------------------------------------------------------------------

/// Reads a sensor stream; `.csv` files use the CSV schema (with header),
/// anything else is JSON Lines.
pub fn read_stream(path: &Path) -> Result<Vec<SensorRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let is_csv = path.extension().is_some_and(|e| e == "csv");
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || (is_csv && i == 0) {
            continue;
        }
        let record = if is_csv {
            parse_csv_record(line)?
        } else {
            parse_record(line)?
        };
        records.push(record);
    }
    Ok(records)
}

fn write_stream(path: &Path, records: &[SensorRecord]) -> Result<(), CliError> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serialize_record(r));
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}

fn write_truth(
    path: &Path,
    agent_id: &str,
    truth: &[crate::scenario::TruthPoint],
) -> Result<(), CliError> {
    let mut text = String::new();
    for p in truth {
        text.push_str(&format!(
            "{{\"t\":{},\"agent_id\":{},\"arc_length_m\":{}}}\n",
            serde_json::to_string(&p.t).expect("number"),
            serde_json::to_string(agent_id).expect("string"),
            serde_json::to_string(&p.arc_s).expect("number"),
        ));
    }
    fs::write(path, text).map_err(io_err(path))
}

fn load_gen_config(path: Option<&Path>, seed: Option<u64>) -> Result<GenConfig, CliError> {
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => GenConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenerateMode {
    /// Training corpus: `--runs` runs per role.
    Corpus,
    /// One staged colliding encounter.
    Collision,
    /// One staged safe encounter.
    Safe,
}

impl GenerateMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "corpus" => Some(Self::Corpus),
            "collision" => Some(Self::Collision),
            "safe" => Some(Self::Safe),
            _ => None,
        }
    }
}

pub struct GenerateArgs {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub config: Option<PathBuf>,
    pub mode: GenerateMode,
    pub runs: usize,
}

/// Sidecar metadata for a staged encounter.
#[derive(Serialize, Deserialize)]
pub struct EncounterMeta {
    pub collide: bool,
    pub maneuver: crate::risk::Maneuver,
    pub t_conflict_veh: f64,
    pub t_conflict_ped: f64,
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let config = load_gen_config(args.config.as_deref(), args.seed)?;
    let site = make_site(&config)?;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;

    let mut outputs = Vec::new();
    let site_path = args.out.join("site.json");
    site.save(&site_path)?;
    outputs.push(site_path);

    let gen_path = args.out.join("gen.json");
    fs::write(
        &gen_path,
        serde_json::to_string_pretty(&config).expect("config serialization"),
    )
    .map_err(io_err(&gen_path))?;
    outputs.push(gen_path);

    match args.mode {
        GenerateMode::Corpus => {
            let runs_dir = args.out.join("runs");
            fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
            for role_run in gen_role_runs(&site, &config, args.runs)? {
                let stem = format!("{}_{:03}", role_run.role.as_str(), role_run.index);
                let stream = runs_dir.join(format!("{stem}.jsonl"));
                write_stream(&stream, &role_run.run.records)?;
                let truth = runs_dir.join(format!("{stem}.truth.jsonl"));
                write_truth(&truth, &role_run.run.agent_id, &role_run.run.truth)?;
                outputs.push(stream);
                outputs.push(truth);
            }
        }
        GenerateMode::Collision | GenerateMode::Safe => {
            let collide = args.mode == GenerateMode::Collision;
            let enc = gen_encounter(&site, &config, collide)?;
            let ped_path = args.out.join("ped.jsonl");
            write_stream(&ped_path, &enc.ped.records)?;
            let veh_path = args.out.join("veh.jsonl");
            write_stream(&veh_path, &enc.veh.records)?;
            let ped_truth = args.out.join("ped.truth.jsonl");
            write_truth(&ped_truth, &enc.ped.agent_id, &enc.ped.truth)?;
            let veh_truth = args.out.join("veh.truth.jsonl");
            write_truth(&veh_truth, &enc.veh.agent_id, &enc.veh.truth)?;
            let meta_path = args.out.join("encounter.json");
            let meta = EncounterMeta {
                collide: enc.collide,
                maneuver: enc.maneuver,
                t_conflict_veh: enc.t_conflict_veh,
                t_conflict_ped: enc.t_conflict_ped,
            };
            fs::write(
                &meta_path,
                serde_json::to_string_pretty(&meta).expect("meta serialization"),
            )
            .map_err(io_err(&meta_path))?;
            outputs.extend([ped_path, veh_path, ped_truth, veh_truth, meta_path]);
        }
    }

    let manifest = RunManifest {
        command: "generate".into(),
        seed: Some(config.seed),
        config_digest: sha256_hex(serde_json::to_string(&config).expect("config").as_bytes()),
        inputs: Vec::new(),
        outputs: digest_files_rel(&args.out, &outputs)?,
    };
    write_manifest(&args.out, &manifest)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub struct TrainArgs {
    pub role: Role,
    pub data: PathBuf,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub split: f64,
}

/// Collects the corpus runs for one role from a generated data directory,
/// in filename order.
fn role_dataset(site: &Site, data: &Path, role: Role) -> Result<(Dataset, Vec<PathBuf>), CliError> {
    let runs_dir = data.join("runs");
    let mut files: Vec<PathBuf> = fs::read_dir(&runs_dir)
        .map_err(io_err(&runs_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned());
            name.is_some_and(|n| {
                n.starts_with(role.as_str()) && n.ends_with(".jsonl") && !n.contains(".truth.")
            })
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Config(format!(
            "no {} runs under {}",
            role.as_str(),
            runs_dir.display()
        )));
    }
    let mut dataset = Dataset::default();
    for file in &files {
        let records = read_stream(file)?;
        dataset.extend(examples_from_records(site, &records, role)?);
    }
    Ok((dataset, files))
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let site_path = args.data.join("site.json");
    let site = Site::load(&site_path)?;
    let (dataset, input_files) = role_dataset(&site, &args.data, args.role)?;

    let mut config = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            serde_json::from_str::<ModelConfig>(&text)
                .map_err(|e| CliError::Config(e.to_string()))?
        }
        None => ModelConfig::for_role(args.role),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        config.epochs = epochs;
    }
    config.validate(args.role)?;

    let (model, report) = train(args.role, &config, &dataset, args.split)?;
    save_model(&model, &args.out)?;

    let curve_path = args.out.with_extension("curve.csv");
    let mut csv = String::from("epoch,train_mae,val_mae\n");
    for (i, (t, v)) in report
        .train_mae
        .iter()
        .zip(report.val_mae.iter())
        .enumerate()
    {
        csv.push_str(&format!("{},{},{}\n", i + 1, t, v));
    }
    fs::write(&curve_path, csv).map_err(io_err(&curve_path))?;

    let report_path = args.out.with_extension("report.json");
    fs::write(
        &report_path,
        serde_json::to_string_pretty(&report).expect("report serialization"),
    )
    .map_err(io_err(&report_path))?;

    let out_dir = args
        .out
        .parent()
        .map(Path::to_path_buf)
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| PathBuf::from("."));
    let mut inputs = vec![site_path];
    inputs.extend(input_files);
    let manifest = RunManifest {
        command: format!("train {}", args.role.as_str()),
        seed: Some(config.seed),
        config_digest: sha256_hex(serde_json::to_string(&config).expect("config").as_bytes()),
        inputs: digest_files(&inputs)?,
        outputs: digest_files_rel(&out_dir, &[args.out.clone(), curve_path, report_path])?,
    };
    write_manifest(&out_dir, &manifest)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

pub struct EvalArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
    pub role: Option<Role>,
}

#[derive(Serialize, Deserialize)]
pub struct EvalReport {
    pub role: Role,
    pub windows: usize,
    pub rmse_m: f64,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    if let Some(role) = args.role {
        if role != model.role {
            return Err(CliError::Config(format!(
                "model has role {}, requested {}",
                model.role.as_str(),
                role.as_str()
            )));
        }
    }
    let site = Site::load(&args.data.join("site.json"))?;
    let (dataset, input_files) = role_dataset(&site, &args.data, model.role)?;
    let rmse_m = crate::predictor::eval_rmse(&model, &dataset.windows, &dataset.targets)?;

    let report = EvalReport {
        role: model.role,
        windows: dataset.len(),
        rmse_m,
    };
    fs::write(
        &args.out,
        serde_json::to_string_pretty(&report).expect("report serialization"),
    )
    .map_err(io_err(&args.out))?;

    let out_dir = args
        .out
        .parent()
        .map(Path::to_path_buf)
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| PathBuf::from("."));
    let mut inputs = vec![args.model.clone()];
    inputs.extend(input_files);
    let manifest = RunManifest {
        command: format!("eval {}", model.role.as_str()),
        seed: None,
        config_digest: digest_file(&args.model)?.sha256,
        inputs: digest_files(&inputs)?,
        outputs: digest_files_rel(&out_dir, std::slice::from_ref(&args.out))?,
    };
    write_manifest(&out_dir, &manifest)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------

pub struct ReplayArgs {
    pub site: PathBuf,
    pub ped: PathBuf,
    pub veh: PathBuf,
    pub models: Vec<(Role, PathBuf)>,
    pub out: PathBuf,
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<ReplaySummary, CliError> {
    let site = Site::load(&args.site)?;
    let find = |role: Role| -> Result<PathBuf, CliError> {
        args.models
            .iter()
            .find(|(r, _)| *r == role)
            .map(|(_, p)| p.clone())
            .ok_or_else(|| CliError::Usage(format!("missing --model {}=<file>", role.as_str())))
    };
    let models = ModelSet {
        pedestrian: load_model(&find(Role::Pedestrian)?)?,
        through: load_model(&find(Role::VehicleThrough)?)?,
        left: load_model(&find(Role::VehicleLeft)?)?,
    };

    let mut records = read_stream(&args.ped)?;
    records.extend(read_stream(&args.veh)?);

    let mut engine = TwinEngine::new(site, models, CrrParams::default())?;
    let events = engine.replay(&records);
    let summary = summarize(&events);

    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let events_path = args.out.join("events.jsonl");
    fs::write(&events_path, events_to_jsonl(&events)).map_err(io_err(&events_path))?;
    let summary_path = args.out.join("summary.json");
    fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary).expect("summary serialization"),
    )
    .map_err(io_err(&summary_path))?;

    let mut inputs = vec![args.site.clone(), args.ped.clone(), args.veh.clone()];
    inputs.extend(args.models.iter().map(|(_, p)| p.clone()));
    let manifest = RunManifest {
        command: "replay".into(),
        seed: None,
        config_digest: String::new(),
        inputs: digest_files(&inputs)?,
        outputs: digest_files_rel(&args.out, &[events_path, summary_path])?,
    };
    write_manifest(&args.out, &manifest)?;
    Ok(summary)
}
