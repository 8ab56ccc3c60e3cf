use std::path::PathBuf;
use std::process::ExitCode;

use crosswalk_twin::cli::{
    cmd_eval, cmd_generate, cmd_replay, cmd_train, EvalArgs, GenerateArgs, GenerateMode,
    ReplayArgs, TrainArgs,
};
use crosswalk_twin::predictor::Role;

const USAGE: &str = "\
crosswalk-twin <command> [options]

Commands:
  generate --out DIR [--seed N] [--config GEN.json]
           [--mode corpus|collision|safe] [--runs N]
      Write site.json plus sensor streams with ground-truth sidecars.

  train    --role ROLE --data DIR --out MODEL.json
           [--config MODEL.json] [--seed N] [--epochs N] [--split F]
      Train one predictor on a generated corpus; also writes
      MODEL.curve.csv (epoch,train_mae,val_mae) and MODEL.report.json.

  eval     --model MODEL.json --data DIR --out REPORT.json [--role ROLE]
      Denormalized RMSE of a model over a corpus.

  replay   --site SITE.json --ped STREAM --veh STREAM
           --model pedestrian=FILE --model vehicle_through=FILE
           --model vehicle_left=FILE --out DIR
      Run the twin over recorded streams; writes events.jsonl and
      summary.json.

Roles: pedestrian, vehicle_through, vehicle_left.
Streams are JSON Lines; .csv files with the documented header also work.
Every command writes a manifest.json with checksums of inputs and outputs.
";

struct Flags {
    values: Vec<(String, String)>,
}

impl Flags {
    fn parse(args: &[String]) -> Result<Self, String> {
        let mut values = Vec::new();
        let mut i = 0;
        while i < args.len() {
            let key = args[i]
                .strip_prefix("--")
                .ok_or_else(|| format!("unexpected argument {:?}", args[i]))?;
            let value = args
                .get(i + 1)
                .ok_or_else(|| format!("--{key} needs a value"))?;
            values.push((key.to_string(), value.clone()));
            i += 2;
        }
        Ok(Self { values })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str, String> {
        self.get(key).ok_or_else(|| format!("--{key} is required"))
    }

    fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.values
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

fn parse_role(s: &str) -> Result<Role, String> {
    Role::parse(s).ok_or_else(|| format!("unknown role {s:?}"))
}

fn parse_seed(flags: &Flags) -> Result<Option<u64>, String> {
    flags
        .get("seed")
        .map(|s| s.parse::<u64>().map_err(|e| format!("--seed: {e}")))
        .transpose()
}

fn run() -> Result<(), String> {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let Some((command, rest)) = argv.split_first() else {
        return Err("missing command".into());
    };
    let flags = Flags::parse(rest)?;

    match command.as_str() {
        "generate" => {
            let args = GenerateArgs {
                out: PathBuf::from(flags.require("out")?),
                seed: parse_seed(&flags)?,
                config: flags.get("config").map(PathBuf::from),
                mode: match flags.get("mode") {
                    None => GenerateMode::Corpus,
                    Some(m) => {
                        GenerateMode::parse(m).ok_or_else(|| format!("unknown mode {m:?}"))?
                    }
                },
                runs: flags
                    .get("runs")
                    .map(|s| s.parse::<usize>().map_err(|e| format!("--runs: {e}")))
                    .transpose()?
                    .unwrap_or(20),
            };
            cmd_generate(&args).map_err(|e| e.to_string())
        }
        "train" => {
            let args = TrainArgs {
                role: parse_role(flags.require("role")?)?,
                data: PathBuf::from(flags.require("data")?),
                out: PathBuf::from(flags.require("out")?),
                config: flags.get("config").map(PathBuf::from),
                seed: parse_seed(&flags)?,
                epochs: flags
                    .get("epochs")
                    .map(|s| s.parse::<usize>().map_err(|e| format!("--epochs: {e}")))
                    .transpose()?,
                split: flags
                    .get("split")
                    .map(|s| s.parse::<f64>().map_err(|e| format!("--split: {e}")))
                    .transpose()?
                    .unwrap_or(0.8),
            };
            cmd_train(&args).map_err(|e| e.to_string())
        }
        "eval" => {
            let args = EvalArgs {
                model: PathBuf::from(flags.require("model")?),
                data: PathBuf::from(flags.require("data")?),
                out: PathBuf::from(flags.require("out")?),
                role: flags.get("role").map(parse_role).transpose()?,
            };
            cmd_eval(&args).map_err(|e| e.to_string())
        }
        "replay" => {
            let mut models = Vec::new();
            for spec in flags.get_all("model") {
                let (role, path) = spec
                    .split_once('=')
                    .ok_or_else(|| format!("--model expects role=file, got {spec:?}"))?;
                models.push((parse_role(role)?, PathBuf::from(path)));
            }
            let args = ReplayArgs {
                site: PathBuf::from(flags.require("site")?),
                ped: PathBuf::from(flags.require("ped")?),
                veh: PathBuf::from(flags.require("veh")?),
                models,
                out: PathBuf::from(flags.require("out")?),
            };
            let summary = cmd_replay(&args).map_err(|e| e.to_string())?;
            eprintln!(
                "replay: {} ticks, {} alert ticks (through: {}, left turn: {})",
                summary.ticks,
                summary.alert_ticks,
                summary.through.alerts,
                summary.left_turn.alerts
            );
            Ok(())
        }
        "help" | "--help" | "-h" => {
            eprint!("{USAGE}");
            Ok(())
        }
        other => Err(format!("unknown command {other:?}")),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("crosswalk-twin: {message}");
            eprintln!("run `crosswalk-twin help` for usage");
            ExitCode::FAILURE
        }
    }
}
