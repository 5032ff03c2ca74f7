//! Resolving run settings (defaults < config file < flags) and the run
//! manifest that records them.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mudqn_core::harness::ExperimentConfig;
use mudqn_core::kv::KvMap;
use mudqn_core::world::{parse_world, Builtin};
use mudqn_core::{rng, AgentConfig, AgentKind, SamplingMode, WorldDef};

use crate::args::RunArgs;
use crate::CliError;

/// Run-level keys a config file may set, besides the agent config keys.
const RUN_KEYS: &[&str] = &[
    "world",
    "agent",
    "epochs",
    "episodes",
    "steps",
    "seed",
    "out",
    "run_id",
    "checkpoint_every",
    "until_converged",
    "transcript",
];

/// Keys a manifest carries for the record; accepted when a manifest is
/// replayed as a config file.
const RECORD_KEYS: &[&str] = &["version", "world_hash", "streams", "transfer_source", "carry"];

pub const DEFAULT_OUT: &str = "runs";

/// Loads a built-in world by name or a world-definition file by path.
pub fn load_world(spec: &str) -> Result<WorldDef, CliError> {
    if let Ok(b) = Builtin::from_str(spec) {
        return Ok(b.load());
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "unknown world `{spec}` (expected home, home-variant, bridge or a world file)"
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{spec}: {e}")))?;
    parse_world(&text).map_err(|e| CliError::Usage(format!("{spec}: {e}")))
}

fn usage<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Usage(format!("{context}: {e}"))
}

/// A fully resolved run: the world and every experiment setting.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub world_spec: String,
    pub world: WorldDef,
    pub experiment: ExperimentConfig,
    /// Extra entries for the manifest (transfer source and the like).
    pub record: KvMap,
}

impl RunSettings {
    pub fn resolve(args: &RunArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(usage(&path.display().to_string()))?;
                let kv = KvMap::parse(&text).map_err(usage(&path.display().to_string()))?;
                let allowed: Vec<&str> = RUN_KEYS
                    .iter()
                    .chain(RECORD_KEYS)
                    .chain(AgentConfig::KEYS)
                    .copied()
                    .collect();
                kv.check_keys(&allowed).map_err(usage(&path.display().to_string()))?;
                kv
            }
            None => KvMap::new(),
        };
        let from_file = |key: &str| file.get(key).map(str::to_owned);
        fn parse<T: FromStr>(key: &str, value: Option<String>) -> Result<Option<T>, CliError> {
            value
                .map(|v| {
                    v.parse()
                        .map_err(|_| CliError::Usage(format!("cannot parse {key} `{v}`")))
                })
                .transpose()
        }

        let world_spec = args.world.clone().or(from_file("world")).unwrap_or_else(|| "home".into());
        let world = load_world(&world_spec)?;
        if let Some(hash) = file.get("world_hash") {
            if hash != world.content_hash() {
                return Err(CliError::Usage(format!(
                    "world `{world_spec}` does not match the recorded world hash {hash}"
                )));
            }
        }

        let agent: AgentKind = parse("agent", args.agent.clone().or(from_file("agent")))?.unwrap_or(AgentKind::LstmDqn);
        let seed: u64 = parse("seed", args.seed.map(|s| s.to_string()).or(from_file("seed")))?.unwrap_or(0);
        let mut cfg = ExperimentConfig::for_world(&world, agent, seed);
        if world_spec != world.name {
            cfg.run_id = format!("{}-{}-seed{}", sanitize(&world.name), agent, seed);
        }

        cfg.agent_config
            .apply_kv(&file)
            .map_err(|e| CliError::Usage(format!("config: {e}")))?;
        if let Some(s) = &args.sampling {
            cfg.agent_config.sampling = s.parse::<SamplingMode>().map_err(CliError::Usage)?;
        }

        let pick = |flag: Option<usize>, key: &str| -> Result<Option<usize>, CliError> {
            match flag {
                Some(v) => Ok(Some(v)),
                None => parse(key, from_file(key)),
            }
        };
        if let Some(v) = pick(args.epochs, "epochs")? {
            cfg.epochs = v;
        }
        if let Some(v) = pick(args.episodes, "episodes")? {
            cfg.episodes = v;
        }
        if let Some(v) = pick(args.steps, "steps")? {
            cfg.steps = v;
        }
        if let Some(v) = pick(args.checkpoint_every, "checkpoint_every")? {
            cfg.checkpoint_every = (v > 0).then_some(v);
        }
        if let Some(id) = from_file("run_id") {
            cfg.run_id = id;
        }
        cfg.stop_when_converged = args.until_converged || parse("until_converged", from_file("until_converged"))?.unwrap_or(false);
        cfg.transcript = args.transcript || parse("transcript", from_file("transcript"))?.unwrap_or(false);
        let out = args
            .out
            .clone()
            .or(from_file("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        cfg.out_dir = Some(out);
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

        let mut record = KvMap::new();
        for key in ["transfer_source", "carry"] {
            if let Some(v) = file.get(key) {
                record.set(key, v);
            }
        }
        Ok(Self {
            world_spec,
            world,
            experiment: cfg,
            record,
        })
    }

    pub fn out_dir(&self) -> &Path {
        self.experiment.out_dir.as_deref().expect("resolved settings always have an output directory")
    }

    /// Every setting, materialized, in the config-file format.
    pub fn manifest(&self) -> KvMap {
        let cfg = &self.experiment;
        let mut m = KvMap::new();
        m.set("version", env!("CARGO_PKG_VERSION"));
        m.set("world", &self.world_spec);
        m.set("world_hash", self.world.content_hash());
        m.set("agent", cfg.agent);
        m.set("seed", cfg.seed);
        m.set(
            "streams",
            [
                rng::WORLD,
                rng::DESCRIPTION,
                rng::POLICY,
                rng::INIT,
                rng::REPLAY,
                rng::EVAL_WORLD,
                rng::EVAL_DESCRIPTION,
                rng::EVAL_POLICY,
            ]
            .join(" "),
        );
        m.set("epochs", cfg.epochs);
        m.set("episodes", cfg.episodes);
        m.set("steps", cfg.steps);
        m.set("out", self.out_dir().display());
        m.set("run_id", &cfg.run_id);
        m.set("checkpoint_every", cfg.checkpoint_every.unwrap_or(0));
        m.set("until_converged", cfg.stop_when_converged);
        m.set("transcript", cfg.transcript);
        for (k, v) in cfg.agent_config.to_kv().iter() {
            m.set(k, v);
        }
        for (k, v) in self.record.iter() {
            m.set(k, v);
        }
        m
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.out_dir().join(format!("{}.manifest", self.experiment.run_id))
    }

    /// Writes the manifest; called before any training output exists.
    pub fn write_manifest(&self) -> Result<PathBuf, CliError> {
        let dir = self.out_dir();
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", dir.display())))?;
        let path = self.manifest_path();
        fs::write(&path, self.manifest().to_string())
            .map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Run ids end up in file names.
fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
