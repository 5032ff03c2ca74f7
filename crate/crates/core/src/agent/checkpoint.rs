//! Checkpoints: a binary parameter file plus a `key = value` sidecar that
//! records everything needed to rebuild the agent around those parameters.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{AgentConfig, AgentError, AgentKind, BagKind, DqnAgent, Featurizer, Vocab};
use crate::kv::KvMap;
use crate::neural::{load_params, save_params};

const MANIFEST_FORMAT: u32 = 1;

/// Where the sidecar of `checkpoint` lives.
pub fn manifest_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// Parsed sidecar.
#[derive(Debug, Clone)]
pub struct CheckpointManifest {
    pub kind: AgentKind,
    pub config: AgentConfig,
    pub vocab: Vocab,
    pub bigrams: Option<Vec<(u32, u32)>>,
    pub config_hash: String,
    /// Entries added by the caller (world name, epoch, ...).
    pub extra: KvMap,
}

fn config_hash(config: &AgentConfig) -> String {
    let digest = Sha256::digest(config.to_kv().to_string().as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `path` and its sidecar. `extra` entries are copied into the sidecar.
pub fn save_checkpoint(agent: &DqnAgent, path: &Path, extra: &KvMap) -> Result<(), AgentError> {
    let mut m = KvMap::new();
    m.set("format", MANIFEST_FORMAT);
    m.set("agent", agent.kind());
    for (k, v) in agent.config().to_kv().iter() {
        m.set(&format!("config.{k}"), v);
    }
    m.set("config_hash", config_hash(agent.config()));
    m.set("vocab", agent.vocab().tokens().join(" "));
    if let Some(f) = agent.featurizer().filter(|f| f.kind() == BagKind::Bigrams) {
        let pairs: Vec<String> = f.bigram_list().iter().map(|(a, b)| format!("{a}-{b}")).collect();
        m.set("bigrams", pairs.join(" "));
    }
    for (k, v) in extra.iter() {
        m.set(&format!("extra.{k}"), v);
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, save_params(agent.params()))?;
    fs::write(manifest_path(path), m.to_string())?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<CheckpointManifest, AgentError> {
    let mpath = manifest_path(path);
    let text = fs::read_to_string(&mpath)
        .map_err(|e| AgentError::Checkpoint(format!("cannot read {}: {e}", mpath.display())))?;
    let m = KvMap::parse(&text)?;
    let format: u32 = m.parsed("format")?.ok_or_else(|| AgentError::Checkpoint("missing format".into()))?;
    if format != MANIFEST_FORMAT {
        return Err(AgentError::Checkpoint(format!("unsupported manifest format {format}")));
    }
    let kind: AgentKind = m.require("agent")?.parse().map_err(AgentError::Checkpoint)?;
    let mut config_kv = KvMap::new();
    let mut extra = KvMap::new();
    for (k, v) in m.iter() {
        if let Some(key) = k.strip_prefix("config.") {
            config_kv.set(key, v);
        } else if let Some(key) = k.strip_prefix("extra.") {
            extra.set(key, v);
        }
    }
    let mut config = AgentConfig::default();
    config.apply_kv(&config_kv)?;
    let hash = m.require("config_hash")?.to_owned();
    if hash != config_hash(&config) {
        return Err(AgentError::Checkpoint("config hash does not match recorded config".into()));
    }
    let vocab = Vocab::from_tokens(m.require("vocab")?.split_whitespace().map(str::to_owned))?;
    let bigrams = m
        .get("bigrams")
        .map(|s| {
            s.split_whitespace()
                .map(|p| {
                    let (a, b) = p.split_once('-')?;
                    Some((a.parse().ok()?, b.parse().ok()?))
                })
                .collect::<Option<Vec<(u32, u32)>>>()
                .ok_or_else(|| AgentError::Checkpoint("malformed bigram list".into()))
        })
        .transpose()?;
    Ok(CheckpointManifest {
        kind,
        config,
        vocab,
        bigrams,
        config_hash: hash,
        extra,
    })
}

/// Rebuilds an agent from a checkpoint. Replay memory starts empty and the
/// exploration schedule starts over.
pub fn load_checkpoint(path: &Path, replay_rng: ChaCha8Rng) -> Result<(DqnAgent, CheckpointManifest), AgentError> {
    let manifest = read_manifest(path)?;
    let bytes = fs::read(path).map_err(|e| AgentError::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    let params = load_params(&bytes)?;
    let featurizer = match manifest.kind.parts().map(|p| p.0) {
        Some(super::Representation::BagOfWords) => Some(Featurizer::words(&manifest.vocab)),
        Some(super::Representation::BagOfBigrams) => Some(Featurizer::from_bigrams(
            &manifest.vocab,
            manifest
                .bigrams
                .clone()
                .ok_or_else(|| AgentError::Checkpoint("bigram agent without bigram list".into()))?,
        )),
        _ => None,
    };
    let agent = DqnAgent::with_params(
        manifest.kind,
        manifest.config.clone(),
        Arc::new(manifest.vocab.clone()),
        featurizer,
        params,
        replay_rng,
    )?;
    let expected_repr = match (&agent.params().repr, agent.featurizer()) {
        (Some(l), None) => l.vocab_size() == agent.vocab().len(),
        (None, Some(f)) => agent.params().scorer.input_dim() == f.dim(),
        _ => false,
    };
    if !expected_repr {
        return Err(AgentError::Checkpoint("parameters do not match the recorded vocabulary".into()));
    }
    Ok((agent, manifest))
}
