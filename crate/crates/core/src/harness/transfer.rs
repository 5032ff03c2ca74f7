use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use super::{ExperimentConfig, HarnessError};
use crate::agent::{read_manifest, Agent, AgentKind, DqnAgent, Vocab};
use crate::neural::load_repr_into;
use crate::rng;
use crate::world::WorldDef;

/// Which parameters move to the new agent. Only the representation
/// generator can; the action scorer always starts fresh because its heads
/// are sized for the source world.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Carry {
    Representation,
}

impl FromStr for Carry {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "representation" => Ok(Carry::Representation),
            "action-scorer" | "scorer" | "all" => Err(format!(
                "`{s}` cannot be carried: only the representation generator transfers, the action scorer is always reinitialized"
            )),
            _ => Err(format!("unknown carry target `{s}` (expected representation)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferSpec {
    pub source: PathBuf,
    pub carry: Carry,
}

/// An LSTM-DQN agent for `target` whose embeddings and LSTM come from the
/// source checkpoint and whose scorer is freshly initialized from the
/// config's seed. Replay memory is empty and exploration starts over.
pub fn transfer_init(spec: &TransferSpec, target: &WorldDef, config: &ExperimentConfig) -> Result<Agent, HarnessError> {
    if config.agent != AgentKind::LstmDqn {
        return Err(HarnessError::Config(format!("transfer needs lstm-dqn, not {}", config.agent)));
    }
    let manifest = read_manifest(&spec.source)?;
    if manifest.kind != AgentKind::LstmDqn {
        return Err(HarnessError::Config(format!(
            "source checkpoint is {}, which has no representation generator to carry",
            manifest.kind
        )));
    }
    let target_vocab = Vocab::from_worlds([target]);
    if !manifest.vocab.covers(&target_vocab) {
        let missing: Vec<&str> = target_vocab
            .tokens()
            .iter()
            .filter(|t| !manifest.vocab.contains(t))
            .map(String::as_str)
            .take(5)
            .collect();
        return Err(HarnessError::Config(format!(
            "source vocabulary does not cover the target world (missing {})",
            missing.join(", ")
        )));
    }
    let mut agent_config = config.agent_config.clone();
    agent_config.embed_dim = manifest.config.embed_dim;
    agent_config.lstm_dim = manifest.config.lstm_dim;
    let n_actions = target.actions.len();
    let mut agent = DqnAgent::new(
        AgentKind::LstmDqn,
        agent_config,
        Arc::new(manifest.vocab),
        None,
        n_actions,
        target.command_count() / n_actions,
        &mut rng::stream(config.seed, rng::INIT),
        rng::stream(config.seed, rng::REPLAY),
    )?;
    let bytes = std::fs::read(&spec.source).map_err(HarnessError::io(&spec.source))?;
    let mut params = agent.params().clone();
    load_repr_into(&mut params, &bytes).map_err(crate::agent::AgentError::from)?;
    agent.set_params(params)?;
    Ok(Agent::Dqn(Box::new(agent)))
}
