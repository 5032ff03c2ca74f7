//! Game-playing policies: the LSTM-DQN agent, its bag-of-words and linear
//! variants, and a uniform random baseline, all behind [`Agent`].

mod checkpoint;
mod dqn;
mod epsilon;
mod features;
mod replay;
mod vocab;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::engine::{Command, Observation};
use crate::kv::{KvError, KvMap};
use crate::neural::{NeuralError, Pooling};
use crate::world::WorldDef;

pub use checkpoint::{load_checkpoint, manifest_path, read_manifest, save_checkpoint, CheckpointManifest};
pub use dqn::{command_q, compute_target, greedy_command, DqnAgent, Encoded};
pub use epsilon::EpsilonSchedule;
pub use features::{BagKind, Featurizer};
pub use replay::{EmptyMemory, Prioritized, ReplayMemory, SamplingMode, Transition};
pub use vocab::{Vocab, VocabBuilder, VocabError, UNK, UNK_TOKEN};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Replay(#[from] EmptyMemory),
    #[error("loss is not finite ({0}); parameters left unchanged")]
    NonFiniteLoss(f64),
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How observation text becomes a state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Lstm,
    BagOfWords,
    BagOfBigrams,
}

/// How state vectors become action and object scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    /// Rectifier hidden layer, then the two heads.
    Deep,
    /// The two heads directly on the state vector.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentKind {
    LstmDqn,
    BowDqn,
    BiDqn,
    BowLin,
    BiLin,
    Random,
}

impl AgentKind {
    pub const ALL: [AgentKind; 6] = [
        AgentKind::LstmDqn,
        AgentKind::BowDqn,
        AgentKind::BiDqn,
        AgentKind::BowLin,
        AgentKind::BiLin,
        AgentKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::LstmDqn => "lstm-dqn",
            AgentKind::BowDqn => "bow-dqn",
            AgentKind::BiDqn => "bi-dqn",
            AgentKind::BowLin => "bow-lin",
            AgentKind::BiLin => "bi-lin",
            AgentKind::Random => "random",
        }
    }

    /// `None` for the random agent, which has no network.
    pub fn parts(self) -> Option<(Representation, ScorerKind)> {
        use Representation::*;
        use ScorerKind::*;
        match self {
            AgentKind::LstmDqn => Some((Lstm, Deep)),
            AgentKind::BowDqn => Some((BagOfWords, Deep)),
            AgentKind::BiDqn => Some((BagOfBigrams, Deep)),
            AgentKind::BowLin => Some((BagOfWords, Linear)),
            AgentKind::BiLin => Some((BagOfBigrams, Linear)),
            AgentKind::Random => None,
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
                format!("unknown agent `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Learning hyperparameters. Defaults are the Home-world settings.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub gamma: f64,
    /// Fraction of each minibatch drawn from the priority pool.
    pub rho: f64,
    pub batch_size: usize,
    /// One update every this many stored transitions.
    pub update_period: u64,
    pub learning_rate: f64,
    pub embed_dim: usize,
    pub lstm_dim: usize,
    pub hidden_dim: usize,
    /// Longest token prefix the LSTM reads.
    pub rollout_cap: usize,
    pub pooling: Pooling,
    pub sampling: SamplingMode,
    pub replay_capacity: usize,
    /// Updates start once the memory holds this many transitions.
    pub learn_start: usize,
    pub epsilon: EpsilonSchedule,
    /// Refresh period (in updates) of a frozen target network; `None` uses
    /// the live parameters with the gradient stopped.
    pub target_refresh: Option<u64>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            rho: 0.25,
            batch_size: 64,
            update_period: 4,
            learning_rate: 0.0005,
            embed_dim: 20,
            lstm_dim: 50,
            hidden_dim: 50,
            rollout_cap: 30,
            pooling: Pooling::Mean,
            sampling: SamplingMode::Prioritized,
            replay_capacity: 100_000,
            learn_start: 64,
            epsilon: EpsilonSchedule::default(),
            target_refresh: None,
        }
    }
}

const CONFIG_KEYS: [&str; 18] = [
    "gamma",
    "rho",
    "batch_size",
    "update_period",
    "learning_rate",
    "embed_dim",
    "lstm_dim",
    "hidden_dim",
    "rollout_cap",
    "pooling",
    "sampling",
    "replay_capacity",
    "learn_start",
    "epsilon_start",
    "epsilon_end",
    "epsilon_horizon",
    "epsilon_eval",
    "target_refresh",
];

impl AgentConfig {
    pub const KEYS: &'static [&'static str] = &CONFIG_KEYS;

    /// Defaults for `world`: the rollout cap grows to 100 when observations
    /// can exceed 30 words.
    pub fn for_world(world: &WorldDef) -> Self {
        let longest_room = world
            .rooms
            .iter()
            .flat_map(|r| &r.description_variants)
            .map(|d| crate::text::words(d).len())
            .max()
            .unwrap_or(0);
        let longest_quest = if world.show_quest {
            world
                .quests
                .iter()
                .flat_map(|q| &q.description_variants)
                .map(|d| crate::text::words(d).len())
                .max()
                .unwrap_or(0)
        } else {
            0
        };
        let cue = if world.cue == crate::world::CueMode::Exits {
            1 + world.directions.len()
        } else {
            0
        };
        let rollout_cap = if longest_room + longest_quest + cue <= 30 { 30 } else { 100 };
        Self {
            rollout_cap,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::Config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho must be in [0, 1], got {}", self.rho));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("embed_dim", self.embed_dim),
            ("lstm_dim", self.lstm_dim),
            ("hidden_dim", self.hidden_dim),
            ("rollout_cap", self.rollout_cap),
            ("replay_capacity", self.replay_capacity),
            ("update_period", self.update_period as usize),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.target_refresh == Some(0) {
            return bad("target_refresh must be at least 1 when set".into());
        }
        self.epsilon.validate().map_err(AgentError::Config)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut m = KvMap::new();
        m.set("gamma", self.gamma);
        m.set("rho", self.rho);
        m.set("batch_size", self.batch_size);
        m.set("update_period", self.update_period);
        m.set("learning_rate", self.learning_rate);
        m.set("embed_dim", self.embed_dim);
        m.set("lstm_dim", self.lstm_dim);
        m.set("hidden_dim", self.hidden_dim);
        m.set("rollout_cap", self.rollout_cap);
        m.set(
            "pooling",
            match self.pooling {
                Pooling::Mean => "mean",
                Pooling::Last => "last",
            },
        );
        m.set("sampling", self.sampling);
        m.set("replay_capacity", self.replay_capacity);
        m.set("learn_start", self.learn_start);
        m.set("epsilon_start", self.epsilon.start);
        m.set("epsilon_end", self.epsilon.end);
        m.set("epsilon_horizon", self.epsilon.horizon);
        m.set("epsilon_eval", self.epsilon.eval);
        m.set("target_refresh", self.target_refresh.unwrap_or(0));
        m
    }

    /// Overrides every field present in `m`; other keys are ignored.
    pub fn apply_kv(&mut self, m: &KvMap) -> Result<(), AgentError> {
        macro_rules! take {
            ($key:literal, $field:expr) => {
                if let Some(v) = m.parsed($key)? {
                    $field = v;
                }
            };
        }
        take!("gamma", self.gamma);
        take!("rho", self.rho);
        take!("batch_size", self.batch_size);
        take!("update_period", self.update_period);
        take!("learning_rate", self.learning_rate);
        take!("embed_dim", self.embed_dim);
        take!("lstm_dim", self.lstm_dim);
        take!("hidden_dim", self.hidden_dim);
        take!("rollout_cap", self.rollout_cap);
        take!("sampling", self.sampling);
        take!("replay_capacity", self.replay_capacity);
        take!("learn_start", self.learn_start);
        take!("epsilon_start", self.epsilon.start);
        take!("epsilon_end", self.epsilon.end);
        take!("epsilon_horizon", self.epsilon.horizon);
        take!("epsilon_eval", self.epsilon.eval);
        if let Some(p) = m.get("pooling") {
            self.pooling = match p {
                "mean" => Pooling::Mean,
                "last" => Pooling::Last,
                other => return Err(AgentError::Config(format!("unknown pooling `{other}`"))),
            };
        }
        if let Some(r) = m.parsed::<u64>("target_refresh")? {
            self.target_refresh = (r > 0).then_some(r);
        }
        Ok(())
    }
}

/// Uniform choice over the admissible commands of `obs`.
pub fn random_command(obs: &Observation, n_actions: usize, rng: &mut impl Rng) -> Command {
    let action = rng.random_range(0..n_actions);
    let object = obs.objects_cue[rng.random_range(0..obs.objects_cue.len())];
    Command::new(action, object)
}

/// Chooses uniformly among admissible commands and never learns.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    n_actions: usize,
}

impl RandomAgent {
    pub fn new(n_actions: usize) -> Self {
        Self { n_actions }
    }

    pub fn select(&self, obs: &Observation, rng: &mut ChaCha8Rng) -> Command {
        random_command(obs, self.n_actions, rng)
    }
}

/// Any policy the harness can run.
#[derive(Debug, Clone)]
pub enum Agent {
    Dqn(Box<DqnAgent>),
    Random(RandomAgent),
}

impl Agent {
    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Dqn(a) => a.kind(),
            Agent::Random(_) => AgentKind::Random,
        }
    }

    /// Picks a command; `epsilon` is ignored by the random agent.
    pub fn select(&mut self, obs: &Observation, epsilon: f64, rng: &mut ChaCha8Rng) -> Result<Command, AgentError> {
        match self {
            Agent::Dqn(a) => a.select(obs, epsilon, rng),
            Agent::Random(r) => Ok(r.select(obs, rng)),
        }
    }

    /// Stores a training transition and runs an update when one is due.
    pub fn observe(&mut self, t: Transition) -> Result<Option<f64>, AgentError> {
        match self {
            Agent::Dqn(a) => a.observe(t),
            Agent::Random(_) => Ok(None),
        }
    }

    /// Exploration rate for the next training step.
    pub fn training_epsilon(&self) -> f64 {
        match self {
            Agent::Dqn(a) => a.training_epsilon(),
            Agent::Random(_) => 1.0,
        }
    }

    pub fn eval_epsilon(&self) -> f64 {
        match self {
            Agent::Dqn(a) => a.config().epsilon.eval,
            Agent::Random(_) => 1.0,
        }
    }

    pub fn as_dqn(&self) -> Option<&DqnAgent> {
        match self {
            Agent::Dqn(a) => Some(a),
            Agent::Random(_) => None,
        }
    }

    pub fn as_dqn_mut(&mut self) -> Option<&mut DqnAgent> {
        match self {
            Agent::Dqn(a) => Some(a),
            Agent::Random(_) => None,
        }
    }
}
