//! The experiment protocol: alternating train and evaluation phases, metric
//! collection, checkpoints, transfer, representation analysis and the small
//! exact oracles the tests compare against.

mod analysis;
mod metrics;
mod oracle;
mod transfer;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use crate::agent::{Agent, AgentConfig, AgentError, AgentKind, DqnAgent, RandomAgent, Transition};
use crate::engine::{EngineError, Game, Observation, TranscriptRecord, TranscriptWriter};
use crate::kv::KvMap;
use crate::rng;
use crate::world::{CueMode, World, WorldDef};

pub use analysis::{
    cosine, export_embeddings, nearest_neighbors, nearest_neighbors_of, read_embeddings, room_variant_texts,
    DEFAULT_STOPWORDS,
};
pub use metrics::{read_metrics_csv, EpochMetrics, MetricsWriter, Phase, METRICS_HEADER};
pub use oracle::{
    chain_mdp, run_scripted_optimal, run_tabular_q_learning, tabular_oracle, Mdp, OracleError, Outcome,
    TabularConfig,
};
pub use transfer::{transfer_init, Carry, TransferSpec};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl HarnessError {
    fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}

/// Eval completion at or above this, held for [`THRESHOLD_WINDOW`]
/// consecutive epochs, counts as having learned the task.
pub const COMPLETION_THRESHOLD: f64 = 0.95;
pub const THRESHOLD_WINDOW: usize = 5;

/// Episodes per phase, steps per episode and epochs for a world: the short
/// protocol for worlds that show the quest without cues, the long one for
/// cue-driven exploration worlds.
pub fn protocol_for(world: &WorldDef) -> (usize, usize, usize) {
    if world.cue == CueMode::Exits {
        (20, 250, 40)
    } else {
        (50, 20, 100)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub agent: AgentKind,
    pub agent_config: AgentConfig,
    /// Episodes per phase.
    pub episodes: usize,
    /// Step limit per episode.
    pub steps: usize,
    pub epochs: usize,
    pub seed: u64,
    pub run_id: String,
    /// Directory for metrics, checkpoints and transcripts; nothing is
    /// written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Checkpoint every this many epochs (and after the last one).
    pub checkpoint_every: Option<usize>,
    /// Stop as soon as the completion threshold has been held long enough.
    pub stop_when_converged: bool,
    /// Record evaluation episodes to `<run-id>.transcript`.
    pub transcript: bool,
}

impl ExperimentConfig {
    pub fn for_world(world: &WorldDef, agent: AgentKind, seed: u64) -> Self {
        let (episodes, steps, epochs) = protocol_for(world);
        Self {
            agent,
            agent_config: AgentConfig::for_world(world),
            episodes,
            steps,
            epochs,
            seed,
            run_id: format!("{}-{}-seed{}", world.name, agent, seed),
            out_dir: None,
            checkpoint_every: None,
            stop_when_converged: false,
            transcript: false,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.episodes == 0 || self.steps == 0 {
            return Err(HarnessError::Config("episodes and steps must be at least 1".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(HarnessError::Config("checkpoint period must be at least 1".into()));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(HarnessError::Config(format!("bad run id `{}`", self.run_id)));
        }
        self.agent_config.validate()?;
        Ok(())
    }
}

/// Builds the agent a config asks for. `vocab_worlds` widen the vocabulary
/// beyond `world` (used to keep embeddings aligned for transfer).
pub fn build_agent(config: &ExperimentConfig, world: &World, vocab_worlds: &[&WorldDef]) -> Result<Agent, HarnessError> {
    if config.agent == AgentKind::Random {
        return Ok(Agent::Random(RandomAgent::new(world.n_actions())));
    }
    let agent = DqnAgent::for_world(
        config.agent,
        config.agent_config.clone(),
        world.def(),
        vocab_worlds,
        &mut rng::stream(config.seed, rng::INIT),
        rng::stream(config.seed, rng::REPLAY),
    )?;
    Ok(Agent::Dqn(Box::new(agent)))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct EpisodeStats {
    reward: f64,
    completed: bool,
    length: usize,
    invalid: usize,
}

fn summarize(epoch: usize, phase: Phase, episodes: &[EpisodeStats], started: Instant) -> EpochMetrics {
    let n = episodes.len().max(1) as f64;
    let steps: usize = episodes.iter().map(|e| e.length).sum();
    EpochMetrics {
        epoch,
        phase,
        avg_reward: episodes.iter().map(|e| e.reward).sum::<f64>() / n,
        quest_completion: episodes.iter().filter(|e| e.completed).count() as f64 / n,
        avg_length: steps as f64 / n,
        invalid_rate: if steps == 0 {
            0.0
        } else {
            episodes.iter().map(|e| e.invalid).sum::<usize>() as f64 / steps as f64
        },
        wall_time_s: started.elapsed().as_secs_f64(),
    }
}

type Recorder<'a> = Option<(&'a mut TranscriptWriter<Box<dyn Write>>, usize, usize)>;

/// Plays one episode. With `learn`, every transition goes to the agent and
/// exploration follows its schedule; otherwise exploration is fixed at
/// `eval_epsilon` and the agent is only queried.
fn play_episode(
    agent: &mut Agent,
    game: &mut Game,
    steps: usize,
    learn: bool,
    policy_rng: &mut ChaCha8Rng,
    mut recorder: Recorder<'_>,
) -> Result<EpisodeStats, HarnessError> {
    let mut stats = EpisodeStats::default();
    let mut obs: Observation = game.reset();
    let mut state: Arc<str> = Arc::from(obs.text.as_str());
    for t in 0..steps {
        let epsilon = if learn { agent.training_epsilon() } else { agent.eval_epsilon() };
        let command = agent.select(&obs, epsilon, policy_rng)?;
        let out = game.step(command)?;
        stats.reward += out.reward;
        stats.length += 1;
        if !out.valid_command {
            stats.invalid += 1;
        }
        if let Some((w, epoch, episode)) = recorder.as_mut() {
            let record = TranscriptRecord {
                epoch: *epoch,
                episode: *episode,
                step: t,
                command: command.display(game.world()).to_string(),
                reward: out.reward,
                terminal: out.terminal,
                observation: out.observation.text.clone(),
            };
            w.record(&record).map_err(HarnessError::io("transcript"))?;
        }
        let next_state: Arc<str> = Arc::from(out.observation.text.as_str());
        if learn {
            agent.observe(Transition {
                state: state.clone(),
                command,
                reward: out.reward,
                next_state: next_state.clone(),
                next_objects: Arc::from(out.observation.objects_cue.as_slice()),
                terminal: out.terminal,
            })?;
        }
        if out.terminal {
            stats.completed = out.quest_completed;
            break;
        }
        obs = out.observation;
        state = next_state;
    }
    Ok(stats)
}

/// Runs `episodes` evaluation episodes: fixed evaluation ε, no parameter
/// updates, no replay writes, no change to the exploration schedule.
pub fn run_epoch_eval(
    agent: &mut Agent,
    game: &mut Game,
    episodes: usize,
    steps: usize,
    eval_rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<EpochMetrics, HarnessError> {
    let started = Instant::now();
    let stats = (0..episodes)
        .map(|_| play_episode(agent, game, steps, false, eval_rng, None))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(epoch, Phase::Eval, &stats, started))
}

/// A running experiment: one agent, a training game and an evaluation game,
/// each with its own random streams.
pub struct Experiment {
    config: ExperimentConfig,
    world: Arc<World>,
    agent: Agent,
    train_game: Game,
    eval_game: Game,
    policy_rng: ChaCha8Rng,
    eval_policy_rng: ChaCha8Rng,
    metrics: Vec<EpochMetrics>,
    writer: Option<MetricsWriter>,
    transcript: Option<TranscriptWriter<Box<dyn Write>>>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, world: Arc<World>, agent: Agent) -> Result<Self, HarnessError> {
        config.validate()?;
        if agent.kind() != config.agent {
            return Err(HarnessError::Config(format!(
                "config asks for {} but the agent is {}",
                config.agent,
                agent.kind()
            )));
        }
        let seed = config.seed;
        let mut writer = None;
        let mut transcript = None;
        if let Some(dir) = &config.out_dir {
            fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
            let path = dir.join(format!("{}.csv", config.run_id));
            writer = Some(MetricsWriter::create(&path).map_err(HarnessError::io(&path))?);
            if config.transcript {
                let path = dir.join(format!("{}.transcript", config.run_id));
                let file = File::create(&path).map_err(HarnessError::io(&path))?;
                let out: Box<dyn Write> = Box::new(BufWriter::new(file));
                transcript = Some(TranscriptWriter::new(out));
            }
        }
        Ok(Self {
            train_game: Game::new(world.clone(), rng::stream(seed, rng::WORLD), rng::stream(seed, rng::DESCRIPTION)),
            eval_game: Game::new(
                world.clone(),
                rng::stream(seed, rng::EVAL_WORLD),
                rng::stream(seed, rng::EVAL_DESCRIPTION),
            ),
            policy_rng: rng::stream(seed, rng::POLICY),
            eval_policy_rng: rng::stream(seed, rng::EVAL_POLICY),
            config,
            world,
            agent,
            metrics: Vec::new(),
            writer,
            transcript,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn agent_mut(&mut self) -> &mut Agent {
        &mut self.agent
    }

    pub fn into_agent(self) -> Agent {
        self.agent
    }

    pub fn metrics(&self) -> &[EpochMetrics] {
        &self.metrics
    }

    pub fn epochs_done(&self) -> usize {
        self.metrics.len() / 2
    }

    /// One training phase followed by one evaluation phase.
    pub fn run_epoch(&mut self) -> Result<(EpochMetrics, EpochMetrics), HarnessError> {
        let epoch = self.epochs_done() + 1;
        let (m, t) = (self.config.episodes, self.config.steps);

        let started = Instant::now();
        let mut stats = Vec::with_capacity(m);
        for _ in 0..m {
            stats.push(play_episode(
                &mut self.agent,
                &mut self.train_game,
                t,
                true,
                &mut self.policy_rng,
                None,
            )?);
        }
        let train = summarize(epoch, Phase::Train, &stats, started);

        let started = Instant::now();
        let mut stats = Vec::with_capacity(m);
        for episode in 0..m {
            let recorder = self.transcript.as_mut().map(|w| (w, epoch, episode));
            stats.push(play_episode(
                &mut self.agent,
                &mut self.eval_game,
                t,
                false,
                &mut self.eval_policy_rng,
                recorder,
            )?);
        }
        let eval = summarize(epoch, Phase::Eval, &stats, started);

        if let Some(w) = &mut self.writer {
            w.append(&train).and_then(|_| w.append(&eval)).map_err(HarnessError::io("metrics"))?;
        }
        if let Some(w) = &mut self.transcript {
            w.flush().map_err(HarnessError::io("transcript"))?;
        }
        self.metrics.push(train.clone());
        self.metrics.push(eval.clone());

        let periodic = self.config.checkpoint_every.is_some_and(|p| epoch % p == 0);
        if periodic {
            self.checkpoint(epoch)?;
        }
        Ok((train, eval))
    }

    /// Writes `<run-id>-epoch<N>.ckpt` into the output directory, if any.
    pub fn checkpoint(&self, epoch: usize) -> Result<Option<PathBuf>, HarnessError> {
        let (Some(dir), Agent::Dqn(agent)) = (&self.config.out_dir, &self.agent) else {
            return Ok(None);
        };
        let path = dir.join(format!("{}-epoch{}.ckpt", self.config.run_id, epoch));
        let mut extra = KvMap::new();
        extra.set("world", &self.world.def().name);
        extra.set("world_hash", self.world.def().content_hash());
        extra.set("epoch", epoch);
        extra.set("seed", self.config.seed);
        crate::agent::save_checkpoint(agent, &path, &extra)?;
        Ok(Some(path))
    }

    /// Runs the remaining epochs (or until convergence, if configured).
    pub fn run(&mut self) -> Result<&[EpochMetrics], HarnessError> {
        while self.epochs_done() < self.config.epochs {
            self.run_epoch()?;
            if self.config.stop_when_converged && epochs_to_threshold(&self.metrics).is_some() {
                break;
            }
        }
        let last = self.epochs_done();
        let already = self.config.checkpoint_every.is_some_and(|p| last % p == 0);
        if last > 0 && self.config.checkpoint_every.is_some() && !already {
            self.checkpoint(last)?;
        }
        Ok(&self.metrics)
    }
}

/// Builds the configured agent on `world` and runs every epoch.
pub fn run_experiment(config: ExperimentConfig, world: Arc<World>) -> Result<Experiment, HarnessError> {
    let agent = build_agent(&config, &world, &[])?;
    let mut exp = Experiment::new(config, world, agent)?;
    exp.run()?;
    Ok(exp)
}

fn eval_series(metrics: &[EpochMetrics]) -> impl Iterator<Item = &EpochMetrics> {
    metrics.iter().filter(|m| m.phase == Phase::Eval)
}

/// First epoch whose evaluation completion reaches the threshold.
pub fn first_crossing(metrics: &[EpochMetrics]) -> Option<usize> {
    eval_series(metrics)
        .find(|m| m.quest_completion >= COMPLETION_THRESHOLD)
        .map(|m| m.epoch)
}

/// First epoch that starts a run of [`THRESHOLD_WINDOW`] consecutive
/// evaluation epochs at or above the threshold.
pub fn epochs_to_threshold(metrics: &[EpochMetrics]) -> Option<usize> {
    let evals: Vec<&EpochMetrics> = eval_series(metrics).collect();
    evals
        .windows(THRESHOLD_WINDOW)
        .find(|w| w.iter().all(|m| m.quest_completion >= COMPLETION_THRESHOLD))
        .map(|w| w[0].epoch)
}

/// Mean evaluation completion over the last `window` epochs.
pub fn final_completion(metrics: &[EpochMetrics], window: usize) -> f64 {
    let evals: Vec<f64> = eval_series(metrics).map(|m| m.quest_completion).collect();
    let tail = &evals[evals.len().saturating_sub(window)..];
    if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// Mean evaluation reward over the last `window` epochs.
pub fn final_reward(metrics: &[EpochMetrics], window: usize) -> f64 {
    let evals: Vec<f64> = eval_series(metrics).map(|m| m.avg_reward).collect();
    let tail = &evals[evals.len().saturating_sub(window)..];
    if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

#[cfg(test)]
mod tests;
