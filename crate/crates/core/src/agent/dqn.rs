use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{
    random_command, AgentConfig, AgentError, AgentKind, Featurizer, Representation, ReplayMemory, ScorerKind,
    Transition, Vocab,
};
use crate::engine::{Command, Observation};
use crate::neural::{ForwardOptions, ForwardTrace, Gradients, HeadGrads, NetInput, NetParams, NetShape, ReprShape, RmsProp};
use crate::world::WorldDef;

/// Value of command `(a, o)`: the mean of its action and object scores.
pub fn command_q(action_q: &[f64], object_q: &[f64], command: Command) -> f64 {
    (action_q[command.action] + object_q[command.object]) / 2.0
}

/// Index of the first maximum among `candidates`.
fn argmax_over(scores: &[f64], candidates: impl Iterator<Item = usize>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for i in candidates {
        let v = scores[i];
        if v > best.1 || (v == best.1 && i < best.0) || best.0 == usize::MAX {
            best = (i, v);
        }
    }
    best
}

/// The admissible command with the highest value. Because the value is a
/// mean of two independent scores, this is the best action paired with the
/// best cued object; ties go to the lowest index.
pub fn greedy_command(action_q: &[f64], object_q: &[f64], cue: &[usize]) -> Command {
    let (a, _) = argmax_over(action_q, 0..action_q.len());
    let (o, _) = argmax_over(object_q, cue.iter().copied());
    Command::new(a, o)
}

/// `r` at terminal states, else `r + γ·max Q(s', ·)` over the cued commands.
pub fn compute_target(
    reward: f64,
    terminal: bool,
    gamma: f64,
    next_action_q: &[f64],
    next_object_q: &[f64],
    next_cue: &[usize],
) -> f64 {
    if terminal {
        return reward;
    }
    let (_, a) = argmax_over(next_action_q, 0..next_action_q.len());
    let (_, o) = argmax_over(next_object_q, next_cue.iter().copied());
    reward + gamma * (a + o) / 2.0
}

/// A text prepared for the network.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub tokens: Vec<u32>,
    pub features: Option<Array1<f64>>,
}

/// Deep Q-learning agent: representation generator plus action scorer,
/// ε-greedy control, two-pool replay and RMSprop updates.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    kind: AgentKind,
    config: AgentConfig,
    vocab: Arc<Vocab>,
    featurizer: Option<Featurizer>,
    params: NetParams,
    target: Option<NetParams>,
    optimizer: RmsProp,
    memory: ReplayMemory,
    replay_rng: ChaCha8Rng,
    transitions: u64,
    updates: u64,
    encoded: HashMap<Arc<str>, Encoded>,
    q_cache: HashMap<Arc<str>, (Array1<f64>, Array1<f64>)>,
}

impl DqnAgent {
    /// Fresh agent for a world with `n_actions` actions and `n_objects`
    /// command arguments.
    pub fn new(
        kind: AgentKind,
        config: AgentConfig,
        vocab: Arc<Vocab>,
        featurizer: Option<Featurizer>,
        n_actions: usize,
        n_objects: usize,
        init_rng: &mut ChaCha8Rng,
        replay_rng: ChaCha8Rng,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        let (repr, scorer) = kind
            .parts()
            .ok_or_else(|| AgentError::Config("the random agent has no network".into()))?;
        let repr_shape = match (repr, &featurizer) {
            (Representation::Lstm, None) => ReprShape::Lstm {
                vocab_size: vocab.len(),
                embed_dim: config.embed_dim,
                lstm_dim: config.lstm_dim,
            },
            (Representation::BagOfWords | Representation::BagOfBigrams, Some(f)) => {
                ReprShape::Features { dim: f.dim() }
            }
            _ => return Err(AgentError::Config(format!("{kind} needs a matching featurizer"))),
        };
        let shape = NetShape {
            repr: repr_shape,
            hidden_dim: (scorer == ScorerKind::Deep).then_some(config.hidden_dim),
            n_actions,
            n_objects,
        };
        let params = NetParams::init(&shape, init_rng)?;
        Self::with_params(kind, config, vocab, featurizer, params, replay_rng)
    }

    /// Agent around existing parameters, with empty memory and a fresh
    /// exploration schedule.
    pub fn with_params(
        kind: AgentKind,
        config: AgentConfig,
        vocab: Arc<Vocab>,
        featurizer: Option<Featurizer>,
        params: NetParams,
        replay_rng: ChaCha8Rng,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        let optimizer = RmsProp::new(&params, config.learning_rate);
        let target = config.target_refresh.map(|_| params.clone());
        Ok(Self {
            kind,
            memory: ReplayMemory::new(config.replay_capacity),
            config,
            vocab,
            featurizer,
            params,
            target,
            optimizer,
            replay_rng,
            transitions: 0,
            updates: 0,
            encoded: HashMap::new(),
            q_cache: HashMap::new(),
        })
    }

    /// Builds the vocabulary (and bigram inventory) from `vocab_worlds` and
    /// sizes the heads for `world`.
    pub fn for_world(
        kind: AgentKind,
        config: AgentConfig,
        world: &WorldDef,
        vocab_worlds: &[&WorldDef],
        init_rng: &mut ChaCha8Rng,
        replay_rng: ChaCha8Rng,
    ) -> Result<Self, AgentError> {
        let mut sources: Vec<&WorldDef> = vec![world];
        sources.extend(vocab_worlds.iter().copied());
        let vocab = Vocab::from_worlds(sources.iter().copied());
        let featurizer = match kind.parts().map(|p| p.0) {
            Some(Representation::BagOfWords) => Some(Featurizer::words(&vocab)),
            Some(Representation::BagOfBigrams) => {
                let texts: Vec<String> = sources.iter().flat_map(|w| w.all_texts()).collect();
                Some(Featurizer::bigrams(&vocab, &texts))
            }
            _ => None,
        };
        let n_actions = world.actions.len();
        let n_objects = world.command_count() / n_actions;
        Self::new(kind, config, Arc::new(vocab), featurizer, n_actions, n_objects, init_rng, replay_rng)
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Arc<Vocab> {
        &self.vocab
    }

    pub fn featurizer(&self) -> Option<&Featurizer> {
        self.featurizer.as_ref()
    }

    pub fn params(&self) -> &NetParams {
        &self.params
    }

    /// Replaces the parameters; the optimizer state and caches are reset.
    pub fn set_params(&mut self, params: NetParams) -> Result<(), AgentError> {
        if params.shape() != self.params.shape() {
            return Err(AgentError::Config("parameter shapes differ".into()));
        }
        self.optimizer = RmsProp::new(&params, self.config.learning_rate);
        if self.target.is_some() {
            self.target = Some(params.clone());
        }
        self.params = params;
        self.q_cache.clear();
        Ok(())
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn optimizer(&self) -> &RmsProp {
        &self.optimizer
    }

    /// Training transitions observed so far (drives the ε anneal).
    pub fn transitions_seen(&self) -> u64 {
        self.transitions
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn training_epsilon(&self) -> f64 {
        self.config.epsilon.value(self.transitions)
    }

    pub fn n_actions(&self) -> usize {
        self.params.scorer.action.outputs()
    }

    pub fn n_objects(&self) -> usize {
        self.params.scorer.object.outputs()
    }

    fn forward_options(&self) -> ForwardOptions {
        ForwardOptions {
            rollout_cap: self.config.rollout_cap,
            pooling: self.config.pooling,
        }
    }

    fn encode(&mut self, text: &Arc<str>) {
        if self.encoded.contains_key(&**text) {
            return;
        }
        let tokens = self.vocab.tokenize(text);
        let features = self.featurizer.as_ref().map(|f| f.features(&tokens));
        self.encoded.insert(text.clone(), Encoded { tokens, features });
    }

    /// Forward pass over already-encoded texts.
    fn forward_encoded(&self, params: &NetParams, texts: &[Arc<str>]) -> Result<ForwardTrace, AgentError> {
        let enc: Vec<&Encoded> = texts.iter().map(|t| &self.encoded[&**t]).collect();
        let opts = self.forward_options();
        let trace = if self.featurizer.is_some() {
            let dim = params.scorer.input_dim();
            let mut x = Array2::zeros((enc.len(), dim));
            for (mut row, e) in x.rows_mut().into_iter().zip(&enc) {
                row.assign(e.features.as_ref().expect("featurized"));
            }
            params.forward(NetInput::Features(&x), &opts)?
        } else {
            let seqs: Vec<&[u32]> = enc.iter().map(|e| e.tokens.as_slice()).collect();
            params.forward(NetInput::Tokens(&seqs), &opts)?
        };
        Ok(trace)
    }

    /// Action and object scores for one observation text.
    pub fn q_values(&mut self, text: &str) -> Result<(Array1<f64>, Array1<f64>), AgentError> {
        if let Some(q) = self.q_cache.get(text) {
            return Ok(q.clone());
        }
        let key: Arc<str> = Arc::from(text);
        self.encode(&key);
        let trace = self.forward_encoded(&self.params, std::slice::from_ref(&key))?;
        let q = (trace.action_q.row(0).to_owned(), trace.object_q.row(0).to_owned());
        self.q_cache.insert(key, q.clone());
        Ok(q)
    }

    /// The state vector the scorer sees for `text`.
    pub fn represent(&mut self, text: &str) -> Result<Array1<f64>, AgentError> {
        let key: Arc<str> = Arc::from(text);
        self.encode(&key);
        let trace = self.forward_encoded(&self.params, std::slice::from_ref(&key))?;
        Ok(trace.state.row(0).to_owned())
    }

    /// ε-greedy over the admissible commands of `obs`.
    pub fn select(&mut self, obs: &Observation, epsilon: f64, rng: &mut ChaCha8Rng) -> Result<Command, AgentError> {
        if rng.random::<f64>() < epsilon {
            return Ok(random_command(obs, self.n_actions(), rng));
        }
        let (a, o) = self.q_values(&obs.text)?;
        Ok(greedy_command(
            a.as_slice().expect("contiguous"),
            o.as_slice().expect("contiguous"),
            &obs.objects_cue,
        ))
    }

    /// Stores `t` and, every `update_period` transitions once the memory
    /// holds `learn_start`, samples a minibatch and takes one update.
    pub fn observe(&mut self, t: Transition) -> Result<Option<f64>, AgentError> {
        self.memory.store(t);
        self.transitions += 1;
        let due = self.transitions % self.config.update_period == 0
            && self.memory.len() >= self.config.learn_start.max(1);
        if !due {
            return Ok(None);
        }
        let batch: Vec<Transition> = self
            .memory
            .sample(
                self.config.batch_size,
                self.config.rho,
                self.config.sampling,
                &mut self.replay_rng,
            )?
            .into_iter()
            .cloned()
            .collect();
        self.train_step(&batch).map(Some)
    }

    /// Target value of `t` under the current (or frozen target) parameters.
    pub fn target_for(&mut self, t: &Transition) -> Result<f64, AgentError> {
        if t.terminal {
            return Ok(t.reward);
        }
        self.encode(&t.next_state);
        let params = self.target.as_ref().unwrap_or(&self.params);
        let trace = self.forward_encoded(params, std::slice::from_ref(&t.next_state))?;
        Ok(compute_target(
            t.reward,
            false,
            self.config.gamma,
            trace.action_q.row(0).as_slice().expect("contiguous"),
            trace.object_q.row(0).as_slice().expect("contiguous"),
            &t.next_objects,
        ))
    }

    /// Mean squared error of the batch against its targets and the gradient
    /// of that loss, without applying it.
    pub fn loss_and_gradients(&mut self, batch: &[Transition]) -> Result<(f64, Gradients), AgentError> {
        if batch.is_empty() {
            return Err(AgentError::Config("empty minibatch".into()));
        }
        for t in batch {
            self.encode(&t.state);
            if !t.terminal {
                self.encode(&t.next_state);
            }
        }

        // Each distinct text is run once.
        let mut rows: HashMap<&str, usize> = HashMap::new();
        let mut states: Vec<Arc<str>> = Vec::new();
        let state_row: Vec<usize> = batch
            .iter()
            .map(|t| {
                *rows.entry(&*t.state).or_insert_with(|| {
                    states.push(t.state.clone());
                    states.len() - 1
                })
            })
            .collect();
        let trace = self.forward_encoded(&self.params, &states)?;

        // Targets: with live parameters, next states already in the batch
        // reuse the rows just computed.
        let mut next_rows: HashMap<&str, usize> = HashMap::new();
        let mut next_states: Vec<Arc<str>> = Vec::new();
        let live = self.target.is_none();
        let next_ref: Vec<Option<(bool, usize)>> = batch
            .iter()
            .map(|t| {
                if t.terminal {
                    return None;
                }
                if live {
                    if let Some(&r) = rows.get(&*t.next_state) {
                        return Some((true, r));
                    }
                }
                let r = *next_rows.entry(&*t.next_state).or_insert_with(|| {
                    next_states.push(t.next_state.clone());
                    next_states.len() - 1
                });
                Some((false, r))
            })
            .collect();
        let next_trace = if next_states.is_empty() {
            None
        } else {
            let params = self.target.as_ref().unwrap_or(&self.params);
            Some(self.forward_encoded(params, &next_states)?)
        };

        let n = batch.len() as f64;
        let mut head = HeadGrads {
            action: Array2::zeros(trace.action_q.dim()),
            object: Array2::zeros(trace.object_q.dim()),
        };
        let mut loss = 0.0;
        for (j, t) in batch.iter().enumerate() {
            let y = match next_ref[j] {
                None => t.reward,
                Some((same, r)) => {
                    let src = if same { &trace } else { next_trace.as_ref().expect("forwarded") };
                    compute_target(
                        t.reward,
                        false,
                        self.config.gamma,
                        src.action_q.row(r).as_slice().expect("contiguous"),
                        src.object_q.row(r).as_slice().expect("contiguous"),
                        &t.next_objects,
                    )
                }
            };
            let row = state_row[j];
            let (a, o) = (t.command.action, t.command.object);
            let q = (trace.action_q[[row, a]] + trace.object_q[[row, o]]) / 2.0;
            let diff = q - y;
            loss += diff * diff / n;
            // d(mean (q − y)²)/dq, split evenly between the two heads
            let dq = 2.0 * diff / n;
            head.action[[row, a]] += dq / 2.0;
            head.object[[row, o]] += dq / 2.0;
        }
        if !loss.is_finite() {
            return Err(AgentError::NonFiniteLoss(loss));
        }
        let grads = self.params.backward(&trace, &head)?;
        Ok((loss, grads))
    }

    /// One RMSprop step on the minibatch loss; returns the loss.
    pub fn train_step(&mut self, batch: &[Transition]) -> Result<f64, AgentError> {
        let (loss, grads) = self.loss_and_gradients(batch)?;
        self.optimizer.step(&mut self.params, &grads)?;
        self.updates += 1;
        self.q_cache.clear();
        if let Some(period) = self.config.target_refresh {
            if self.updates % period == 0 {
                self.target = Some(self.params.clone());
            }
        }
        Ok(loss)
    }
}
