//! Exact reference answers: a scripted shortest-path player for the game
//! worlds, and value iteration plus a lookup-table Q-learner for small MDPs.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;

use super::{summarize, EpisodeStats, HarnessError, Phase};
use super::metrics::EpochMetrics;
use crate::agent::{EpsilonSchedule, Prioritized, ReplayMemory, SamplingMode};
use crate::engine::{Command, Game};
use crate::rng;
use crate::world::World;

/// Plays `episodes` episodes with full knowledge of the hidden state,
/// walking a shortest route to the quest object and using it.
pub fn run_scripted_optimal(
    world: Arc<World>,
    episodes: usize,
    steps: usize,
    seed: u64,
) -> Result<EpochMetrics, HarnessError> {
    let started = Instant::now();
    let mut game = Game::new(
        world.clone(),
        rng::stream(seed, rng::EVAL_WORLD),
        rng::stream(seed, rng::EVAL_DESCRIPTION),
    );
    let mv = world.move_action();
    let mut all = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        game.reset();
        let mut stats = EpisodeStats::default();
        for _ in 0..steps {
            let state = game.hidden_state().expect("reset").clone();
            let (action, object) = world.quest_goal(state.quest());
            let goal_room = world.object_room(object);
            let command = if state.room() == goal_room {
                Command::new(action, object)
            } else {
                let route = world
                    .shortest_route(state.room(), goal_room)
                    .ok_or_else(|| HarnessError::Config("quest object is unreachable".into()))?;
                let mv = mv.ok_or_else(|| HarnessError::Config("world has no movement action".into()))?;
                Command::new(mv, world.direction_arg(route[0]))
            };
            let out = game.step(command)?;
            stats.reward += out.reward;
            stats.length += 1;
            if !out.valid_command {
                stats.invalid += 1;
            }
            if out.terminal {
                stats.completed = out.quest_completed;
                break;
            }
        }
        all.push(stats);
    }
    Ok(summarize(1, Phase::Eval, &all, started))
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("discount must be in [0, 1), got {0}")]
    Gamma(f64),
    #[error("MDP has {0} state-action pairs; the oracle handles at most 1000")]
    TooLarge(usize),
    #[error("malformed MDP: {0}")]
    Malformed(String),
}

/// One possible result of taking an action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    /// `None` ends the episode.
    pub next: Option<usize>,
    pub reward: f64,
}

/// A small explicit MDP: `transitions[s][a]` lists the outcomes of `a` in `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub start: usize,
    pub transitions: Vec<Vec<Vec<Outcome>>>,
}

impl Mdp {
    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::Malformed(m));
        if self.transitions.len() != self.n_states || self.start >= self.n_states {
            return bad("state count".into());
        }
        for (s, row) in self.transitions.iter().enumerate() {
            if row.len() != self.n_actions {
                return bad(format!("state {s} has {} actions", row.len()));
            }
            for (a, outs) in row.iter().enumerate() {
                let total: f64 = outs.iter().map(|o| o.prob).sum();
                if (total - 1.0).abs() > 1e-9 || outs.iter().any(|o| o.next.is_some_and(|n| n >= self.n_states)) {
                    return bad(format!("outcomes of ({s}, {a})"));
                }
            }
        }
        Ok(())
    }

    fn sample(&self, s: usize, a: usize, rng: &mut impl Rng) -> Outcome {
        let outs = &self.transitions[s][a];
        let mut u = rng.random::<f64>();
        for o in outs {
            if u < o.prob {
                return *o;
            }
            u -= o.prob;
        }
        *outs.last().expect("validated")
    }
}

/// A deterministic corridor of `n` states. Action 1 (`right`) moves one
/// state on, and from the last state ends the episode with `goal_reward`;
/// action 0 (`left`) moves back (staying put in state 0). Every
/// non-terminal move costs `step_reward`.
pub fn chain_mdp(n: usize, step_reward: f64, goal_reward: f64) -> Mdp {
    let transitions = (0..n)
        .map(|s| {
            let left = Outcome {
                prob: 1.0,
                next: Some(s.saturating_sub(1)),
                reward: step_reward,
            };
            let right = if s + 1 == n {
                Outcome {
                    prob: 1.0,
                    next: None,
                    reward: goal_reward,
                }
            } else {
                Outcome {
                    prob: 1.0,
                    next: Some(s + 1),
                    reward: step_reward,
                }
            };
            vec![vec![left], vec![right]]
        })
        .collect();
    Mdp {
        n_states: n,
        n_actions: 2,
        start: 0,
        transitions,
    }
}

/// Exact `Q*` by value iteration, iterated until the sup-norm change is
/// below 1e-12.
pub fn tabular_oracle(mdp: &Mdp, gamma: f64) -> Result<Vec<Vec<f64>>, OracleError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(OracleError::Gamma(gamma));
    }
    let pairs = mdp.n_states * mdp.n_actions;
    if pairs > 1000 {
        return Err(OracleError::TooLarge(pairs));
    }
    mdp.validate()?;
    let mut q = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
    loop {
        let v: Vec<f64> = q.iter().map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
        let mut delta: f64 = 0.0;
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let new: f64 = mdp.transitions[s][a]
                    .iter()
                    .map(|o| o.prob * (o.reward + gamma * o.next.map_or(0.0, |n| v[n])))
                    .sum();
                delta = delta.max((new - q[s][a]).abs());
                q[s][a] = new;
            }
        }
        if delta < 1e-12 {
            return Ok(q);
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct TableTransition {
    state: usize,
    action: usize,
    reward: f64,
    next: Option<usize>,
}

impl Prioritized for TableTransition {
    fn priority(&self) -> bool {
        self.reward > 0.0
    }
}

/// Settings for [`run_tabular_q_learning`].
#[derive(Debug, Clone, PartialEq)]
pub struct TabularConfig {
    pub gamma: f64,
    pub rho: f64,
    pub batch_size: usize,
    pub update_period: u64,
    pub learning_rate: f64,
    pub episodes: usize,
    pub steps: usize,
    pub epsilon: EpsilonSchedule,
    pub seed: u64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            rho: 0.25,
            batch_size: 16,
            update_period: 4,
            learning_rate: 0.5,
            episodes: 2000,
            steps: 20,
            epsilon: EpsilonSchedule {
                horizon: 10_000,
                ..EpsilonSchedule::default()
            },
            seed: 0,
        }
    }
}

/// The deep Q-learning loop with the network swapped for a lookup table:
/// ε-greedy play, two-pool replay, gradient-stopped targets and a gradient
/// step on the mean squared error of each minibatch.
pub fn run_tabular_q_learning(mdp: &Mdp, cfg: &TabularConfig) -> Result<Vec<Vec<f64>>, OracleError> {
    mdp.validate()?;
    if !(0.0..1.0).contains(&cfg.gamma) {
        return Err(OracleError::Gamma(cfg.gamma));
    }
    let mut policy_rng = rng::stream(cfg.seed, rng::POLICY);
    let mut world_rng = rng::stream(cfg.seed, rng::WORLD);
    let mut replay_rng = rng::stream(cfg.seed, rng::REPLAY);
    let mut q = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
    let mut memory = ReplayMemory::new(100_000);
    let mut seen = 0u64;
    let greedy = |row: &[f64]| {
        let mut best = 0;
        for (a, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = a;
            }
        }
        best
    };
    for _ in 0..cfg.episodes {
        let mut s = mdp.start;
        for _ in 0..cfg.steps {
            let a = if policy_rng.random::<f64>() < cfg.epsilon.value(seen) {
                policy_rng.random_range(0..mdp.n_actions)
            } else {
                greedy(&q[s])
            };
            let o = mdp.sample(s, a, &mut world_rng);
            memory.store(TableTransition {
                state: s,
                action: a,
                reward: o.reward,
                next: o.next,
            });
            seen += 1;
            if seen % cfg.update_period == 0 && memory.len() >= cfg.batch_size {
                let batch: Vec<TableTransition> = memory
                    .sample(cfg.batch_size, cfg.rho, SamplingMode::Prioritized, &mut replay_rng)
                    .expect("non-empty")
                    .into_iter()
                    .copied()
                    .collect();
                let n = batch.len() as f64;
                let mut grad = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
                for t in &batch {
                    let y = t.reward + t.next.map_or(0.0, |n| cfg.gamma * q[n][greedy(&q[n])]);
                    grad[t.state][t.action] += 2.0 * (q[t.state][t.action] - y) / n;
                }
                for (row, g) in q.iter_mut().zip(&grad) {
                    for (v, g) in row.iter_mut().zip(g) {
                        *v -= cfg.learning_rate * g;
                    }
                }
            }
            match o.next {
                Some(n) => s = n,
                None => break,
            }
        }
    }
    Ok(q)
}
