//! Text-adventure worlds and deep Q-learning agents that learn to play them.
//!
//! * [`world`]: the world description language, its validator and the
//!   built-in worlds.
//! * [`engine`]: hidden game state, stochastic descriptions and rewards.
//! * [`neural`]: LSTM representation, action scorer, gradients, RMSprop.
//! * [`agent`]: the LSTM-DQN agent, its baselines and replay memory.
//! * [`harness`]: the train/evaluate protocol, analyses and oracles.

pub mod agent;
pub mod engine;
pub mod harness;
pub mod kv;
pub mod neural;
pub mod rng;
pub mod text;
pub mod world;

pub use agent::{Agent, AgentConfig, AgentKind, DqnAgent, RandomAgent, SamplingMode, Transition, Vocab};
pub use engine::{Command, Game, GameState, Observation, StepOutcome};
pub use world::{Builtin, World, WorldDef};
