//! Fixtures shared by the benchmarks: the Home world, a trained-size agent
//! and replay-shaped transitions from random play.

use std::sync::Arc;

use mudqn_core::agent::random_command;
use mudqn_core::neural::{ForwardTrace, HeadGrads};
use mudqn_core::{rng, AgentConfig, AgentKind, Builtin, DqnAgent, Game, Transition, World};
use ndarray::Array2;

pub fn home() -> Arc<World> {
    Arc::new(World::new(Builtin::Home.load()).expect("built-in world"))
}

pub fn agent(world: &World, kind: AgentKind, seed: u64) -> DqnAgent {
    let def = world.def();
    DqnAgent::for_world(
        kind,
        AgentConfig::for_world(def),
        def,
        &[],
        &mut rng::stream(seed, rng::INIT),
        rng::stream(seed, rng::REPLAY),
    )
    .expect("agent for the home world")
}

/// `n` transitions from uniformly random play, episodes capped at 20 steps.
pub fn transitions(world: &Arc<World>, n: usize, seed: u64) -> Vec<Transition> {
    let mut game = Game::new(world.clone(), rng::stream(seed, rng::WORLD), rng::stream(seed, rng::DESCRIPTION));
    let mut policy = rng::stream(seed, rng::POLICY);
    let mut out = Vec::with_capacity(n);
    let mut obs = game.reset();
    let mut t = 0;
    while out.len() < n {
        let command = random_command(&obs, world.n_actions(), &mut policy);
        let step = game.step(command).expect("live episode");
        out.push(Transition {
            state: Arc::from(obs.text.as_str()),
            command,
            reward: step.reward,
            next_state: Arc::from(step.observation.text.as_str()),
            next_objects: Arc::from(step.observation.objects_cue.as_slice()),
            terminal: step.terminal,
        });
        t += 1;
        if step.terminal || t == 20 {
            obs = game.reset();
            t = 0;
        } else {
            obs = step.observation;
        }
    }
    out
}

/// Upstream gradient of the sum of every Q value.
pub fn unit_head_grads(trace: &ForwardTrace) -> HeadGrads {
    HeadGrads {
        action: Array2::ones(trace.action_q.raw_dim()),
        object: Array2::ones(trace.object_q.raw_dim()),
    }
}
