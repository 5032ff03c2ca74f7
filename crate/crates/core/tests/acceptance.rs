//! End-to-end acceptance checks against independent oracles and full
//! training runs. Prints one `[PASS]`/`[FAIL]` line per criterion and exits
//! non-zero if any fails.
//!
//! `ACCEPTANCE_ONLY=3,4,9` runs a subset. The training criteria take the
//! better part of an hour on one core.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mudqn_core::agent::{load_checkpoint, EpsilonSchedule, Prioritized, ReplayMemory};
use mudqn_core::harness::{
    build_agent, chain_mdp, epochs_to_threshold, final_completion, final_reward, first_crossing, nearest_neighbors,
    room_variant_texts, run_epoch_eval, run_scripted_optimal, run_tabular_q_learning, tabular_oracle, transfer_init,
    Carry, EpochMetrics, Experiment, ExperimentConfig, Phase, TabularConfig, TransferSpec,
};
use mudqn_core::neural::{ForwardOptions, HeadGrads, NetInput, NetParams, NetShape, Pooling, ReprShape};
use mudqn_core::world::{builtin_bridge_world, builtin_home_world, builtin_home_world_variant};
use mudqn_core::{rng, AgentKind, DqnAgent, Game, SamplingMode, Transition, World, WorldDef};

const SEEDS: [u64; 3] = [1, 2, 3];
const FINAL_WINDOW: usize = 10;

type Verdict = (bool, String);

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Epoch counts where "never" sorts after every real epoch.
fn epochs_or_never(e: Option<usize>) -> f64 {
    e.map_or(f64::INFINITY, |e| e as f64)
}

fn show_epochs(xs: &[Option<usize>]) -> String {
    let parts: Vec<String> = xs.iter().map(|e| e.map_or("never".into(), |e| e.to_string())).collect();
    parts.join("/")
}

fn show(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3}")).collect();
    parts.join("/")
}

fn eval_rows(metrics: &[EpochMetrics]) -> impl Iterator<Item = &EpochMetrics> {
    metrics.iter().filter(|m| m.phase == Phase::Eval)
}

struct Run {
    metrics: Vec<EpochMetrics>,
    checkpoint: Option<PathBuf>,
}

impl Run {
    fn completion(&self) -> f64 {
        final_completion(&self.metrics, FINAL_WINDOW)
    }
}

/// Every training run the criteria share, computed on first use.
struct Lab {
    dir: tempfile::TempDir,
    home: Arc<World>,
    variant: Arc<World>,
    bridge: Arc<World>,
    runs: BTreeMap<String, Run>,
}

impl Lab {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().expect("temp dir"),
            home: Arc::new(World::new(builtin_home_world()).unwrap()),
            variant: Arc::new(World::new(builtin_home_world_variant()).unwrap()),
            bridge: Arc::new(World::new(builtin_bridge_world()).unwrap()),
            runs: BTreeMap::new(),
        }
    }

    fn out(&self) -> &Path {
        self.dir.path()
    }

    fn train(&mut self, key: String, config: ExperimentConfig, world: Arc<World>) -> &Run {
        if !self.runs.contains_key(&key) {
            let started = Instant::now();
            let agent = build_agent(&config, &world, &[]).unwrap();
            self.finish(key.clone(), config, world, agent, started);
        }
        &self.runs[&key]
    }

    fn finish(
        &mut self,
        key: String,
        config: ExperimentConfig,
        world: Arc<World>,
        agent: mudqn_core::Agent,
        started: Instant,
    ) {
        let mut exp = Experiment::new(config, world, agent).unwrap();
        exp.run().unwrap();
        let epochs = exp.epochs_done();
        let checkpoint = exp
            .config()
            .out_dir
            .as_ref()
            .map(|d| d.join(format!("{}-epoch{}.ckpt", exp.config().run_id, epochs)))
            .filter(|p| p.exists());
        println!(
            "    run {key}: {epochs} epochs, final completion {:.3}, {:.0}s",
            final_completion(exp.metrics(), FINAL_WINDOW),
            started.elapsed().as_secs_f64()
        );
        self.runs.insert(
            key,
            Run {
                metrics: exp.metrics().to_vec(),
                checkpoint,
            },
        );
    }

    fn config(&self, world: &World, kind: AgentKind, seed: u64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::for_world(world.def(), kind, seed);
        cfg.out_dir = Some(self.out().to_path_buf());
        cfg
    }

    /// Full 100-epoch Home run, checkpointed at the end.
    fn home(&mut self, kind: AgentKind, seed: u64) -> &Run {
        let mut cfg = self.config(&self.home, kind, seed);
        cfg.checkpoint_every = Some(cfg.epochs);
        let world = self.home.clone();
        self.train(format!("home/{kind}/{seed}"), cfg, world)
    }

    fn home_uniform(&mut self, seed: u64) -> &Run {
        let mut cfg = self.config(&self.home, AgentKind::LstmDqn, seed);
        cfg.agent_config.sampling = SamplingMode::Uniform;
        cfg.run_id.push_str("-uniform");
        cfg.stop_when_converged = true;
        let world = self.home.clone();
        self.train(format!("home-uniform/{seed}"), cfg, world)
    }

    fn variant_scratch(&mut self, seed: u64) -> &Run {
        let mut cfg = self.config(&self.variant, AgentKind::LstmDqn, seed);
        cfg.stop_when_converged = true;
        let world = self.variant.clone();
        self.train(format!("variant-scratch/{seed}"), cfg, world)
    }

    fn variant_transfer(&mut self, seed: u64) -> &Run {
        let key = format!("variant-transfer/{seed}");
        if !self.runs.contains_key(&key) {
            let source = self.home(AgentKind::LstmDqn, seed).checkpoint.clone().expect("home checkpoint");
            let started = Instant::now();
            let mut cfg = self.config(&self.variant, AgentKind::LstmDqn, seed);
            cfg.stop_when_converged = true;
            cfg.run_id.push_str("-transfer");
            let spec = TransferSpec {
                source,
                carry: Carry::Representation,
            };
            let agent = transfer_init(&spec, self.variant.def(), &cfg).unwrap();
            let world = self.variant.clone();
            self.finish(key.clone(), cfg, world, agent, started);
        }
        &self.runs[&key]
    }

    fn bridge(&mut self, kind: AgentKind, seed: u64) -> &Run {
        let cfg = self.config(&self.bridge, kind, seed);
        let world = self.bridge.clone();
        self.train(format!("bridge/{kind}/{seed}"), cfg, world)
    }

    fn home_completions(&mut self, kind: AgentKind) -> Vec<f64> {
        SEEDS.iter().map(|&s| self.home(kind, s).completion()).collect()
    }
}

// 1 ---------------------------------------------------------------------

fn home_learning(lab: &mut Lab) -> Verdict {
    let mut finals = Vec::new();
    let mut crossings = Vec::new();
    for s in SEEDS {
        let run = lab.home(AgentKind::LstmDqn, s);
        finals.push(run.completion());
        crossings.push(first_crossing(&run.metrics));
    }
    let med_final = median(finals.clone());
    let med_cross = median(crossings.iter().map(|&c| epochs_or_never(c)).collect());
    (
        med_final >= 0.95 && med_cross <= 70.0,
        format!(
            "last-10 completion {} (median {med_final:.3}, need >= 0.95); first crossing {} (median {med_cross}, need <= 70)",
            show(&finals),
            show_epochs(&crossings)
        ),
    )
}

// 2 ---------------------------------------------------------------------

fn baseline_ordering(lab: &mut Lab) -> Verdict {
    let lstm = median(lab.home_completions(AgentKind::LstmDqn));
    let bi = median(lab.home_completions(AgentKind::BiDqn));
    let bow = median(lab.home_completions(AgentKind::BowDqn));
    let random = median(lab.home_completions(AgentKind::Random));
    (
        lstm > bi && bi >= bow && bow > random && lstm - bow >= 0.15 && random <= 0.20,
        format!("median completion lstm {lstm:.3} > bi {bi:.3} >= bow {bow:.3} > random {random:.3}; lstm-bow {:.3}", lstm - bow),
    )
}

// 3 ---------------------------------------------------------------------

/// Exact completion and reward of the uniform policy over the 40 Home
/// commands, by dynamic programming over the occupancy distribution.
///
/// The map is written out here rather than read from the world: living
/// (SW), kitchen (SE), bedroom (NW), garden (NE) on a square; each room has
/// two exits and one usable object; one quest per object.
fn uniform_policy_oracle(steps: usize) -> (f64, f64) {
    const COMMANDS: f64 = 40.0;
    let neighbours = [[1, 2], [0, 3], [0, 3], [2, 1]];
    let (step, invalid, quest) = (-0.01, -0.1, 1.0);
    let mut completion = 0.0;
    let mut reward = 0.0;
    for goal in 0..4 {
        for start in 0..4 {
            let weight = 1.0 / 16.0;
            let mut occupancy = [0.0f64; 4];
            occupancy[start] = 1.0;
            for _ in 0..steps {
                let mut next = [0.0f64; 4];
                for room in 0..4 {
                    let p = occupancy[room];
                    if p == 0.0 {
                        continue;
                    }
                    for &n in &neighbours[room] {
                        next[n] += p / COMMANDS;
                    }
                    reward += weight * p * (2.0 / COMMANDS) * step;
                    // the room's own object: finishes the quest in the goal room
                    if room == goal {
                        completion += weight * p / COMMANDS;
                        reward += weight * p / COMMANDS * (step + quest);
                    } else {
                        next[room] += p / COMMANDS;
                        reward += weight * p / COMMANDS * step;
                    }
                    next[room] += p * 37.0 / COMMANDS;
                    reward += weight * p * (37.0 / COMMANDS) * (step + invalid);
                }
                occupancy = next;
            }
        }
    }
    (completion, reward)
}

fn random_oracle(lab: &mut Lab) -> Verdict {
    let (want_c, want_r) = uniform_policy_oracle(20);
    let mut cfg = ExperimentConfig::for_world(lab.home.def(), AgentKind::Random, 17);
    cfg.epochs = 40;
    let world = lab.home.clone();
    let run = lab.train("home-random-oracle".into(), cfg, world);
    let evals: Vec<&EpochMetrics> = eval_rows(&run.metrics).collect();
    let n = evals.len() as f64;
    let got_c = evals.iter().map(|m| m.quest_completion).sum::<f64>() / n;
    let got_r = evals.iter().map(|m| m.avg_reward).sum::<f64>() / n;
    (
        (got_c - want_c).abs() <= 0.02 && (got_r - want_r).abs() <= 0.1,
        format!("agent completion {got_c:.3} vs oracle {want_c:.3}; reward {got_r:.3} vs oracle {want_r:.3} (2000 episodes)"),
    )
}

// 4 ---------------------------------------------------------------------

/// Mean optimal return over the 16 (start room, quest) pairs, by BFS over
/// the same hand-written map.
fn optimal_home_value() -> f64 {
    let neighbours = [[1, 2], [0, 3], [0, 3], [2, 1]];
    let mut total = 0.0;
    for goal in 0..4 {
        let mut dist = [usize::MAX; 4];
        dist[goal] = 0;
        let mut queue = VecDeque::from([goal]);
        while let Some(r) = queue.pop_front() {
            for &n in &neighbours[r] {
                if dist[n] == usize::MAX {
                    dist[n] = dist[r] + 1;
                    queue.push_back(n);
                }
            }
        }
        for d in dist {
            // d moves then the goal command, each costing the step penalty
            total += 1.0 - 0.01 * (d + 1) as f64;
        }
    }
    total / 16.0
}

fn optimal_reward(lab: &mut Lab) -> Verdict {
    let exact = optimal_home_value();
    let m = run_scripted_optimal(lab.home.clone(), 2000, 20, 5).unwrap();
    (
        (m.avg_reward - 0.98).abs() <= 0.01 && (exact - 0.98).abs() <= 0.01 && m.quest_completion == 1.0,
        format!(
            "scripted agent {:.4} (completion {:.2}); exact BFS value {exact:.4}; target 0.98 +/- 0.01",
            m.avg_reward, m.quest_completion
        ),
    )
}

// 5 ---------------------------------------------------------------------

fn dqn_beats_linear(lab: &mut Lab) -> Verdict {
    let bow = median(lab.home_completions(AgentKind::BowDqn));
    let bow_lin = median(lab.home_completions(AgentKind::BowLin));
    let bi = median(lab.home_completions(AgentKind::BiDqn));
    let bi_lin = median(lab.home_completions(AgentKind::BiLin));
    (
        bow > bow_lin && bi > bi_lin,
        format!("bow-dqn {bow:.3} vs bow-lin {bow_lin:.3}; bi-dqn {bi:.3} vs bi-lin {bi_lin:.3}"),
    )
}

// 6 ---------------------------------------------------------------------

/// Best achievable completion: the most survivable route from a start room
/// to the quest object, multiplying the survival chance of every hazardous
/// room entered.
fn hazard_ceiling(def: &WorldDef) -> f64 {
    let index: BTreeMap<&str, usize> = def.rooms.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let survive = |i: usize| def.rooms[i].hazard.as_ref().map_or(1.0, |h| 1.0 - h.fall_probability);
    let mut best = vec![0.0f64; def.rooms.len()];
    for s in &def.start_rooms {
        best[index[s.as_str()]] = 1.0;
    }
    // Bellman-Ford on survival products; every factor is at most 1
    for _ in 0..def.rooms.len() {
        for (i, room) in def.rooms.iter().enumerate() {
            for (_, target) in &room.exits {
                let j = index[target.as_str()];
                let via = best[i] * survive(j);
                if via > best[j] {
                    best[j] = via;
                }
            }
        }
    }
    def.quests
        .iter()
        .map(|q| {
            let object = def.objects.iter().find(|o| o.name == q.goal_object).expect("quest object");
            best[index[object.room.as_str()]]
        })
        .fold(0.0, f64::max)
}

fn bridge_learning(lab: &mut Lab) -> Verdict {
    let ceiling = hazard_ceiling(lab.bridge.def());
    let seed = SEEDS[0];
    let lstm = lab.bridge(AgentKind::LstmDqn, seed).completion();
    let bow = lab.bridge(AgentKind::BowDqn, seed).completion();
    let random = lab.bridge(AgentKind::Random, seed).completion();
    // 200 evaluation episodes enter each window; allow three binomial sigmas
    let slack = 3.0 * (ceiling * (1.0 - ceiling) / 200.0).sqrt();
    let bounded = [lstm, bow, random].iter().all(|&c| c <= ceiling + slack);
    (
        lstm >= 0.85 && lstm >= bow && bow - random >= 0.3 && lstm - random >= 0.3 && bounded,
        format!("lstm {lstm:.3}, bow {bow:.3}, random {random:.3}; hazard ceiling {ceiling:.4} (+{slack:.3} sampling slack)"),
    )
}

// 7 ---------------------------------------------------------------------

fn prioritized_speedup(lab: &mut Lab) -> Verdict {
    let prioritized: Vec<Option<usize>> =
        SEEDS.iter().map(|&s| epochs_to_threshold(&lab.home(AgentKind::LstmDqn, s).metrics)).collect();
    let uniform: Vec<Option<usize>> = SEEDS.iter().map(|&s| epochs_to_threshold(&lab.home_uniform(s).metrics)).collect();
    let p = median(prioritized.iter().map(|&e| epochs_or_never(e)).collect());
    let u = median(uniform.iter().map(|&e| epochs_or_never(e)).collect());
    (
        p.is_finite() && p < u,
        format!(
            "epochs to threshold: prioritized {} (median {p}), uniform {} (median {u})",
            show_epochs(&prioritized),
            show_epochs(&uniform)
        ),
    )
}

// 8 ---------------------------------------------------------------------

fn transfer_speedup(lab: &mut Lab) -> Verdict {
    let transfer: Vec<Option<usize>> = SEEDS.iter().map(|&s| epochs_to_threshold(&lab.variant_transfer(s).metrics)).collect();
    let scratch: Vec<Option<usize>> = SEEDS.iter().map(|&s| epochs_to_threshold(&lab.variant_scratch(s).metrics)).collect();
    let t = median(transfer.iter().map(|&e| epochs_or_never(e)).collect());
    let s = median(scratch.iter().map(|&e| epochs_or_never(e)).collect());
    (
        t.is_finite() && t < s,
        format!(
            "epochs to threshold on the variant: transfer {} (median {t}), scratch {} (median {s})",
            show_epochs(&transfer),
            show_epochs(&scratch)
        ),
    )
}

// 9 ---------------------------------------------------------------------

/// `J = Σ wa·action_q + Σ wo·object_q` for fixed projection weights.
fn projected_output(params: &NetParams, seqs: &[&[u32]], wa: &Array2<f64>, wo: &Array2<f64>) -> f64 {
    let opts = ForwardOptions {
        rollout_cap: 30,
        pooling: Pooling::Mean,
    };
    let trace = params.forward(NetInput::Tokens(seqs), &opts).unwrap();
    (&trace.action_q * wa).sum() + (&trace.object_q * wo).sum()
}

/// One random network and batch; returns (coordinates checked, worst
/// relative error), or `None` when a rectifier input sits too close to its
/// kink for central differences to be meaningful.
fn finite_difference_case(rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
    let vocab_size = rng.random_range(2..7);
    let shape = NetShape {
        repr: ReprShape::Lstm {
            vocab_size,
            embed_dim: rng.random_range(1..5),
            lstm_dim: rng.random_range(1..5),
        },
        hidden_dim: Some(rng.random_range(1..5)),
        n_actions: rng.random_range(1..4),
        n_objects: rng.random_range(1..4),
    };
    let mut params = NetParams::init(&shape, rng).unwrap();
    for (_, t) in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = rng.random_range(-0.6..0.6);
        }
    }
    let batch = rng.random_range(1..4);
    let seqs: Vec<Vec<u32>> = (0..batch)
        .map(|_| {
            let len = rng.random_range(1..6);
            (0..len).map(|_| rng.random_range(0..vocab_size as u32)).collect()
        })
        .collect();
    let refs: Vec<&[u32]> = seqs.iter().map(Vec::as_slice).collect();
    let wa = Array2::from_shape_fn((batch, shape.n_actions), |_| rng.random_range(-1.0..1.0));
    let wo = Array2::from_shape_fn((batch, shape.n_objects), |_| rng.random_range(-1.0..1.0));

    let opts = ForwardOptions {
        rollout_cap: 30,
        pooling: Pooling::Mean,
    };
    let trace = params.forward(NetInput::Tokens(&refs), &opts).unwrap();
    if trace.hidden_pre.as_ref().is_some_and(|h| h.iter().any(|v| v.abs() < 1e-3)) {
        return None;
    }
    let grads = params
        .backward(
            &trace,
            &HeadGrads {
                action: wa.clone(),
                object: wo.clone(),
            },
        )
        .unwrap();
    let analytic: Vec<Vec<f64>> = grads.0.tensors().into_iter().map(|(_, _, g)| g.to_vec()).collect();

    let eps = 1e-5;
    let mut worst = 0.0f64;
    let mut count = 0;
    for (t, grad) in analytic.iter().enumerate() {
        for (k, &a) in grad.iter().enumerate() {
            let mut plus = params.clone();
            plus.tensors_mut()[t].1[k] += eps;
            let mut minus = params.clone();
            minus.tensors_mut()[t].1[k] -= eps;
            let numeric =
                (projected_output(&plus, &refs, &wa, &wo) - projected_output(&minus, &refs, &wa, &wo)) / (2.0 * eps);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
            count += 1;
        }
    }
    Some((count, worst))
}

fn gradient_suite(_: &mut Lab) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
    let mut cases = 0;
    let mut coords = 0;
    let mut worst = 0.0f64;
    while cases < 120 {
        if let Some((n, err)) = finite_difference_case(&mut rng) {
            cases += 1;
            coords += n;
            worst = worst.max(err);
        }
    }
    (
        worst < 1e-4,
        format!("{cases} random networks, {coords} coordinates, worst relative error {worst:.2e}"),
    )
}

// 10 --------------------------------------------------------------------

fn tabular_equivalence(_: &mut Lab) -> Verdict {
    let mdp = chain_mdp(3, -0.01, 1.0);
    let exact = tabular_oracle(&mdp, 0.5).unwrap();
    // hand algebra: V(s2) = 1, V(s1) = -0.01 + 0.5, V(s0) = -0.01 + 0.5·0.49
    let hand = [[0.1075, 0.235], [0.1075, 0.49], [0.235, 1.0]];
    let oracle_ok = hand
        .iter()
        .zip(&exact)
        .all(|(h, e)| h.iter().zip(e).all(|(a, b)| (a - b).abs() < 1e-9));
    let learned = run_tabular_q_learning(&mdp, &TabularConfig::default()).unwrap();
    let sup = learned
        .iter()
        .zip(&exact)
        .flat_map(|(l, e)| l.iter().zip(e).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    (
        oracle_ok && sup <= 1e-3,
        format!("value iteration matches hand values: {oracle_ok}; learned table sup-norm error {sup:.2e}"),
    )
}

// 11 --------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
struct Item {
    id: usize,
    high: bool,
}

impl Prioritized for Item {
    fn priority(&self) -> bool {
        self.high
    }
}

fn tiny_home(kind: AgentKind, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_world(&builtin_home_world(), kind, seed);
    cfg.episodes = 4;
    cfg.steps = 8;
    cfg.epochs = 2;
    cfg.agent_config.learn_start = 8;
    cfg.agent_config.batch_size = 8;
    cfg
}

fn agent_state(agent: &DqnAgent) -> (NetParams, NetParams, usize, usize, u64, u64) {
    (
        agent.params().clone(),
        agent.optimizer().mean_square().clone(),
        agent.memory().priority_pool().len(),
        agent.memory().regular_pool().len(),
        agent.transitions_seen(),
        agent.updates(),
    )
}

fn property(name: &str, cases: u32, test: impl Fn(&mut TestRunner) -> Result<(), String>) -> Result<(), String> {
    let mut runner = TestRunner::new(PropConfig {
        cases,
        failure_persistence: None,
        ..PropConfig::default()
    });
    test(&mut runner).map_err(|e| format!("{name}: {e}"))
}

fn mechanism_properties(_: &mut Lab) -> Verdict {
    let checks: Vec<Result<(), String>> = vec![
        property("fifo eviction", 256, |r| {
            r.run(&(1usize..20, prop::collection::vec(any::<bool>(), 0..80)), |(cap, flags)| {
                let mut mem = ReplayMemory::new(cap);
                let (mut high, mut low) = (VecDeque::new(), VecDeque::new());
                for (id, &h) in flags.iter().enumerate() {
                    if high.len() + low.len() == cap {
                        let (own, other) = if h { (&mut high, &mut low) } else { (&mut low, &mut high) };
                        if own.pop_front().is_none() {
                            other.pop_front();
                        }
                    }
                    if h { high.push_back(id) } else { low.push_back(id) }
                    mem.store(Item { id, high: h });
                    prop_assert!(mem.len() <= cap);
                }
                let ids = |pool: &VecDeque<Item>| pool.iter().map(|i| i.id).collect::<VecDeque<_>>();
                prop_assert_eq!(ids(mem.priority_pool()), high);
                prop_assert_eq!(ids(mem.regular_pool()), low);
                Ok(())
            })
            .map_err(|e| e.to_string())
        }),
        property("priority flag law", 256, |r| {
            r.run(&prop::collection::vec(-2.0f64..2.0, 1..60), |rewards| {
                let mut mem: ReplayMemory<Transition> = ReplayMemory::new(1000);
                for &reward in &rewards {
                    let text: Arc<str> = Arc::from("s");
                    let t = Transition {
                        state: text.clone(),
                        command: mudqn_core::Command::new(0, 0),
                        reward,
                        next_state: text,
                        next_objects: Arc::from(&[0usize][..]),
                        terminal: false,
                    };
                    prop_assert_eq!(t.priority(), reward > 0.0);
                    mem.store(t);
                }
                prop_assert!(mem.priority_pool().iter().all(|t| t.reward > 0.0));
                prop_assert!(mem.regular_pool().iter().all(|t| t.reward <= 0.0));
                prop_assert_eq!(mem.priority_pool().len(), rewards.iter().filter(|&&r| r > 0.0).count());
                Ok(())
            })
            .map_err(|e| e.to_string())
        }),
        property("rho composition", 128, |r| {
            r.run(&(64usize..200, 64usize..200, any::<u64>()), |(n_high, n_low, seed)| {
                let mut mem = ReplayMemory::new(n_high + n_low);
                for id in 0..n_high + n_low {
                    mem.store(Item { id, high: id < n_high });
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let batch = mem.sample(64, 0.25, SamplingMode::Prioritized, &mut rng).unwrap();
                prop_assert_eq!(batch.len(), 64);
                prop_assert_eq!(batch.iter().filter(|i| i.high).count(), 16);
                Ok(())
            })
            .map_err(|e| e.to_string())
        }),
        property("epsilon endpoints", 256, |r| {
            let e = EpsilonSchedule::default();
            if e.value(0) != 1.0 || e.value(100_000) != 0.2 || e.eval != 0.05 {
                return Err(format!("endpoints {} {} {}", e.value(0), e.value(100_000), e.eval));
            }
            r.run(&(0u64..200_000, 0u64..200_000), |(a, b)| {
                let (lo, hi) = (a.min(b), a.max(b));
                prop_assert!(e.value(lo) >= e.value(hi));
                let expected = if lo >= 100_000 { 0.2 } else { 1.0 - 0.8 * lo as f64 / 100_000.0 };
                prop_assert!((e.value(lo) - expected).abs() < 1e-12);
                Ok(())
            })
            .map_err(|e| e.to_string())
        }),
        property("evaluation purity", 8, |r| {
            r.run(&(0u64..10_000, 0usize..3), |(seed, k)| {
                let kind = [AgentKind::LstmDqn, AgentKind::BowDqn, AgentKind::BiLin][k];
                let world = Arc::new(World::new(builtin_home_world()).unwrap());
                let cfg = tiny_home(kind, seed);
                let agent = build_agent(&cfg, &world, &[]).unwrap();
                let mut exp = Experiment::new(cfg, world.clone(), agent).unwrap();
                exp.run().unwrap();
                let before = agent_state(exp.agent().as_dqn().unwrap());
                let mut game = Game::new(world, rng::stream(seed, rng::EVAL_WORLD), rng::stream(seed, rng::EVAL_DESCRIPTION));
                let mut eval_rng = rng::stream(seed, rng::EVAL_POLICY);
                run_epoch_eval(exp.agent_mut(), &mut game, 6, 20, &mut eval_rng, 3)
                    .map_err(|e| TestCaseError::fail(e.to_string()))?;
                prop_assert!(agent_state(exp.agent().as_dqn().unwrap()) == before);
                Ok(())
            })
            .map_err(|e| e.to_string())
        }),
        property("run reproducibility", 8, |r| {
            r.run(&(0u64..10_000, 0usize..3), |(seed, k)| {
                let kind = [AgentKind::LstmDqn, AgentKind::BiDqn, AgentKind::Random][k];
                let run = || {
                    let world = Arc::new(World::new(builtin_home_world()).unwrap());
                    let cfg = tiny_home(kind, seed);
                    let agent = build_agent(&cfg, &world, &[]).unwrap();
                    let mut exp = Experiment::new(cfg, world, agent).unwrap();
                    exp.run().unwrap();
                    let params = exp.agent().as_dqn().map(|a| a.params().clone());
                    (exp.metrics().iter().map(EpochMetrics::without_timing).collect::<Vec<_>>(), params)
                };
                prop_assert!(run() == run());
                Ok(())
            })
            .map_err(|e| e.to_string())
        }),
    ];
    let failures: Vec<String> = checks.into_iter().filter_map(Result::err).collect();
    (
        failures.is_empty(),
        if failures.is_empty() {
            "fifo eviction, priority law, rho composition, epsilon schedule, evaluation purity, reproducibility".into()
        } else {
            failures.join("; ")
        },
    )
}

// 12 --------------------------------------------------------------------

/// Room indices whose variants all have their two same-room siblings as
/// their two nearest neighbours.
fn clustered_rooms(agent: &mut DqnAgent, def: &WorldDef) -> BTreeSet<usize> {
    let variants = room_variant_texts(def);
    let texts: Vec<&str> = variants.iter().map(|(_, t)| t.as_str()).collect();
    let nn = nearest_neighbors(agent, &texts, 2).unwrap();
    let mut good: BTreeSet<usize> = variants.iter().map(|(r, _)| *r).collect();
    for (i, (room, _)) in variants.iter().enumerate() {
        if !nn[i].iter().all(|(j, _)| variants[*j].0 == *room) {
            good.remove(room);
        }
    }
    good
}

fn representation_analysis(lab: &mut Lab) -> Verdict {
    let def = builtin_home_world();
    let mut per_seed = Vec::new();
    for s in SEEDS {
        let ckpt = lab.home(AgentKind::LstmDqn, s).checkpoint.clone().expect("home checkpoint");
        let (mut agent, _) = load_checkpoint(&ckpt, rng::stream(s, rng::REPLAY)).unwrap();
        per_seed.push(clustered_rooms(&mut agent, &def).len());
    }
    let rooms = def.rooms.len();
    let full = per_seed.iter().filter(|&&n| n == rooms).count();
    (
        full * 2 > SEEDS.len(),
        format!(
            "rooms whose variants are mutual top-2 neighbours, per seed: {} of {rooms}",
            per_seed.iter().map(usize::to_string).collect::<Vec<_>>().join("/")
        ),
    )
}

// -----------------------------------------------------------------------

fn main() {
    let criteria: [(u32, &str, fn(&mut Lab) -> Verdict); 12] = [
        (1, "Home learning", home_learning),
        (2, "Home baseline ordering", baseline_ordering),
        (3, "Random-agent oracle", random_oracle),
        (4, "Optimal-reward pin", optimal_reward),
        (5, "DQN vs LIN", dqn_beats_linear),
        (6, "Bridge learning", bridge_learning),
        (7, "Prioritized speedup", prioritized_speedup),
        (8, "Transfer speedup", transfer_speedup),
        (9, "Gradient suite", gradient_suite),
        (10, "Tabular oracle equivalence", tabular_equivalence),
        (11, "Mechanism properties", mechanism_properties),
        (12, "Representation analysis", representation_analysis),
    ];
    let only: Option<BTreeSet<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    // cargo passes harness flags such as --nocapture through; only listing matters
    if std::env::args().any(|a| a == "--list") {
        for (n, name, _) in &criteria {
            println!("criterion {n}: {name}: test");
        }
        return;
    }

    let mut lab = Lab::new();
    let mut failed = Vec::new();
    for (n, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let started = Instant::now();
        let (pass, detail) = check(&mut lab);
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {n:>2}. {name}: {detail} ({:.0}s)", started.elapsed().as_secs_f64());
        if !pass {
            failed.push(n);
        }
    }
    let rewards: Vec<String> = SEEDS
        .iter()
        .filter_map(|s| lab.runs.get(&format!("home/{}/{s}", AgentKind::LstmDqn)))
        .map(|r| format!("{:.3}", final_reward(&r.metrics, FINAL_WINDOW)))
        .collect();
    if !rewards.is_empty() {
        println!("    home lstm-dqn last-10 eval reward per seed: {}", rewards.join("/"));
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
