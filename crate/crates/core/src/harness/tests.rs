use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::world::{builtin_bridge_world, builtin_home_world, builtin_home_world_variant};

fn home() -> Arc<World> {
    Arc::new(World::new(builtin_home_world()).unwrap())
}

fn tiny_config(kind: AgentKind, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::for_world(&builtin_home_world(), kind, seed);
    cfg.episodes = 4;
    cfg.steps = 6;
    cfg.epochs = 3;
    cfg.agent_config.learn_start = 8;
    cfg.agent_config.batch_size = 8;
    cfg
}

/// Everything evaluation must leave alone.
fn snapshot(agent: &DqnAgent) -> (crate::neural::NetParams, crate::neural::NetParams, usize, usize, u64, u64) {
    (
        agent.params().clone(),
        agent.optimizer().mean_square().clone(),
        agent.memory().len(),
        agent.memory().priority_pool().len(),
        agent.transitions_seen(),
        agent.updates(),
    )
}

fn eval_row(epoch: usize, completion: f64) -> EpochMetrics {
    EpochMetrics {
        epoch,
        phase: Phase::Eval,
        avg_reward: 0.0,
        quest_completion: completion,
        avg_length: 1.0,
        invalid_rate: 0.0,
        wall_time_s: 0.0,
    }
}

#[test]
fn protocol_follows_cue_mode() {
    assert_eq!(protocol_for(&builtin_home_world()), (50, 20, 100));
    assert_eq!(protocol_for(&builtin_bridge_world()), (20, 250, 40));
    let cfg = ExperimentConfig::for_world(&builtin_home_world(), AgentKind::LstmDqn, 7);
    assert_eq!(cfg.run_id, "home-lstm-dqn-seed7");
}

#[test]
fn config_validation() {
    let mut cfg = tiny_config(AgentKind::Random, 0);
    assert!(cfg.validate().is_ok());
    cfg.episodes = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = tiny_config(AgentKind::Random, 0);
    cfg.run_id = "a/b".into();
    assert!(cfg.validate().is_err());
    let mut cfg = tiny_config(AgentKind::Random, 0);
    cfg.checkpoint_every = Some(0);
    assert!(cfg.validate().is_err());
}

#[test]
fn mismatched_agent_is_rejected() {
    let w = home();
    let cfg = tiny_config(AgentKind::BowDqn, 0);
    let agent = Agent::Random(RandomAgent::new(w.n_actions()));
    assert!(matches!(Experiment::new(cfg, w, agent), Err(HarnessError::Config(_))));
}

#[test]
fn summary_arithmetic() {
    let eps = [
        EpisodeStats { reward: 0.98, completed: true, length: 3, invalid: 0 },
        EpisodeStats { reward: -2.2, completed: false, length: 20, invalid: 20 },
        EpisodeStats { reward: 0.5, completed: true, length: 7, invalid: 1 },
        EpisodeStats { reward: -0.2, completed: false, length: 20, invalid: 0 },
    ];
    let m = summarize(3, Phase::Train, &eps, Instant::now());
    assert_eq!(m.epoch, 3);
    assert!((m.avg_reward - (0.98 - 2.2 + 0.5 - 0.2) / 4.0).abs() < 1e-12);
    assert_eq!(m.quest_completion, 0.5);
    assert_eq!(m.avg_length, 12.5);
    assert!((m.invalid_rate - 21.0 / 50.0).abs() < 1e-12);
}

#[test]
fn zero_epochs_write_nothing() {
    let mut cfg = tiny_config(AgentKind::Random, 0);
    cfg.epochs = 0;
    let exp = run_experiment(cfg, home()).unwrap();
    assert!(exp.metrics().is_empty());
    assert_eq!(epochs_to_threshold(exp.metrics()), None);
    assert_eq!(final_completion(exp.metrics(), 10), 0.0);
}

#[test]
fn every_epoch_reports_both_phases() {
    let exp = run_experiment(tiny_config(AgentKind::BowDqn, 1), home()).unwrap();
    let m = exp.metrics();
    assert_eq!(m.len(), 6);
    for (i, pair) in m.chunks(2).enumerate() {
        assert_eq!(pair[0].phase, Phase::Train);
        assert_eq!(pair[1].phase, Phase::Eval);
        assert_eq!(pair[0].epoch, i + 1);
        assert_eq!(pair[1].epoch, i + 1);
        for row in pair {
            assert!(row.avg_length >= 1.0 && row.avg_length <= 6.0);
            // completion is a multiple of 1/M
            assert!(((row.quest_completion * 4.0) - (row.quest_completion * 4.0).round()).abs() < 1e-12);
        }
    }
    // one stored transition per training step
    let steps: f64 = m.iter().filter(|r| r.phase == Phase::Train).map(|r| r.avg_length * 4.0).sum();
    assert_eq!(exp.agent().as_dqn().unwrap().transitions_seen(), steps.round() as u64);
}

#[test]
fn evaluation_mutates_nothing() {
    let w = home();
    let cfg = tiny_config(AgentKind::LstmDqn, 3);
    let mut exp = run_experiment(cfg, w.clone()).unwrap();
    let before = snapshot(exp.agent().as_dqn().unwrap());
    let mut game = Game::new(w, rng::stream(9, rng::EVAL_WORLD), rng::stream(9, rng::EVAL_DESCRIPTION));
    let mut eval_rng = rng::stream(9, rng::EVAL_POLICY);
    let m = run_epoch_eval(exp.agent_mut(), &mut game, 10, 20, &mut eval_rng, 4).unwrap();
    assert_eq!(m.phase, Phase::Eval);
    assert_eq!(snapshot(exp.agent().as_dqn().unwrap()), before);
}

#[test]
fn runs_are_reproducible() {
    let a = run_experiment(tiny_config(AgentKind::LstmDqn, 5), home()).unwrap();
    let b = run_experiment(tiny_config(AgentKind::LstmDqn, 5), home()).unwrap();
    let strip = |e: &Experiment| e.metrics().iter().map(EpochMetrics::without_timing).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.agent().as_dqn().unwrap().params(), b.agent().as_dqn().unwrap().params());
    let c = run_experiment(tiny_config(AgentKind::LstmDqn, 6), home()).unwrap();
    assert_ne!(a.agent().as_dqn().unwrap().params(), c.agent().as_dqn().unwrap().params());
}

#[test]
fn metrics_csv_and_checkpoints_land_in_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(AgentKind::LstmDqn, 2);
    cfg.out_dir = Some(dir.path().to_path_buf());
    cfg.checkpoint_every = Some(2);
    cfg.transcript = true;
    let exp = run_experiment(cfg, home()).unwrap();

    let csv = dir.path().join("home-lstm-dqn-seed2.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some(METRICS_HEADER));
    let rows = read_metrics_csv(&csv).unwrap();
    assert_eq!(rows.len(), 6);
    for (read, kept) in rows.iter().zip(exp.metrics()) {
        assert_eq!(read.without_timing(), kept.without_timing());
    }

    assert!(dir.path().join("home-lstm-dqn-seed2-epoch2.ckpt").exists());
    assert!(dir.path().join("home-lstm-dqn-seed2-epoch3.ckpt").exists());
    assert!(!dir.path().join("home-lstm-dqn-seed2-epoch1.ckpt").exists());
    let manifest = crate::agent::read_manifest(&dir.path().join("home-lstm-dqn-seed2-epoch3.ckpt")).unwrap();
    assert_eq!(manifest.extra.get("epoch"), Some("3"));
    assert_eq!(manifest.extra.get("world"), Some("home"));

    let transcript = std::fs::read_to_string(dir.path().join("home-lstm-dqn-seed2.transcript")).unwrap();
    let eval_steps: f64 = exp.metrics().iter().filter(|r| r.phase == Phase::Eval).map(|r| r.avg_length * 4.0).sum();
    assert_eq!(transcript.lines().count(), eval_steps.round() as usize);
}

#[test]
fn threshold_helpers() {
    let completions = [0.5, 0.96, 0.9, 0.95, 1.0, 0.98, 0.97, 0.99, 0.6, 1.0];
    let mut metrics = Vec::new();
    for (i, &c) in completions.iter().enumerate() {
        let mut train = eval_row(i + 1, 0.0);
        train.phase = Phase::Train;
        metrics.push(train);
        metrics.push(eval_row(i + 1, c));
    }
    assert_eq!(first_crossing(&metrics), Some(2));
    assert_eq!(epochs_to_threshold(&metrics), Some(4));
    assert!((final_completion(&metrics, 3) - (0.99 + 0.6 + 1.0) / 3.0).abs() < 1e-12);
    assert!((final_completion(&metrics, 100) - completions.iter().sum::<f64>() / 10.0).abs() < 1e-12);
    assert_eq!(epochs_to_threshold(&metrics[..14]), None);
}

#[test]
fn early_stop_waits_for_the_threshold() {
    // a random agent never holds the threshold, so the run goes the full distance
    let mut cfg = tiny_config(AgentKind::Random, 4);
    cfg.stop_when_converged = true;
    cfg.epochs = 4;
    let exp = run_experiment(cfg, home()).unwrap();
    assert_eq!(exp.epochs_done(), 4);
}

#[test]
fn scripted_optimal_reward_on_home() {
    let m = run_scripted_optimal(home(), 2000, 20, 11).unwrap();
    assert_eq!(m.quest_completion, 1.0);
    assert_eq!(m.invalid_rate, 0.0);
    // Over the 16 (room, quest) starts the shortest plans take 1, 2, 2 and 3
    // commands, each one costing the step penalty.
    assert!((m.avg_reward - 0.98).abs() < 0.01, "{}", m.avg_reward);
}

#[test]
fn nearest_neighbors_by_cosine() {
    use ndarray::array;
    let v = vec![array![1.0, 0.0], array![0.0, 1.0], array![2.0, 0.0], array![1.0, 1.0]];
    let nn = nearest_neighbors_of(&v, 2);
    assert_eq!(nn[0][0].0, 2);
    assert!((nn[0][0].1 - 1.0).abs() < 1e-12);
    assert_eq!(nn[0][1].0, 3);
    assert!((nn[1][0].1 - 0.5f64.sqrt()).abs() < 1e-12);
    assert_eq!(cosine(&v[0], &v[1]), 0.0);
    assert_eq!(cosine(&v[0], &array![0.0, 0.0]), 0.0);
    assert!(nn.iter().enumerate().all(|(i, row)| row.iter().all(|(j, _)| *j != i)));
}

#[test]
fn nearest_neighbors_need_two_descriptions() {
    let mut agent = DqnAgent::for_world(
        AgentKind::LstmDqn,
        AgentConfig::default(),
        &builtin_home_world(),
        &[],
        &mut rng::stream(0, rng::INIT),
        rng::stream(0, rng::REPLAY),
    )
    .unwrap();
    assert!(nearest_neighbors(&mut agent, &["you are in the kitchen"], 1).is_err());
    let nn = nearest_neighbors(&mut agent, &["you are in the kitchen", "you are in the kitchen", "a bed"], 1).unwrap();
    assert_eq!(nn[0][0].0, 1);
    assert!((nn[0][0].1 - 1.0).abs() < 1e-12);
}

#[test]
fn room_variants_cover_every_room() {
    let def = builtin_home_world();
    let texts = room_variant_texts(&def);
    let total: usize = def.rooms.iter().map(|r| r.description_variants.len()).sum();
    assert_eq!(texts.len(), total);
    let bridge = builtin_bridge_world();
    assert!(room_variant_texts(&bridge).iter().all(|(_, t)| t.contains('\n')));
}

#[test]
fn embedding_export_round_trip() {
    let def = builtin_home_world();
    let agent = DqnAgent::for_world(
        AgentKind::LstmDqn,
        AgentConfig::default(),
        &def,
        &[],
        &mut rng::stream(1, rng::INIT),
        rng::stream(1, rng::REPLAY),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.tsv");
    let rows = export_embeddings(agent.params(), agent.vocab(), DEFAULT_STOPWORDS, &path).unwrap();
    let vocab = agent.vocab();
    let stop_present = vocab.tokens().iter().filter(|t| DEFAULT_STOPWORDS.contains(&t.as_str())).count();
    assert_eq!(rows, vocab.len() - 1 - stop_present);

    let read = read_embeddings(&path).unwrap();
    assert_eq!(read.len(), rows);
    let table = &agent.params().repr.as_ref().unwrap().embeddings;
    for (token, values) in &read {
        assert_eq!(values.len(), 20);
        assert!(!DEFAULT_STOPWORDS.contains(&token.as_str()));
        let id = vocab.id(token) as usize;
        assert_eq!(values.as_slice(), table.row(id).as_slice().unwrap());
    }

    let bow = DqnAgent::for_world(
        AgentKind::BowDqn,
        AgentConfig::default(),
        &def,
        &[],
        &mut rng::stream(1, rng::INIT),
        rng::stream(1, rng::REPLAY),
    )
    .unwrap();
    assert!(export_embeddings(bow.params(), bow.vocab(), &[], &path).is_err());
}

#[test]
fn carry_targets() {
    assert_eq!("representation".parse::<Carry>(), Ok(Carry::Representation));
    for bad in ["action-scorer", "scorer", "all", "weights"] {
        assert!(bad.parse::<Carry>().is_err(), "{bad}");
    }
}

#[test]
fn transfer_carries_only_the_representation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(AgentKind::LstmDqn, 8);
    cfg.out_dir = Some(dir.path().to_path_buf());
    cfg.checkpoint_every = Some(3);
    let source = run_experiment(cfg, home()).unwrap();
    let source_params = source.agent().as_dqn().unwrap().params().clone();
    let ckpt = dir.path().join("home-lstm-dqn-seed8-epoch3.ckpt");

    let variant = builtin_home_world_variant();
    let target_cfg = ExperimentConfig::for_world(&variant, AgentKind::LstmDqn, 8);
    let spec = TransferSpec { source: ckpt.clone(), carry: Carry::Representation };
    let transferred = transfer_init(&spec, &variant, &target_cfg).unwrap();
    let transferred = transferred.as_dqn().unwrap();

    let vw = Arc::new(World::new(variant.clone()).unwrap());
    let scratch = build_agent(&target_cfg, &vw, &[]).unwrap();
    let scratch = scratch.as_dqn().unwrap();

    assert_eq!(transferred.params().repr, source_params.repr);
    assert_ne!(transferred.params().repr, scratch.params().repr);
    // the scorer is exactly what a from-scratch run with the same seed gets
    assert_eq!(transferred.params().scorer, scratch.params().scorer);
    assert_ne!(transferred.params().scorer, source_params.scorer);
    assert_eq!(transferred.memory().len(), 0);
    assert_eq!(transferred.transitions_seen(), 0);

    let missing = TransferSpec { source: dir.path().join("nope.ckpt"), carry: Carry::Representation };
    assert!(transfer_init(&missing, &variant, &target_cfg).is_err());
    let bow_cfg = ExperimentConfig::for_world(&variant, AgentKind::BowDqn, 8);
    assert!(matches!(transfer_init(&spec, &variant, &bow_cfg), Err(HarnessError::Config(_))));
    let bridge = builtin_bridge_world();
    let bridge_cfg = ExperimentConfig::for_world(&bridge, AgentKind::LstmDqn, 8);
    assert!(matches!(transfer_init(&spec, &bridge, &bridge_cfg), Err(HarnessError::Config(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn metrics_are_a_function_of_config_and_seed(seed in 0u64..1000, kind in 0usize..3) {
        let kind = [AgentKind::LstmDqn, AgentKind::BiDqn, AgentKind::Random][kind];
        let mut cfg = tiny_config(kind, seed);
        cfg.epochs = 2;
        let a = run_experiment(cfg.clone(), home()).unwrap();
        let b = run_experiment(cfg, home()).unwrap();
        let strip = |e: &Experiment| e.metrics().iter().map(EpochMetrics::without_timing).collect::<Vec<_>>();
        prop_assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn eval_leaves_agent_untouched(seed in 0u64..1000) {
        let w = home();
        let mut exp = run_experiment(tiny_config(AgentKind::BowDqn, seed), w.clone()).unwrap();
        let before = snapshot(exp.agent().as_dqn().unwrap());
        let mut game = Game::new(w, rng::stream(seed, rng::EVAL_WORLD), rng::stream(seed, rng::EVAL_DESCRIPTION));
        let mut eval_rng = rng::stream(seed, rng::EVAL_POLICY);
        run_epoch_eval(exp.agent_mut(), &mut game, 5, 10, &mut eval_rng, 1).unwrap();
        prop_assert_eq!(snapshot(exp.agent().as_dqn().unwrap()), before);
    }
}
