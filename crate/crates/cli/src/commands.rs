use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mudqn_core::agent::{load_checkpoint, DqnAgent};
use mudqn_core::engine::{TranscriptRecord, TranscriptWriter};
use mudqn_core::harness::{
    build_agent, epochs_to_threshold, export_embeddings, nearest_neighbors, protocol_for, room_variant_texts,
    run_epoch_eval, transfer_init, Carry, EpochMetrics, Experiment, TransferSpec, DEFAULT_STOPWORDS, METRICS_HEADER,
};
use mudqn_core::{rng, Agent, AgentKind, Command, Game, Vocab, World, WorldDef};

use crate::args::{AnalyzeArgs, EvalArgs, PlayArgs, TrainArgs, TransferArgs};
use crate::settings::{load_world, RunSettings};
use crate::CliError;

fn build_world(def: WorldDef) -> Result<Arc<World>, CliError> {
    World::new(def).map(Arc::new).map_err(|e| CliError::Usage(format!("invalid world: {e}")))
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(anyhow::anyhow!("{}: {e}", path.display()))
}

fn threshold_text(metrics: &[EpochMetrics]) -> String {
    epochs_to_threshold(metrics).map_or_else(|| "never".to_owned(), |e| e.to_string())
}

/// Trains to the configured length (or convergence), reporting each epoch
/// on stderr, and always leaves a checkpoint of the final agent.
fn drive(settings: &RunSettings, world: Arc<World>, agent: Agent) -> Result<Vec<EpochMetrics>, CliError> {
    let cfg = settings.experiment.clone();
    let mut exp = Experiment::new(cfg.clone(), world, agent)?;
    while exp.epochs_done() < cfg.epochs {
        let (_, eval) = exp.run_epoch()?;
        eprintln!(
            "{} epoch {}/{}: completion {:.3} reward {:.3}",
            cfg.run_id, eval.epoch, cfg.epochs, eval.quest_completion, eval.avg_reward
        );
        if cfg.stop_when_converged && epochs_to_threshold(exp.metrics()).is_some() {
            break;
        }
    }
    let out = settings.out_dir();
    println!("metrics {}", out.join(format!("{}.csv", cfg.run_id)).display());
    let last = exp.epochs_done();
    if last > 0 {
        if let Some(path) = exp.checkpoint(last)? {
            println!("checkpoint {}", path.display());
        }
    }
    println!("epochs_to_threshold {}", threshold_text(exp.metrics()));
    Ok(exp.metrics().to_vec())
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let settings = RunSettings::resolve(&args.run)?;
    let world = build_world(settings.world.clone())?;
    let agent = build_agent(&settings.experiment, &world, &[])?;
    let manifest = settings.write_manifest()?;
    println!("manifest {}", manifest.display());
    drive(&settings, world, agent)?;
    Ok(())
}

/// Loads a checkpoint and the world to run it on, which defaults to the
/// one it was trained on.
fn load_for_world(checkpoint: &Path, world: Option<&str>) -> Result<(DqnAgent, Arc<World>), CliError> {
    if !checkpoint.exists() {
        return Err(CliError::Usage(format!("no checkpoint at {}", checkpoint.display())));
    }
    let (agent, manifest) = load_checkpoint(checkpoint, rng::stream(0, rng::REPLAY))
        .map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", checkpoint.display())))?;
    let spec = match world {
        Some(w) => w.to_owned(),
        None => manifest.extra.get("world").map(str::to_owned).ok_or_else(|| {
            CliError::Usage("the checkpoint does not name its world; pass --world".into())
        })?,
    };
    let world = build_world(load_world(&spec)?)?;
    let def = world.def();
    if !agent.vocab().covers(&Vocab::from_worlds([def])) {
        return Err(CliError::Usage(format!(
            "the checkpoint's vocabulary does not cover world `{}`",
            def.name
        )));
    }
    if agent.n_actions() != world.n_actions() || agent.n_objects() != world.n_objects() {
        return Err(CliError::Usage(format!(
            "the checkpoint scores {}x{} commands but world `{}` has {}x{}",
            agent.n_actions(),
            agent.n_objects(),
            def.name,
            world.n_actions(),
            world.n_objects()
        )));
    }
    Ok((agent, world))
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let (agent, world) = load_for_world(&args.checkpoint, args.world.as_deref())?;
    let (episodes, steps, _) = protocol_for(world.def());
    let episodes = args.episodes.unwrap_or(episodes);
    let steps = args.steps.unwrap_or(steps);
    if episodes == 0 || steps == 0 {
        return Err(CliError::Usage("episodes and steps must be at least 1".into()));
    }
    let mut agent = Agent::Dqn(Box::new(agent));
    let mut game = Game::new(
        world.clone(),
        rng::stream(args.seed, rng::EVAL_WORLD),
        rng::stream(args.seed, rng::EVAL_DESCRIPTION),
    );
    let mut policy_rng = rng::stream(args.seed, rng::EVAL_POLICY);
    println!("{METRICS_HEADER}");
    for epoch in 1..=args.epochs {
        let m = run_epoch_eval(&mut agent, &mut game, episodes, steps, &mut policy_rng, epoch)?;
        println!("{}", m.to_csv_row());
    }
    Ok(())
}

const PLAY_HELP: &str = "type `<action> <object>`, `look` to see the room again, `help`, or `quit`";

pub fn play(args: &PlayArgs) -> Result<(), CliError> {
    let world = build_world(load_world(&args.world)?)?;
    let limit = args.steps.unwrap_or_else(|| protocol_for(world.def()).1);
    if limit == 0 {
        return Err(CliError::Usage("steps must be at least 1".into()));
    }
    let mut transcript = match &args.transcript {
        Some(path) => Some(TranscriptWriter::new(BufWriter::new(File::create(path).map_err(io_error(path))?))),
        None => None,
    };
    let mut game = Game::new(
        world.clone(),
        rng::stream(args.seed, rng::WORLD),
        rng::stream(args.seed, rng::DESCRIPTION),
    );
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let write_err = |e: io::Error| CliError::Runtime(e.into());

    let mut episode = 0;
    let mut step = 0;
    let mut obs = game.reset();
    writeln!(out, "{PLAY_HELP}\n\n{}", obs.text).map_err(write_err)?;
    for line in io::stdin().lock().lines() {
        let line = line.map_err(write_err)?;
        let line = line.trim();
        match line {
            "" => continue,
            "quit" | "exit" => break,
            "look" => {
                writeln!(out, "{}", obs.text).map_err(write_err)?;
                continue;
            }
            "help" => {
                let def = world.def();
                writeln!(
                    out,
                    "{PLAY_HELP}\nactions: {}\nobjects: {}",
                    def.actions.join(" "),
                    def.command_objects().join(" ")
                )
                .map_err(write_err)?;
                continue;
            }
            _ => {}
        }
        let Some(command) = Command::parse(&world, line) else {
            writeln!(out, "cannot parse `{line}`; {PLAY_HELP}").map_err(write_err)?;
            continue;
        };
        let outcome = game.step(command).map_err(|e| CliError::Runtime(e.into()))?;
        if let Some(w) = &mut transcript {
            w.record(&TranscriptRecord {
                epoch: 0,
                episode,
                step,
                command: command.display(&world).to_string(),
                reward: outcome.reward,
                terminal: outcome.terminal,
                observation: outcome.observation.text.clone(),
            })
            .and_then(|_| w.flush())
            .map_err(write_err)?;
        }
        step += 1;
        writeln!(out, "reward {:+.2}", outcome.reward).map_err(write_err)?;
        let ended = if outcome.quest_completed {
            Some("quest complete")
        } else if outcome.fell {
            Some("you fell")
        } else if outcome.terminal {
            Some("episode over")
        } else if step >= limit {
            Some("out of steps")
        } else {
            None
        };
        match ended {
            Some(notice) => {
                episode += 1;
                step = 0;
                obs = game.reset();
                writeln!(out, "*** {notice} ***\n\nnew episode\n{}", obs.text).map_err(write_err)?;
            }
            None => {
                obs = outcome.observation;
                writeln!(out, "{}", obs.text).map_err(write_err)?;
            }
        }
    }
    Ok(())
}

pub fn analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    if args.k == 0 {
        return Err(CliError::Usage("k must be at least 1".into()));
    }
    let (mut agent, world) = load_for_world(&args.checkpoint, args.world.as_deref())?;
    let def = world.def();
    let texts = room_variant_texts(def);
    let k = args.k.min(texts.len().saturating_sub(1));
    let descriptions: Vec<&str> = texts.iter().map(|(_, t)| t.as_str()).collect();
    let neighbors = nearest_neighbors(&mut agent, &descriptions, k.max(1))
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let flat = |t: &str| t.replace('\n', " / ");
    let mut report = format!("# {k} nearest neighbour(s) per description, by cosine of state vectors\n");
    let mut same_room = 0;
    for (i, hits) in neighbors.iter().enumerate() {
        let room = texts[i].0;
        report.push_str(&format!("[{}] {}\n", def.rooms[room].id, flat(&texts[i].1)));
        for &(j, sim) in hits {
            report.push_str(&format!("    {sim:.4} [{}] {}\n", def.rooms[texts[j].0].id, flat(&texts[j].1)));
        }
        if hits.first().is_some_and(|&(j, _)| texts[j].0 == room) {
            same_room += 1;
        }
    }
    report.push_str(&format!(
        "# nearest neighbour in the same room: {same_room}/{}\n",
        texts.len()
    ));
    match &args.report {
        Some(path) => fs::write(path, &report).map_err(io_error(path))?,
        None => print!("{report}"),
    }

    if let Some(path) = &args.export_embeddings {
        let stopwords: &[&str] = if args.keep_stopwords { &[] } else { DEFAULT_STOPWORDS };
        let rows = export_embeddings(agent.params(), agent.vocab(), stopwords, path).map_err(|e| match e {
            mudqn_core::agent::AgentError::Io(e) => io_error(path)(e),
            e => CliError::Usage(e.to_string()),
        })?;
        eprintln!("wrote {rows} embeddings to {}", path.display());
    }
    Ok(())
}

pub fn transfer(args: &TransferArgs) -> Result<(), CliError> {
    let carry: Carry = args.carry.parse().map_err(CliError::Usage)?;
    let mut run = args.run.clone();
    if run.world.is_none() && run.config.is_none() {
        run.world = Some("home-variant".into());
    }
    let mut settings = RunSettings::resolve(&run)?;
    if settings.experiment.agent != AgentKind::LstmDqn {
        return Err(CliError::Usage(format!(
            "transfer needs an lstm-dqn agent, not {}",
            settings.experiment.agent
        )));
    }
    let source: PathBuf = match (&args.checkpoint, settings.record.get("transfer_source")) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => return Err(CliError::Usage("transfer needs --checkpoint".into())),
    };
    if !source.exists() {
        return Err(CliError::Usage(format!("no checkpoint at {}", source.display())));
    }
    let world = build_world(settings.world.clone())?;
    let base_id = settings.experiment.run_id.clone();
    let base_id = base_id.strip_suffix("-transfer").unwrap_or(&base_id).to_owned();

    let mut fresh = settings.clone();
    settings.experiment.run_id = format!("{base_id}-transfer");
    settings.record.set("transfer_source", source.display());
    settings.record.set("carry", &args.carry);
    let spec = TransferSpec { source, carry };
    let agent = transfer_init(&spec, world.def(), &settings.experiment)?;
    println!("manifest {}", settings.write_manifest()?.display());
    let transferred = drive(&settings, world.clone(), agent)?;

    if args.baseline_fresh {
        fresh.experiment.run_id = format!("{base_id}-fresh");
        fresh.record = Default::default();
        let agent = build_agent(&fresh.experiment, &world, &[])?;
        println!("manifest {}", fresh.write_manifest()?.display());
        let scratch = drive(&fresh, world, agent)?;
        println!(
            "transfer {} fresh {} (epochs to threshold)",
            threshold_text(&transferred),
            threshold_text(&scratch)
        );
    }
    Ok(())
}
