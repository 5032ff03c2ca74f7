//! Game execution: hidden state, transitions, stochastic descriptions and rewards.
//!
//! Agents only ever see [`Observation`]s and [`StepOutcome`]s. The hidden
//! [`GameState`] is available to the engine, to tests and to scripted
//! oracles, never through the policy interface.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::world::{exits_line, CueMode, World};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("cannot step a terminal game state")]
    TerminalState,
    #[error("command ({action}, {object}) is outside the world's command set")]
    UnknownCommand { action: usize, object: usize },
    #[error("no episode in progress; call reset first")]
    NotStarted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalCause {
    None,
    QuestCompleted,
    Hazard,
}

/// The engine's hidden state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameState {
    room: usize,
    quest: usize,
    /// The quest's phrasing is fixed for the whole episode.
    quest_variant: usize,
    steps_taken: usize,
    cause: TerminalCause,
}

impl GameState {
    /// A state at the start of an episode; panics on out-of-range indices.
    pub fn new(world: &World, room: usize, quest: usize, quest_variant: usize) -> Self {
        assert!(room < world.n_rooms(), "room index out of range");
        let q = &world.def().quests[quest];
        assert!(quest_variant < q.description_variants.len(), "quest variant out of range");
        Self {
            room,
            quest,
            quest_variant,
            steps_taken: 0,
            cause: TerminalCause::None,
        }
    }

    pub fn room(&self) -> usize {
        self.room
    }

    pub fn quest(&self) -> usize {
        self.quest
    }

    pub fn quest_variant(&self) -> usize {
        self.quest_variant
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn terminal(&self) -> bool {
        self.cause != TerminalCause::None
    }

    pub fn terminal_cause(&self) -> TerminalCause {
        self.cause
    }
}

/// An `(action, object)` pair as indices into the world's action list and
/// command-argument list (objects, then directions).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Command {
    pub action: usize,
    pub object: usize,
}

impl Command {
    pub fn new(action: usize, object: usize) -> Self {
        Self { action, object }
    }

    /// Parses `<action> <object>`; `None` if either word is unknown.
    pub fn parse(world: &World, line: &str) -> Option<Self> {
        let words = crate::text::words(line);
        let [a, o] = words.as_slice() else {
            return None;
        };
        let def = world.def();
        let action = def.actions.iter().position(|x| x == a)?;
        let object = def.command_objects().iter().position(|x| x == o)?;
        Some(Self { action, object })
    }

    pub fn display<'a>(&self, world: &'a World) -> CommandDisplay<'a> {
        CommandDisplay {
            world,
            command: *self,
        }
    }
}

pub struct CommandDisplay<'a> {
    world: &'a World,
    command: Command,
}

impl fmt::Display for CommandDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let def = self.world.def();
        let objects = def.command_objects();
        write!(
            f,
            "{} {}",
            def.actions[self.command.action], objects[self.command.object]
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub text: String,
    /// Command-argument indices the game hints at; every argument when the
    /// world gives no cue.
    pub objects_cue: Vec<usize>,
}

impl Observation {
    /// Every action paired with every cued argument.
    pub fn admissible_commands(&self, n_actions: usize) -> Vec<Command> {
        (0..n_actions)
            .flat_map(|a| self.objects_cue.iter().map(move |&o| Command::new(a, o)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
    pub quest_completed: bool,
    pub valid_command: bool,
    /// Whether a hazard fired this step (the fall reward was added).
    pub fell: bool,
}

/// Starts an episode: uniform start room, uniform quest, uniform quest phrasing.
pub fn reset(
    world: &World,
    episode_rng: &mut impl Rng,
    description_rng: &mut impl Rng,
) -> (GameState, Observation) {
    let starts = world.start_rooms();
    let room = starts[episode_rng.random_range(0..starts.len())];
    let quest = episode_rng.random_range(0..world.def().quests.len());
    let n_variants = world.def().quests[quest].description_variants.len();
    let quest_variant = description_rng.random_range(0..n_variants);
    let state = GameState::new(world, room, quest, quest_variant);
    let obs = describe(world, &state, description_rng);
    (state, obs)
}

/// Applies one command.
pub fn step(
    world: &World,
    state: &GameState,
    command: Command,
    episode_rng: &mut impl Rng,
    description_rng: &mut impl Rng,
) -> Result<(GameState, StepOutcome), EngineError> {
    if state.terminal() {
        return Err(EngineError::TerminalState);
    }
    if command.action >= world.n_actions() || command.object >= world.n_objects() {
        return Err(EngineError::UnknownCommand {
            action: command.action,
            object: command.object,
        });
    }
    let def = world.def();
    let rewards = &def.rewards;
    let n_items = def.objects.len();

    let mut next = state.clone();
    next.steps_taken += 1;
    let mut reward = rewards.step_penalty;
    let mut valid = false;
    let mut completed = false;

    if Some(command.action) == world.move_action() && command.object >= n_items {
        if let Some(target) = world.exit(state.room, command.object - n_items) {
            next.room = target;
            valid = true;
        }
    } else if command.object < n_items
        && world.object_room(command.object) == state.room
        && world.object_action(command.object) == command.action
    {
        valid = true;
        completed = world.quest_goal(state.quest) == (command.action, command.object);
    }

    if !valid {
        reward += rewards.invalid_command_penalty;
    }
    let mut fell = false;
    if completed {
        reward += rewards.quest_reward;
        next.cause = TerminalCause::QuestCompleted;
    } else if let Some(h) = &def.rooms[next.room].hazard {
        if episode_rng.random::<f64>() < h.fall_probability {
            fell = true;
            reward += h.fall_reward;
            if h.fall_terminal {
                next.cause = TerminalCause::Hazard;
            }
        }
    }

    let observation = describe(world, &next, description_rng);
    let outcome = StepOutcome {
        observation,
        reward,
        terminal: next.terminal(),
        quest_completed: completed,
        valid_command: valid,
        fell,
    };
    Ok((next, outcome))
}

/// Draws a textual description of `state`.
pub fn describe(world: &World, state: &GameState, description_rng: &mut impl Rng) -> Observation {
    let def = world.def();
    let room = &def.rooms[state.room];
    let variant = &room.description_variants[description_rng.random_range(0..room.description_variants.len())];
    let mut text = variant.clone();
    if def.show_quest {
        text.push(' ');
        text.push_str(&def.quests[state.quest].description_variants[state.quest_variant]);
    }
    if def.cue == CueMode::Exits {
        text.push('\n');
        text.push_str(&exits_line(room));
    }
    let objects_cue = objects_cue(world, state.room);
    Observation { text, objects_cue }
}

/// Argument indices cued in `room`: objects present plus open exits, or
/// every argument when the world gives no cue or the cue is empty.
pub fn objects_cue(world: &World, room: usize) -> Vec<usize> {
    let def = world.def();
    if def.cue == CueMode::Exits {
        let mut cue: Vec<usize> = world.objects_in(room).to_vec();
        cue.extend(
            (0..def.directions.len())
                .filter(|&d| world.exit(room, d).is_some())
                .map(|d| world.direction_arg(d)),
        );
        if !cue.is_empty() {
            return cue;
        }
    }
    (0..world.n_objects()).collect()
}

/// Commands the game considers in `state`: every action with every cued argument.
pub fn admissible_commands(world: &World, state: &GameState) -> Vec<Command> {
    let cue = objects_cue(world, state.room);
    (0..world.n_actions())
        .flat_map(|a| cue.iter().map(move |&o| Command::new(a, o)))
        .collect()
}

/// A running game instance with its own random streams.
///
/// The episode stream drives start states and hazards; the description
/// stream drives text variants.
#[derive(Debug, Clone)]
pub struct Game {
    world: Arc<World>,
    state: Option<GameState>,
    episode_rng: ChaCha8Rng,
    description_rng: ChaCha8Rng,
}

impl Game {
    pub fn new(world: Arc<World>, episode_rng: ChaCha8Rng, description_rng: ChaCha8Rng) -> Self {
        Self {
            world,
            state: None,
            episode_rng,
            description_rng,
        }
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn reset(&mut self) -> Observation {
        let (state, obs) = reset(&self.world, &mut self.episode_rng, &mut self.description_rng);
        self.state = Some(state);
        obs
    }

    pub fn step(&mut self, command: Command) -> Result<StepOutcome, EngineError> {
        let state = self.state.as_ref().ok_or(EngineError::NotStarted)?;
        let (next, outcome) = step(
            &self.world,
            state,
            command,
            &mut self.episode_rng,
            &mut self.description_rng,
        )?;
        self.state = Some(next);
        Ok(outcome)
    }

    /// The hidden state, for oracles and tests.
    pub fn hidden_state(&self) -> Option<&GameState> {
        self.state.as_ref()
    }
}

/// One line of an episode transcript.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptRecord {
    pub epoch: usize,
    pub episode: usize,
    pub step: usize,
    pub command: String,
    pub reward: f64,
    pub terminal: bool,
    pub observation: String,
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(text: &str) -> Option<String> {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(out)
}

impl TranscriptRecord {
    /// Tab-separated: epoch, episode, step, command, reward, terminal, text.
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.epoch,
            self.episode,
            self.step,
            self.command,
            self.reward,
            u8::from(self.terminal),
            escape(&self.observation)
        )
    }

    pub fn parse_line(line: &str) -> Option<Self> {
        let fields: Vec<&str> = line.split('\t').collect();
        let [epoch, episode, step, command, reward, terminal, text] = fields.as_slice() else {
            return None;
        };
        Some(Self {
            epoch: epoch.parse().ok()?,
            episode: episode.parse().ok()?,
            step: step.parse().ok()?,
            command: (*command).to_owned(),
            reward: reward.parse().ok()?,
            terminal: match *terminal {
                "0" => false,
                "1" => true,
                _ => return None,
            },
            observation: unescape(text)?,
        })
    }
}

/// Appends transcript lines to any writer.
pub struct TranscriptWriter<W: Write> {
    out: W,
}

impl<W: Write> TranscriptWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn record(&mut self, record: &TranscriptRecord) -> io::Result<()> {
        writeln!(self.out, "{}", record.to_line())
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}
