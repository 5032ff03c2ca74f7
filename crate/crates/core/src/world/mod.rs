//! Declarative world definitions: rooms, exits, objects, quests and rewards.
//!
//! Worlds are written in a small line-oriented format (see `docs/world-format.md`)
//! and validated on parse. [`World`] wraps a validated [`WorldDef`] with the
//! index tables the game engine needs.

mod builtin;
mod parse;
mod validate;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

pub use builtin::{builtin_bridge_world, builtin_home_world, builtin_home_world_variant, Builtin};
pub use parse::parse_world;

/// Name of the movement action. `go <direction>` follows an exit.
pub const MOVE_ACTION: &str = "go";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DslError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid world: {0}")]
    Invalid(String),
}

/// Whether the game narrows the object set with an in-game cue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CueMode {
    /// No cue: every object and direction is considered in every room.
    None,
    /// The room lists its exits; objects present plus exits form the cue.
    Exits,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hazard {
    pub fall_probability: f64,
    pub fall_reward: f64,
    pub fall_terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomDef {
    pub id: String,
    /// `(direction, target room id)` in declaration order.
    pub exits: Vec<(String, String)>,
    pub description_variants: Vec<String>,
    pub hazard: Option<Hazard>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectDef {
    pub name: String,
    /// The one action that applies to this object.
    pub action: String,
    pub room: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestDef {
    pub id: String,
    pub goal_action: String,
    pub goal_object: String,
    pub description_variants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardSpec {
    pub quest_reward: f64,
    pub step_penalty: f64,
    /// Added on top of the step penalty for an inadmissible command.
    pub invalid_command_penalty: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self {
            quest_reward: 1.0,
            step_penalty: -0.01,
            invalid_command_penalty: -0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldDef {
    pub name: String,
    pub actions: Vec<String>,
    pub directions: Vec<String>,
    pub start_rooms: Vec<String>,
    pub cue: CueMode,
    /// Whether the quest description is appended to every observation.
    pub show_quest: bool,
    pub max_descriptions: usize,
    pub rewards: RewardSpec,
    pub rooms: Vec<RoomDef>,
    pub objects: Vec<ObjectDef>,
    pub quests: Vec<QuestDef>,
}

impl WorldDef {
    /// Command arguments in index order: objects first, then directions.
    pub fn command_objects(&self) -> Vec<&str> {
        self.objects
            .iter()
            .map(|o| o.name.as_str())
            .chain(self.directions.iter().map(String::as_str))
            .collect()
    }

    /// Size of the full command set, `|actions| × |objects ∪ directions|`.
    pub fn command_count(&self) -> usize {
        self.actions.len() * (self.objects.len() + self.directions.len())
    }

    pub fn room(&self, id: &str) -> Option<&RoomDef> {
        self.rooms.iter().find(|r| r.id == id)
    }

    /// Every distinct token appearing in any text the game can show.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        self.all_texts()
            .iter()
            .flat_map(|t| crate::text::words(t))
            .collect()
    }

    /// Room descriptions, quest descriptions (when shown) and exit cue lines.
    pub fn all_texts(&self) -> Vec<String> {
        let mut texts: Vec<String> = self
            .rooms
            .iter()
            .flat_map(|r| r.description_variants.iter().cloned())
            .collect();
        if self.show_quest {
            texts.extend(
                self.quests
                    .iter()
                    .flat_map(|q| q.description_variants.iter().cloned()),
            );
        }
        if self.cue == CueMode::Exits {
            texts.extend(self.rooms.iter().map(exits_line));
        }
        texts
    }

    /// Canonical source text; parsing it yields an equal `WorldDef`.
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[world {}]", self.name);
        let _ = writeln!(out, "actions {}", self.actions.join(" "));
        let _ = writeln!(out, "directions {}", self.directions.join(" "));
        let _ = writeln!(out, "start {}", self.start_rooms.join(" "));
        let cue = match self.cue {
            CueMode::None => "none",
            CueMode::Exits => "exits",
        };
        let _ = writeln!(out, "cue {cue}");
        let _ = writeln!(
            out,
            "quest-text {}",
            if self.show_quest { "shown" } else { "hidden" }
        );
        let _ = writeln!(out, "max-descriptions {}", self.max_descriptions);
        out.push('\n');
        out.push_str("[rewards]\n");
        let _ = writeln!(out, "quest {:?}", self.rewards.quest_reward);
        let _ = writeln!(out, "step {:?}", self.rewards.step_penalty);
        let _ = writeln!(out, "invalid {:?}", self.rewards.invalid_command_penalty);
        for room in &self.rooms {
            let _ = writeln!(out, "\n[room {}]", room.id);
            for (dir, target) in &room.exits {
                let _ = writeln!(out, "exit {dir} {target}");
            }
            if let Some(h) = &room.hazard {
                let _ = writeln!(
                    out,
                    "hazard {:?} {:?} {}",
                    h.fall_probability,
                    h.fall_reward,
                    if h.fall_terminal { "terminal" } else { "nonterminal" }
                );
            }
            for d in &room.description_variants {
                let _ = writeln!(out, "desc {d}");
            }
        }
        out.push('\n');
        for o in &self.objects {
            let _ = writeln!(out, "[object {} {} {}]", o.name, o.action, o.room);
        }
        for q in &self.quests {
            let _ = writeln!(out, "\n[quest {} {} {}]", q.id, q.goal_action, q.goal_object);
            for d in &q.description_variants {
                let _ = writeln!(out, "desc {d}");
            }
        }
        out
    }

    /// Stable hash of the canonical source, used in run manifests.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_source().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// The exit cue line a room shows when the world provides cues.
pub(crate) fn exits_line(room: &RoomDef) -> String {
    let dirs: Vec<&str> = room.exits.iter().map(|(d, _)| d.as_str()).collect();
    format!("exits : {}", dirs.join(" "))
}

/// A validated world with precomputed index tables.
#[derive(Debug, Clone)]
pub struct World {
    def: WorldDef,
    /// `exits[room][direction] = target room`.
    exits: Vec<Vec<Option<usize>>>,
    /// Object indices located in each room.
    room_objects: Vec<Vec<usize>>,
    object_action: Vec<usize>,
    object_room: Vec<usize>,
    quest_goal: Vec<(usize, usize)>,
    start_rooms: Vec<usize>,
    move_action: Option<usize>,
}

impl World {
    pub fn new(def: WorldDef) -> Result<Self, DslError> {
        validate::validate(&def)?;
        let room_ix: HashMap<&str, usize> = def
            .rooms
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect();
        let action_ix = |a: &str| def.actions.iter().position(|x| x == a).expect("validated");
        let dir_ix = |d: &str| def.directions.iter().position(|x| x == d).expect("validated");

        let exits = def
            .rooms
            .iter()
            .map(|r| {
                let mut row = vec![None; def.directions.len()];
                for (d, target) in &r.exits {
                    row[dir_ix(d)] = Some(room_ix[target.as_str()]);
                }
                row
            })
            .collect();
        let mut room_objects = vec![Vec::new(); def.rooms.len()];
        for (i, o) in def.objects.iter().enumerate() {
            room_objects[room_ix[o.room.as_str()]].push(i);
        }
        let object_action = def.objects.iter().map(|o| action_ix(&o.action)).collect();
        let object_room = def.objects.iter().map(|o| room_ix[o.room.as_str()]).collect();
        let quest_goal = def
            .quests
            .iter()
            .map(|q| {
                let obj = def
                    .objects
                    .iter()
                    .position(|o| o.name == q.goal_object)
                    .expect("validated");
                (action_ix(&q.goal_action), obj)
            })
            .collect();
        let start_rooms = def.start_rooms.iter().map(|s| room_ix[s.as_str()]).collect();
        let move_action = def.actions.iter().position(|a| a == MOVE_ACTION);
        Ok(Self {
            exits,
            room_objects,
            object_action,
            object_room,
            quest_goal,
            start_rooms,
            move_action,
            def,
        })
    }

    pub fn def(&self) -> &WorldDef {
        &self.def
    }

    pub fn n_rooms(&self) -> usize {
        self.def.rooms.len()
    }

    pub fn n_actions(&self) -> usize {
        self.def.actions.len()
    }

    /// Number of command arguments (objects plus directions).
    pub fn n_objects(&self) -> usize {
        self.def.objects.len() + self.def.directions.len()
    }

    pub fn start_rooms(&self) -> &[usize] {
        &self.start_rooms
    }

    pub fn move_action(&self) -> Option<usize> {
        self.move_action
    }

    /// Target room when leaving `room` through direction index `dir`.
    pub fn exit(&self, room: usize, dir: usize) -> Option<usize> {
        self.exits[room].get(dir).copied().flatten()
    }

    pub fn objects_in(&self, room: usize) -> &[usize] {
        &self.room_objects[room]
    }

    pub fn object_action(&self, object: usize) -> usize {
        self.object_action[object]
    }

    pub fn object_room(&self, object: usize) -> usize {
        self.object_room[object]
    }

    /// `(action, object)` command indices that complete `quest`.
    pub fn quest_goal(&self, quest: usize) -> (usize, usize) {
        self.quest_goal[quest]
    }

    /// Command-argument index of direction `dir`.
    pub fn direction_arg(&self, dir: usize) -> usize {
        self.def.objects.len() + dir
    }

    /// Breadth-first distances (in moves) from `from` to every room.
    pub fn room_distances(&self, from: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_rooms()];
        dist[from] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(r) = queue.pop_front() {
            let d = dist[r].expect("queued rooms have a distance");
            for target in self.exits[r].iter().flatten() {
                if dist[*target].is_none() {
                    dist[*target] = Some(d + 1);
                    queue.push_back(*target);
                }
            }
        }
        dist
    }

    /// Shortest move sequence (direction indices) from `from` to `to`.
    pub fn shortest_route(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; self.n_rooms()];
        let mut seen = vec![false; self.n_rooms()];
        seen[from] = true;
        let mut queue = VecDeque::from([from]);
        while let Some(r) = queue.pop_front() {
            if r == to {
                let mut route = Vec::new();
                let mut cur = to;
                while let Some((p, dir)) = prev[cur] {
                    route.push(dir);
                    cur = p;
                }
                route.reverse();
                return Some(route);
            }
            for (dir, target) in self.exits[r].iter().enumerate() {
                if let Some(t) = *target {
                    if !seen[t] {
                        seen[t] = true;
                        prev[t] = Some((r, dir));
                        queue.push_back(t);
                    }
                }
            }
        }
        None
    }
}
