use super::{validate, CueMode, DslError, Hazard, ObjectDef, QuestDef, RewardSpec, RoomDef, WorldDef, MOVE_ACTION};

enum Section {
    None,
    World,
    Rewards,
    Room(usize),
    Object,
    Quest(usize),
}

#[derive(Default)]
struct Header {
    name: Option<String>,
    actions: Option<Vec<String>>,
    directions: Option<Vec<String>>,
    start: Option<Vec<String>>,
    cue: Option<CueMode>,
    show_quest: Option<bool>,
    max_descriptions: Option<usize>,
}

struct Line<'a> {
    number: usize,
    text: &'a str,
}

impl Line<'_> {
    fn error(&self, column: usize, message: impl Into<String>) -> DslError {
        DslError::Syntax {
            line: self.number,
            column,
            message: message.into(),
        }
    }

    /// Whitespace-separated tokens with their 1-based columns.
    fn tokens(&self) -> Vec<(usize, &str)> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, c) in self.text.char_indices() {
            match (c.is_whitespace(), start) {
                (true, Some(s)) => {
                    out.push((s + 1, &self.text[s..i]));
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((s + 1, &self.text[s..]));
        }
        out
    }

    /// Free text after the keyword, trimmed.
    fn rest_after(&self, keyword_end: usize) -> &str {
        self.text[keyword_end..].trim()
    }
}

fn parse_f64(line: &Line, (col, tok): (usize, &str)) -> Result<f64, DslError> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| line.error(col, format!("expected a number, found `{tok}`")))
}

fn expect_args<'a>(
    line: &Line,
    tokens: &[(usize, &'a str)],
    n: usize,
    what: &str,
) -> Result<Vec<(usize, &'a str)>, DslError> {
    if tokens.len() != n + 1 {
        let col = tokens.get(n + 1).or(tokens.last()).map_or(1, |t| t.0);
        return Err(line.error(col, format!("`{what}` takes {n} argument(s)")));
    }
    Ok(tokens[1..].to_vec())
}

/// Parses and validates a world definition.
pub fn parse_world(source: &str) -> Result<WorldDef, DslError> {
    let mut header = Header::default();
    let mut rewards: Option<RewardSpec> = None;
    let mut rooms: Vec<RoomDef> = Vec::new();
    let mut objects: Vec<ObjectDef> = Vec::new();
    let mut quests: Vec<QuestDef> = Vec::new();
    let mut section = Section::None;

    for (i, raw) in source.lines().enumerate() {
        let line = Line {
            number: i + 1,
            text: raw,
        };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let indent = raw.len() - raw.trim_start().len();

        if trimmed.starts_with('[') {
            if !trimmed.ends_with(']') {
                return Err(line.error(indent + trimmed.len(), "section header must end with `]`"));
            }
            let inner = Line {
                number: line.number,
                text: &raw[..indent + trimmed.len() - 1],
            };
            let toks: Vec<(usize, &str)> = inner
                .tokens()
                .into_iter()
                .map(|(c, t)| {
                    let name = t.trim_start_matches('[');
                    (c + t.len() - name.len(), name)
                })
                .filter(|(_, t)| !t.is_empty())
                .collect();
            let Some(&(col, kind)) = toks.first() else {
                return Err(line.error(indent + 1, "empty section header"));
            };
            section = match kind {
                "world" => {
                    let args = expect_args(&line, &toks, 1, "world")?;
                    if header.name.is_some() {
                        return Err(line.error(col, "duplicate [world] section"));
                    }
                    header.name = Some(args[0].1.to_owned());
                    Section::World
                }
                "rewards" => {
                    expect_args(&line, &toks, 0, "rewards")?;
                    if rewards.is_some() {
                        return Err(line.error(col, "duplicate [rewards] section"));
                    }
                    rewards = Some(RewardSpec {
                        quest_reward: f64::NAN,
                        step_penalty: f64::NAN,
                        invalid_command_penalty: f64::NAN,
                    });
                    Section::Rewards
                }
                "room" => {
                    let args = expect_args(&line, &toks, 1, "room")?;
                    rooms.push(RoomDef {
                        id: args[0].1.to_owned(),
                        exits: Vec::new(),
                        description_variants: Vec::new(),
                        hazard: None,
                    });
                    Section::Room(rooms.len() - 1)
                }
                "object" => {
                    let args = expect_args(&line, &toks, 3, "object")?;
                    objects.push(ObjectDef {
                        name: args[0].1.to_owned(),
                        action: args[1].1.to_owned(),
                        room: args[2].1.to_owned(),
                    });
                    Section::Object
                }
                "quest" => {
                    let args = expect_args(&line, &toks, 3, "quest")?;
                    quests.push(QuestDef {
                        id: args[0].1.to_owned(),
                        goal_action: args[1].1.to_owned(),
                        goal_object: args[2].1.to_owned(),
                        description_variants: Vec::new(),
                    });
                    Section::Quest(quests.len() - 1)
                }
                other => return Err(line.error(col, format!("unknown section `{other}`"))),
            };
            continue;
        }

        let toks = line.tokens();
        let (kcol, keyword) = toks[0];
        let keyword_end = kcol - 1 + keyword.len();
        match &section {
            Section::None => {
                return Err(line.error(kcol, "directive outside of any section"));
            }
            Section::World => match keyword {
                "actions" => header.actions = Some(toks[1..].iter().map(|t| t.1.to_owned()).collect()),
                "directions" => {
                    header.directions = Some(toks[1..].iter().map(|t| t.1.to_owned()).collect())
                }
                "start" => header.start = Some(toks[1..].iter().map(|t| t.1.to_owned()).collect()),
                "cue" => {
                    let args = expect_args(&line, &toks, 1, "cue")?;
                    header.cue = Some(match args[0].1 {
                        "none" => CueMode::None,
                        "exits" => CueMode::Exits,
                        other => {
                            return Err(line.error(args[0].0, format!("unknown cue mode `{other}`")))
                        }
                    });
                }
                "quest-text" => {
                    let args = expect_args(&line, &toks, 1, "quest-text")?;
                    header.show_quest = Some(match args[0].1 {
                        "shown" => true,
                        "hidden" => false,
                        other => {
                            return Err(line.error(
                                args[0].0,
                                format!("expected `shown` or `hidden`, found `{other}`"),
                            ))
                        }
                    });
                }
                "max-descriptions" => {
                    let args = expect_args(&line, &toks, 1, "max-descriptions")?;
                    let n = args[0]
                        .1
                        .parse::<usize>()
                        .map_err(|_| line.error(args[0].0, "expected a count"))?;
                    header.max_descriptions = Some(n);
                }
                other => return Err(line.error(kcol, format!("unknown world setting `{other}`"))),
            },
            Section::Rewards => {
                let args = expect_args(&line, &toks, 1, keyword)?;
                let value = parse_f64(&line, args[0])?;
                let r = rewards.as_mut().expect("rewards section open");
                match keyword {
                    "quest" => r.quest_reward = value,
                    "step" => r.step_penalty = value,
                    "invalid" => r.invalid_command_penalty = value,
                    other => return Err(line.error(kcol, format!("unknown reward `{other}`"))),
                }
            }
            Section::Room(ix) => {
                let room = &mut rooms[*ix];
                match keyword {
                    "exit" => {
                        let args = expect_args(&line, &toks, 2, "exit")?;
                        room.exits.push((args[0].1.to_owned(), args[1].1.to_owned()));
                    }
                    "desc" => {
                        let text = line.rest_after(keyword_end);
                        if text.is_empty() {
                            return Err(line.error(kcol, "empty description"));
                        }
                        room.description_variants.push(text.to_owned());
                    }
                    "hazard" => {
                        let args = expect_args(&line, &toks, 3, "hazard")?;
                        let fall_terminal = match args[2].1 {
                            "terminal" => true,
                            "nonterminal" => false,
                            other => {
                                return Err(line.error(
                                    args[2].0,
                                    format!("expected `terminal` or `nonterminal`, found `{other}`"),
                                ))
                            }
                        };
                        if room.hazard.is_some() {
                            return Err(line.error(kcol, "room already has a hazard"));
                        }
                        room.hazard = Some(Hazard {
                            fall_probability: parse_f64(&line, args[0])?,
                            fall_reward: parse_f64(&line, args[1])?,
                            fall_terminal,
                        });
                    }
                    other => return Err(line.error(kcol, format!("unknown room directive `{other}`"))),
                }
            }
            Section::Object => {
                return Err(line.error(kcol, "object sections take no directives"));
            }
            Section::Quest(ix) => match keyword {
                "desc" => {
                    let text = line.rest_after(keyword_end);
                    if text.is_empty() {
                        return Err(line.error(kcol, "empty description"));
                    }
                    quests[*ix].description_variants.push(text.to_owned());
                }
                other => return Err(line.error(kcol, format!("unknown quest directive `{other}`"))),
            },
        }
    }

    let name = header
        .name
        .ok_or_else(|| DslError::Invalid("missing [world <name>] section".into()))?;
    let rewards = rewards.ok_or_else(|| DslError::Invalid("missing [rewards] section".into()))?;
    for (field, v) in [
        ("quest", rewards.quest_reward),
        ("step", rewards.step_penalty),
        ("invalid", rewards.invalid_command_penalty),
    ] {
        if v.is_nan() {
            return Err(DslError::Invalid(format!("[rewards] is missing `{field}`")));
        }
    }

    let actions = header.actions.unwrap_or_else(|| {
        let mut acts: Vec<String> = Vec::new();
        for o in &objects {
            if !acts.contains(&o.action) {
                acts.push(o.action.clone());
            }
        }
        if rooms.iter().any(|r| !r.exits.is_empty()) && !acts.iter().any(|a| a == MOVE_ACTION) {
            acts.push(MOVE_ACTION.to_owned());
        }
        acts
    });
    let directions = header.directions.unwrap_or_else(|| {
        let mut dirs: Vec<String> = Vec::new();
        for (d, _) in rooms.iter().flat_map(|r| &r.exits) {
            if !dirs.contains(d) {
                dirs.push(d.clone());
            }
        }
        dirs
    });
    let start_rooms = header
        .start
        .unwrap_or_else(|| rooms.iter().map(|r| r.id.clone()).collect());
    let max_descriptions = header.max_descriptions.unwrap_or_else(|| {
        rooms
            .iter()
            .map(|r| r.description_variants.len())
            .max()
            .unwrap_or(1)
    });

    let def = WorldDef {
        name,
        actions,
        directions,
        start_rooms,
        cue: header.cue.unwrap_or(CueMode::None),
        show_quest: header.show_quest.unwrap_or(true),
        max_descriptions,
        rewards,
        rooms,
        objects,
        quests,
    };
    validate::validate(&def)?;
    Ok(def)
}
