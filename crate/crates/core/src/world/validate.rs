use std::collections::{HashMap, HashSet, VecDeque};

use super::{DslError, WorldDef, MOVE_ACTION};

fn invalid(msg: impl Into<String>) -> DslError {
    DslError::Invalid(msg.into())
}

fn unique<'a>(what: &str, names: impl IntoIterator<Item = &'a str>) -> Result<(), DslError> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(invalid(format!("duplicate {what} `{n}`")));
        }
    }
    Ok(())
}

fn single_word(what: &str, name: &str) -> Result<(), DslError> {
    if crate::text::words(name) != [name] {
        return Err(invalid(format!(
            "{what} name `{name}` must be a single lowercase word"
        )));
    }
    Ok(())
}

pub(super) fn validate(w: &WorldDef) -> Result<(), DslError> {
    if w.rooms.is_empty() {
        return Err(invalid("world has no rooms"));
    }
    if w.quests.is_empty() {
        return Err(invalid("world has no quests"));
    }
    if w.actions.is_empty() {
        return Err(invalid("world has no actions"));
    }
    unique("room", w.rooms.iter().map(|r| r.id.as_str()))?;
    unique("object", w.objects.iter().map(|o| o.name.as_str()))?;
    unique("quest", w.quests.iter().map(|q| q.id.as_str()))?;
    unique("action", w.actions.iter().map(String::as_str))?;
    unique("direction", w.directions.iter().map(String::as_str))?;
    for a in &w.actions {
        single_word("action", a)?;
    }
    for n in w
        .objects
        .iter()
        .map(|o| o.name.as_str())
        .chain(w.directions.iter().map(String::as_str))
    {
        single_word("object", n)?;
        if w.actions.iter().any(|a| a == n) {
            return Err(invalid(format!("`{n}` is both an action and an object")));
        }
    }
    if w.directions.iter().any(|d| w.objects.iter().any(|o| &o.name == d)) {
        return Err(invalid("object and direction names overlap"));
    }

    let r = &w.rewards;
    if !(r.quest_reward > 0.0) {
        return Err(invalid("quest reward must be positive"));
    }
    if !(r.step_penalty < 0.0) {
        return Err(invalid("step penalty must be negative"));
    }
    if !(r.invalid_command_penalty <= 0.0) {
        return Err(invalid("invalid-command penalty must not be positive"));
    }
    if w.max_descriptions == 0 {
        return Err(invalid("max-descriptions must be at least 1"));
    }

    let room_ix: HashMap<&str, usize> = w
        .rooms
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    let mut has_exits = false;
    for room in &w.rooms {
        let n = room.description_variants.len();
        if n == 0 {
            return Err(invalid(format!("room `{}` has no description variants", room.id)));
        }
        if n > w.max_descriptions {
            return Err(invalid(format!(
                "room `{}` has {n} description variants, more than max-descriptions {}",
                room.id, w.max_descriptions
            )));
        }
        let mut dirs = HashSet::new();
        for (dir, target) in &room.exits {
            has_exits = true;
            if !w.directions.contains(dir) {
                return Err(invalid(format!(
                    "room `{}`: exit `{dir}` uses an undeclared direction",
                    room.id
                )));
            }
            if !dirs.insert(dir) {
                return Err(invalid(format!("room `{}`: duplicate exit `{dir}`", room.id)));
            }
            if !room_ix.contains_key(target.as_str()) {
                return Err(invalid(format!(
                    "room `{}`: exit `{dir}` leads to undefined room `{target}`",
                    room.id
                )));
            }
        }
        if let Some(h) = &room.hazard {
            if !(0.0..=1.0).contains(&h.fall_probability) {
                return Err(invalid(format!(
                    "room `{}`: fall probability {} outside [0, 1]",
                    room.id, h.fall_probability
                )));
            }
        }
    }
    if has_exits && !w.actions.iter().any(|a| a == MOVE_ACTION) {
        return Err(invalid(format!("rooms have exits but `{MOVE_ACTION}` is not an action")));
    }

    // Every room must reach every other room.
    for start in 0..w.rooms.len() {
        let mut seen = vec![false; w.rooms.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(r) = queue.pop_front() {
            for (_, target) in &w.rooms[r].exits {
                let t = room_ix[target.as_str()];
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(invalid(format!(
                "room graph is not connected: `{}` cannot reach `{}`",
                w.rooms[start].id, w.rooms[missing].id
            )));
        }
    }

    for o in &w.objects {
        if !w.actions.contains(&o.action) || o.action == MOVE_ACTION {
            return Err(invalid(format!(
                "object `{}` uses unknown action `{}`",
                o.name, o.action
            )));
        }
        if !room_ix.contains_key(o.room.as_str()) {
            return Err(invalid(format!(
                "object `{}` placed in undefined room `{}`",
                o.name, o.room
            )));
        }
    }

    for q in &w.quests {
        if q.description_variants.is_empty() {
            return Err(invalid(format!("quest `{}` has no description variants", q.id)));
        }
        let Some(obj) = w.objects.iter().find(|o| o.name == q.goal_object) else {
            return Err(invalid(format!(
                "quest `{}` targets unknown object `{}`",
                q.id, q.goal_object
            )));
        };
        if obj.action != q.goal_action {
            return Err(invalid(format!(
                "quest `{}`: `{} {}` is not admissible anywhere",
                q.id, q.goal_action, q.goal_object
            )));
        }
    }

    if w.start_rooms.is_empty() {
        return Err(invalid("no start rooms"));
    }
    unique("start room", w.start_rooms.iter().map(String::as_str))?;
    for s in &w.start_rooms {
        if !room_ix.contains_key(s.as_str()) {
            return Err(invalid(format!("start room `{s}` is not defined")));
        }
    }
    Ok(())
}
