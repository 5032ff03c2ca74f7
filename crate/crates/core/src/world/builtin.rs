use std::str::FromStr;

use super::{parse_world, WorldDef};

pub const HOME_SOURCE: &str = include_str!("../../worlds/home.world");
pub const HOME_VARIANT_SOURCE: &str = include_str!("../../worlds/home_variant.world");
pub const BRIDGE_SOURCE: &str = include_str!("../../worlds/bridge.world");

/// The worlds shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    Home,
    HomeVariant,
    Bridge,
}

impl Builtin {
    pub const ALL: [Builtin; 3] = [Builtin::Home, Builtin::HomeVariant, Builtin::Bridge];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Home => "home",
            Builtin::HomeVariant => "home-variant",
            Builtin::Bridge => "bridge",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            Builtin::Home => HOME_SOURCE,
            Builtin::HomeVariant => HOME_VARIANT_SOURCE,
            Builtin::Bridge => BRIDGE_SOURCE,
        }
    }

    pub fn load(self) -> WorldDef {
        parse_world(self.source()).expect("built-in world sources are valid")
    }
}

impl FromStr for Builtin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown built-in world `{s}`"))
    }
}

/// Four rooms on a square with one object each and four quests.
pub fn builtin_home_world() -> WorldDef {
    Builtin::Home.load()
}

/// Home world with the rooms rearranged so every pathway changes direction.
pub fn builtin_home_world_variant() -> WorldDef {
    Builtin::HomeVariant.load()
}

/// Broken-bridge world: a five-command quest across two hazardous rooms.
pub fn builtin_bridge_world() -> WorldDef {
    Builtin::Bridge.load()
}
