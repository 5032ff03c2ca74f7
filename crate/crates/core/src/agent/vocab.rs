use std::collections::HashMap;

use crate::text::words;
use crate::world::WorldDef;

pub const UNK: u32 = 0;
pub const UNK_TOKEN: &str = "<unk>";

/// Frozen token-to-id map. Id 0 is always the unknown token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

/// Collects tokens until [`freeze`](VocabBuilder::freeze) is called.
#[derive(Debug, Clone, Default)]
pub struct VocabBuilder {
    tokens: Vec<String>,
}

impl VocabBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_text(&mut self, text: &str) -> &mut Self {
        self.tokens.extend(words(text));
        self
    }

    pub fn add_world(&mut self, world: &WorldDef) -> &mut Self {
        for t in world.all_texts() {
            self.add_text(&t);
        }
        self
    }

    /// Ids are assigned in sorted token order after UNK.
    pub fn freeze(&self) -> Vocab {
        let mut tokens = self.tokens.clone();
        tokens.sort();
        tokens.dedup();
        tokens.retain(|t| t != UNK_TOKEN);
        Vocab::from_tokens(std::iter::once(UNK_TOKEN.to_owned()).chain(tokens))
            .expect("sorted unique tokens")
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("vocabulary listing must start with `{UNK_TOKEN}`")]
    MissingUnk,
    #[error("duplicate token `{0}`")]
    Duplicate(String),
}

impl Vocab {
    /// The vocabulary of everything the given worlds can show. Passing more
    /// than one world yields their union, which keeps embedding rows aligned
    /// when parameters move between worlds.
    pub fn from_worlds<'a>(worlds: impl IntoIterator<Item = &'a WorldDef>) -> Self {
        let mut b = VocabBuilder::new();
        for w in worlds {
            b.add_world(w);
        }
        b.freeze()
    }

    /// Rebuilds a vocabulary from its token listing (id order).
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self, VocabError> {
        let tokens: Vec<String> = tokens.into_iter().collect();
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(VocabError::MissingUnk);
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(VocabError::Duplicate(t.clone()));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Lowercased words mapped to ids; unknown words become UNK and an empty
    /// text becomes a single UNK.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let ids: Vec<u32> = words(text).iter().map(|w| self.id(w)).collect();
        if ids.is_empty() {
            vec![UNK]
        } else {
            ids
        }
    }

    /// Whether every token of `other` exists here.
    pub fn covers(&self, other: &Vocab) -> bool {
        other.tokens.iter().all(|t| self.contains(t))
    }
}
