//! Bag-of-words and bag-of-bigrams count vectors for the baseline agents.

use std::collections::HashMap;

use ndarray::{Array1, ArrayViewMut1};

use super::vocab::Vocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BagKind {
    Words,
    Bigrams,
}

/// Maps a token sequence to raw (unnormalized) counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Featurizer {
    kind: BagKind,
    vocab_size: usize,
    bigrams: Vec<(u32, u32)>,
    bigram_index: HashMap<(u32, u32), usize>,
}

impl Featurizer {
    pub fn words(vocab: &Vocab) -> Self {
        Self {
            kind: BagKind::Words,
            vocab_size: vocab.len(),
            bigrams: Vec::new(),
            bigram_index: HashMap::new(),
        }
    }

    /// Bigram inventory from a warm-up pass over `texts`; bigrams never seen
    /// there are dropped at run time.
    pub fn bigrams<S: AsRef<str>>(vocab: &Vocab, texts: &[S]) -> Self {
        let mut pairs: Vec<(u32, u32)> = texts
            .iter()
            .flat_map(|t| {
                let ids = vocab.tokenize(t.as_ref());
                ids.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>()
            })
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        Self::from_bigrams(vocab, pairs)
    }

    pub fn from_bigrams(vocab: &Vocab, bigrams: Vec<(u32, u32)>) -> Self {
        let bigram_index = bigrams.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        Self {
            kind: BagKind::Bigrams,
            vocab_size: vocab.len(),
            bigrams,
            bigram_index,
        }
    }

    pub fn kind(&self) -> BagKind {
        self.kind
    }

    pub fn bigram_list(&self) -> &[(u32, u32)] {
        &self.bigrams
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            BagKind::Words => self.vocab_size,
            BagKind::Bigrams => self.bigrams.len().max(1),
        }
    }

    pub fn write(&self, tokens: &[u32], mut out: ArrayViewMut1<'_, f64>) {
        out.fill(0.0);
        match self.kind {
            BagKind::Words => {
                for &t in tokens {
                    out[t as usize] += 1.0;
                }
            }
            BagKind::Bigrams => {
                for w in tokens.windows(2) {
                    if let Some(&i) = self.bigram_index.get(&(w[0], w[1])) {
                        out[i] += 1.0;
                    }
                }
            }
        }
    }

    pub fn features(&self, tokens: &[u32]) -> Array1<f64> {
        let mut v = Array1::zeros(self.dim());
        self.write(tokens, v.view_mut());
        v
    }
}
