//! Looking inside a trained agent: nearest neighbours of state vectors and
//! an export of the word embeddings for external projection tools.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use ndarray::Array1;

use crate::agent::{AgentError, DqnAgent, Vocab, UNK_TOKEN};
use crate::neural::NetParams;
use crate::world::{exits_line, CueMode, WorldDef};

/// Function words left out of embedding exports by default.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "at", "but", "by", "for", "from", "has", "here", "in", "into", "is", "it", "its", "of",
    "on", "one", "or", "that", "the", "there", "this", "to", "with", "you", "your",
];

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(b) / (na * nb)
    }
}

/// For each vector, the `k` most similar others as `(index, cosine)`,
/// best first. Equal similarities keep input order.
pub fn nearest_neighbors_of(vectors: &[Array1<f64>], k: usize) -> Vec<Vec<(usize, f64)>> {
    (0..vectors.len())
        .map(|i| {
            let mut sims: Vec<(usize, f64)> = (0..vectors.len())
                .filter(|&j| j != i)
                .map(|j| (j, cosine(&vectors[i], &vectors[j])))
                .collect();
            sims.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
            sims.truncate(k);
            sims
        })
        .collect()
}

/// Nearest neighbours of descriptions under the agent's state vectors.
pub fn nearest_neighbors<S: AsRef<str>>(
    agent: &mut DqnAgent,
    descriptions: &[S],
    k: usize,
) -> Result<Vec<Vec<(usize, f64)>>, AgentError> {
    if descriptions.len() < 2 {
        return Err(AgentError::Config("nearest neighbours need at least two descriptions".into()));
    }
    let vectors = descriptions
        .iter()
        .map(|d| agent.represent(d.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(nearest_neighbors_of(&vectors, k))
}

/// Every room description variant as the agent would read it without the
/// quest, tagged with its room index.
pub fn room_variant_texts(world: &WorldDef) -> Vec<(usize, String)> {
    world
        .rooms
        .iter()
        .enumerate()
        .flat_map(|(i, room)| {
            room.description_variants.iter().map(move |d| {
                let text = if world.cue == CueMode::Exits {
                    format!("{d}\n{}", exits_line(room))
                } else {
                    d.clone()
                };
                (i, text)
            })
        })
        .collect()
}

/// Writes `token<TAB>v1<TAB>...<TAB>vd` for every embedding row except UNK
/// and `stopwords`. Returns the number of rows written.
pub fn export_embeddings(
    params: &NetParams,
    vocab: &Vocab,
    stopwords: &[&str],
    path: &Path,
) -> Result<usize, AgentError> {
    let lstm = params
        .repr
        .as_ref()
        .ok_or_else(|| AgentError::Config("this agent has no word embeddings".into()))?;
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    let mut rows = 0;
    for (id, token) in vocab.tokens().iter().enumerate() {
        if token == UNK_TOKEN || stopwords.contains(&token.as_str()) {
            continue;
        }
        let values: Vec<String> = lstm.embeddings.row(id).iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{token}\t{}", values.join("\t"))?;
        rows += 1;
    }
    out.flush()?;
    Ok(rows)
}

pub fn read_embeddings(path: &Path) -> io::Result<Vec<(String, Vec<f64>)>> {
    let bad = |l: &str| io::Error::new(io::ErrorKind::InvalidData, format!("bad embedding row `{l}`"));
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let mut parts = l.split('\t');
            let token = parts.next().ok_or_else(|| bad(l))?.to_owned();
            let values = parts
                .map(|v| v.parse::<f64>().map_err(|_| bad(l)))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((token, values))
        })
        .collect()
}
