use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub const METRICS_HEADER: &str = "epoch,phase,avg_reward,quest_completion,avg_length,invalid_rate,wall_time_s";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
        })
    }
}

/// Summary of one phase of one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub phase: Phase,
    /// Mean over episodes of the summed episode reward.
    pub avg_reward: f64,
    /// Fraction of episodes that ended with the quest completed.
    pub quest_completion: f64,
    pub avg_length: f64,
    /// Invalid commands per step taken.
    pub invalid_rate: f64,
    pub wall_time_s: f64,
}

impl EpochMetrics {
    /// Same metrics with the (non-reproducible) timing zeroed.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_time_s: 0.0,
            ..self.clone()
        }
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.3}",
            self.epoch,
            self.phase,
            self.avg_reward,
            self.quest_completion,
            self.avg_length,
            self.invalid_rate,
            self.wall_time_s
        )
    }

    pub fn from_csv_row(row: &str) -> Option<Self> {
        let f: Vec<&str> = row.trim().split(',').collect();
        let [epoch, phase, reward, completion, length, invalid, wall] = f.as_slice() else {
            return None;
        };
        Some(Self {
            epoch: epoch.parse().ok()?,
            phase: match *phase {
                "train" => Phase::Train,
                "eval" => Phase::Eval,
                _ => return None,
            },
            avg_reward: reward.parse().ok()?,
            quest_completion: completion.parse().ok()?,
            avg_length: length.parse().ok()?,
            invalid_rate: invalid.parse().ok()?,
            wall_time_s: wall.parse().ok()?,
        })
    }
}

/// Append-only metrics CSV; each row is flushed as soon as it is written.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> io::Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_HEADER}")?;
        out.flush()?;
        Ok(Self { out })
    }

    pub fn append(&mut self, m: &EpochMetrics) -> io::Result<()> {
        writeln!(self.out, "{}", m.to_csv_row())?;
        self.out.flush()
    }
}

pub fn read_metrics_csv(path: &Path) -> io::Result<Vec<EpochMetrics>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "unexpected metrics header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            EpochMetrics::from_csv_row(l)
                .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("bad metrics row `{l}`")))
        })
        .collect()
}
