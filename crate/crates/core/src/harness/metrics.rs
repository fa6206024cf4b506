use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// (1/|V|) times the sum over steps and intersections of r_v.
    pub reward: f64,
    pub att: Option<f64>,
    pub aql: f64,
    pub tp: usize,
    pub epsilon: f64,
    /// Mean training loss over the episode's learning steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    /// Raw r_v per step, when recording is enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_rewards: Option<Vec<Vec<f64>>>,
}

/// (1/|V|) * sum_t sum_v r_v^t.
pub fn episode_reward(step_rewards: &[Vec<f64>], intersections: usize) -> f64 {
    let total: f64 = step_rewards.iter().map(|r| r.iter().sum::<f64>()).sum();
    total / intersections.max(1) as f64
}

pub fn emit_metrics(path: impl AsRef<Path>, records: &[EpisodeRecord]) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let io = |source| HarnessError::io(path, source);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        append_record(&mut out, r).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub(crate) fn append_record(out: &mut impl Write, r: &EpisodeRecord) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, r)?;
    out.write_all(b"\n")
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|source| HarnessError::Json {
            path: format!("{}:{}", path.display(), i + 1),
            source,
        })?;
        records.push(r);
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// Population standard deviation; `None` for an empty sample.
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            n: xs.len(),
        })
    }
}
