use std::io::Write;

use crate::env::TraceRecord;
use crate::error::{Error, Result};

/// Action counts and percentages over a fixed number of episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionHistogram {
    pub names: Vec<String>,
    pub counts: Vec<u64>,
    pub episodes: usize,
}

impl ActionHistogram {
    /// Sums the first `n_episodes` rows of per-episode counts.
    pub fn from_counts(names: &[String], per_episode: &[Vec<u64>], n_episodes: usize) -> Result<Self> {
        if per_episode.len() < n_episodes {
            return Err(Error::Report(format!(
                "histogram needs {n_episodes} episodes, got {}",
                per_episode.len()
            )));
        }
        let mut counts = vec![0u64; names.len()];
        for ep in &per_episode[..n_episodes] {
            if ep.len() != names.len() {
                return Err(Error::Shape(format!("{} action counts for {} actions", ep.len(), names.len())));
            }
            for (c, e) in counts.iter_mut().zip(ep) {
                *c += e;
            }
        }
        Ok(Self {
            names: names.to_vec(),
            counts,
            episodes: n_episodes,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn percentages(&self) -> Vec<f64> {
        let total = self.total();
        self.counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 })
            .collect()
    }

    /// CSV with columns `action_id, action, count, percent`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["action_id", "action", "count", "percent"])?;
        for (i, (name, (c, p))) in self.names.iter().zip(self.counts.iter().zip(self.percentages())).enumerate() {
            w.write_record([i.to_string(), name.clone(), c.to_string(), format!("{p:.4}")])?;
        }
        w.flush().map_err(|e| Error::io("<histogram>", e))?;
        Ok(())
    }
}

/// Histogram of the actions taken in the first `n_episodes` traces.
pub fn record_action_distribution(
    traces: &[Vec<TraceRecord>],
    names: &[String],
    n_episodes: usize,
) -> Result<ActionHistogram> {
    let per_episode = traces
        .iter()
        .map(|t| {
            let mut c = vec![0u64; names.len()];
            for a in t.iter().filter_map(|r| r.action) {
                *c.get_mut(a.0)
                    .ok_or_else(|| Error::Report(format!("trace action {} outside {} actions", a.0, names.len())))? += 1;
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    ActionHistogram::from_counts(names, &per_episode, n_episodes)
}
