use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::metrics::{higher_is_better, EpisodeMetrics, METRIC_NAMES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    /// Population standard deviation over episodes.
    pub std: f64,
}

/// Mean and standard deviation of every metric for one agent and noise setting.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudyReport {
    pub agent: String,
    pub noise: bool,
    pub n: usize,
    pub config_hash: String,
    pub metrics: Vec<MetricSummary>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportRow {
    agent: String,
    metric: String,
    mean: f64,
    std: f64,
    n: usize,
    noise: bool,
    config_hash: String,
}

impl CaseStudyReport {
    pub fn from_episodes(agent: &str, noise: bool, config_hash: &str, episodes: &[EpisodeMetrics]) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::Report("no episodes to aggregate".into()));
        }
        let n = episodes.len() as f64;
        let metrics = METRIC_NAMES
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let xs: Vec<f64> = episodes.iter().map(|e| e.values()[i]).collect();
                let mean = xs.iter().sum::<f64>() / n;
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                MetricSummary {
                    metric: name.to_string(),
                    mean,
                    std: var.sqrt(),
                }
            })
            .collect();
        Ok(Self {
            agent: agent.to_string(),
            noise,
            n: episodes.len(),
            config_hash: config_hash.to_string(),
            metrics,
        })
    }

    pub fn get(&self, metric: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.get(metric).map(|m| m.mean)
    }

    /// Column label: the agent name, suffixed when noise was on.
    pub fn label(&self) -> String {
        if self.noise {
            format!("{}+noise", self.agent)
        } else {
            self.agent.clone()
        }
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for m in &self.metrics {
            w.serialize(ReportRow {
                agent: self.agent.clone(),
                metric: m.metric.clone(),
                mean: m.mean,
                std: m.std,
                n: self.n,
                noise: self.noise,
                config_hash: self.config_hash.clone(),
            })?;
        }
        w.flush().map_err(|e| Error::io("<report>", e))?;
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<Self> {
        let mut rows = Vec::new();
        for row in csv::Reader::from_reader(input).deserialize() {
            let row: ReportRow = row?;
            rows.push(row);
        }
        let first = rows.first().ok_or_else(|| Error::Report("report has no rows".into()))?;
        let (agent, noise, n, hash) = (first.agent.clone(), first.noise, first.n, first.config_hash.clone());
        if let Some(bad) = rows.iter().find(|r| r.agent != agent || r.noise != noise || r.n != n || r.config_hash != hash) {
            return Err(Error::Report(format!(
                "row for metric `{}` disagrees with the first row on agent/noise/n/config_hash",
                bad.metric
            )));
        }
        Ok(Self {
            agent,
            noise,
            n,
            config_hash: hash,
            metrics: rows
                .into_iter()
                .map(|r| MetricSummary {
                    metric: r.metric,
                    mean: r.mean,
                    std: r.std,
                })
                .collect(),
        })
    }
}

/// Long-format per-episode CSV: `agent, noise, episode, seed, metric, value`.
pub fn write_episode_csv(agent: &str, episodes: &[EpisodeMetrics], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["agent", "noise", "episode", "seed", "metric", "value"])?;
    for (k, e) in episodes.iter().enumerate() {
        for (name, v) in METRIC_NAMES.iter().zip(e.values()) {
            w.write_record([
                agent.to_string(),
                e.noise.to_string(),
                k.to_string(),
                e.seed.to_string(),
                name.to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<episodes>", e))?;
    Ok(())
}

/// Side-by-side means with a per-metric rank (1 = best; equal means share a rank).
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub labels: Vec<String>,
    pub config_hash: String,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub metric: String,
    pub means: Vec<f64>,
    pub ranks: Vec<usize>,
}

fn ranks(values: &[f64], higher_better: bool) -> Vec<usize> {
    values
        .iter()
        .map(|&v| {
            let better = values
                .iter()
                .filter(|&&o| if higher_better { o > v } else { o < v })
                .count();
            better + 1
        })
        .collect()
}

pub fn compare_agents(reports: &[CaseStudyReport]) -> Result<Comparison> {
    let first = reports.first().ok_or_else(|| Error::Report("nothing to compare".into()))?;
    if let Some(r) = reports.iter().find(|r| r.config_hash != first.config_hash) {
        return Err(Error::Report(format!(
            "config hash mismatch: `{}` has {}, `{}` has {}",
            first.label(),
            first.config_hash,
            r.label(),
            r.config_hash
        )));
    }
    let mut rows = Vec::new();
    for m in &first.metrics {
        let means = reports
            .iter()
            .map(|r| {
                r.mean(&m.metric)
                    .ok_or_else(|| Error::Report(format!("report `{}` lacks metric `{}`", r.label(), m.metric)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(ComparisonRow {
            ranks: ranks(&means, higher_is_better(&m.metric)),
            metric: m.metric.clone(),
            means,
        });
    }
    Ok(Comparison {
        labels: reports.iter().map(CaseStudyReport::label).collect(),
        config_hash: first.config_hash.clone(),
        rows,
    })
}

impl Comparison {
    /// One row per metric: the metric, then `<label>_mean` and `<label>_rank` per report.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["metric".to_string()];
        for l in &self.labels {
            header.push(format!("{l}_mean"));
            header.push(format!("{l}_rank"));
        }
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.metric.clone()];
            for (m, r) in row.means.iter().zip(&row.ranks) {
                rec.push(m.to_string());
                rec.push(r.to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<comparison>", e))?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut cells: Vec<Vec<String>> = vec![std::iter::once("metric".to_string()).chain(self.labels.iter().cloned()).collect()];
        for row in &self.rows {
            let mut line = vec![row.metric.clone()];
            for (m, r) in row.means.iter().zip(&row.ranks) {
                line.push(format!("{m:.3} (#{r})"));
            }
            cells.push(line);
        }
        let widths: Vec<usize> = (0..cells[0].len())
            .map(|c| cells.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &cells {
            let padded: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            out.push_str(padded.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}
