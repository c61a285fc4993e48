//! Case studies: fixed-seed episode batches for an agent, aggregated into
//! mean/std reports, compared across agents, plus action histograms.

pub mod histogram;
pub mod metrics;
pub mod report;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use histogram::{record_action_distribution, ActionHistogram};
pub use metrics::{higher_is_better, EpisodeAccumulator, EpisodeMetrics, METRIC_NAMES};
pub use report::{compare_agents, write_episode_csv, CaseStudyReport, Comparison, MetricSummary};

use crate::agents::Agent;
use crate::config::ScenarioConfig;
use crate::env::{write_trace_jsonl, TraceRecord, VertiportEnv};
use crate::error::{Error, Result};

/// Plays one full episode. Returns the metrics and, if `keep_trace`, every
/// per-tick record.
pub fn run_episode(
    env: &mut VertiportEnv,
    agent: &mut dyn Agent,
    seed: u64,
    keep_trace: bool,
) -> Result<(EpisodeMetrics, Vec<TraceRecord>)> {
    env.reset(seed)?;
    agent.reset(seed);
    let noise = env.config().uncertainty.enabled;
    let mut acc = EpisodeAccumulator::default();
    let mut trace = Vec::new();
    while !env.is_done() {
        let action = agent.act(env)?;
        let step = env.world().clock.step;
        let out = env.step(action).map_err(|e| {
            Error::Contract(format!("agent `{}` at step {step}, episode seed {seed}: {e}", agent.name()))
        })?;
        for r in &out.records {
            acc.observe(r);
        }
        if keep_trace {
            trace.extend(out.records);
        }
    }
    Ok((acc.finish(seed, noise), trace))
}

/// Settings for a batch of evaluation episodes. Episode `k` uses seed
/// `seed_base + k`.
#[derive(Debug, Clone)]
pub struct CaseStudy {
    pub n_episodes: usize,
    pub seed_base: u64,
    pub noise: bool,
    /// Episodes run concurrently; results do not depend on this.
    pub workers: usize,
    /// Write each episode's trace as `<agent>_<clean|noisy>_ep<k>.jsonl` here.
    pub trace_dir: Option<PathBuf>,
}

impl Default for CaseStudy {
    fn default() -> Self {
        Self {
            n_episodes: 50,
            seed_base: 0,
            noise: false,
            workers: 1,
            trace_dir: None,
        }
    }
}

impl CaseStudy {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_episodes as u64).map(|k| self.seed_base + k).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CaseStudyRun {
    pub report: CaseStudyReport,
    pub episodes: Vec<EpisodeMetrics>,
    /// Per-episode action counts, indexed by action id.
    pub action_counts: Vec<Vec<u64>>,
    pub action_names: Vec<String>,
}

impl CaseStudyRun {
    /// Action histogram over the first `n` episodes.
    pub fn histogram(&self, n: usize) -> Result<ActionHistogram> {
        ActionHistogram::from_counts(&self.action_names, &self.action_counts, n)
    }
}

fn trace_path(dir: &Path, agent: &str, noise: bool, k: usize) -> PathBuf {
    let case = if noise { "noisy" } else { "clean" };
    dir.join(format!("{agent}_{case}_ep{k:03}.jsonl"))
}

/// Runs `study.n_episodes` episodes of a fresh agent from `make_agent` each,
/// with uncertainty switched on iff `study.noise`.
pub fn run_case_study<F>(cfg: &ScenarioConfig, study: &CaseStudy, make_agent: F) -> Result<CaseStudyRun>
where
    F: Fn() -> Result<Box<dyn Agent>> + Sync,
{
    if study.n_episodes == 0 {
        return Err(Error::config("episodes", "must be >= 1"));
    }
    let mut cfg = cfg.clone();
    cfg.uncertainty.enabled = study.noise;
    cfg.validate()?;
    if let Some(dir) = &study.trace_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = make_agent()?.name().to_string();
    let seeds = study.seeds();

    let episode = |k: usize| -> Result<(EpisodeMetrics, Vec<u64>)> {
        let mut env = VertiportEnv::new(cfg.clone())?;
        let mut agent = make_agent()?;
        let keep = study.trace_dir.is_some();
        let (metrics, trace) = run_episode(&mut env, agent.as_mut(), seeds[k], true)?;
        let mut counts = vec![0u64; env.n_actions()];
        for a in trace.iter().filter_map(|r| r.action) {
            counts[a.0] += 1;
        }
        if keep {
            let path = trace_path(study.trace_dir.as_deref().expect("checked"), &name, study.noise, k);
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_trace_jsonl(&trace, &mut BufWriter::new(file))?;
        }
        Ok((metrics, counts))
    };
    let results: Vec<Result<(EpisodeMetrics, Vec<u64>)>> = if study.workers <= 1 {
        (0..study.n_episodes).map(episode).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(study.workers)
            .build()
            .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
        pool.install(|| (0..study.n_episodes).into_par_iter().map(episode).collect())
    };
    let mut episodes = Vec::with_capacity(study.n_episodes);
    let mut action_counts = Vec::with_capacity(study.n_episodes);
    for r in results {
        let (m, c) = r?;
        episodes.push(m);
        action_counts.push(c);
    }
    let report = CaseStudyReport::from_episodes(&name, study.noise, &cfg.config_hash(), &episodes)?;
    let action_names = VertiportEnv::new(cfg)?.action_space().names().to_vec();
    Ok(CaseStudyRun {
        report,
        episodes,
        action_counts,
        action_names,
    })
}
