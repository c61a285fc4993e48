//! PPO training loop: parallel rollout workers, per-episode CSV log,
//! checkpoints after every update, and resumption from the last update.
//!
//! Files written to the output directory:
//! `config.json` (resolved config), `training_log.csv`, `checkpoint_last.json`,
//! `checkpoint_best.json` (best moving-average episode reward) and
//! `trainer_state.json` (optimizer, RNG and environment state for `--resume`).

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::policy::{sample_action, GrlPolicy};
use super::ppo::{ppo_update, RolloutBuffer, Transition, UpdateStats};
use crate::config::{PpoConfig, ScenarioConfig};
use crate::env::{EnvSnapshot, VertiportEnv};
use crate::error::{Error, Result};
use crate::eval::{EpisodeAccumulator, EpisodeMetrics};
use crate::nn::checkpoint::write_atomic;
use crate::nn::{load_into, save_checkpoint, AdamState};
use crate::seed::{child_seed, indexed_seed, Rng};

pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "training_log.csv";
pub const LAST_CHECKPOINT: &str = "checkpoint_last.json";
pub const BEST_CHECKPOINT: &str = "checkpoint_best.json";
pub const STATE_FILE: &str = "trainer_state.json";

pub const LOG_COLUMNS: [&str; 12] = [
    "episode",
    "steps",
    "total_reward",
    "policy_loss",
    "value_loss",
    "entropy",
    "clip_fraction",
    "mean_battery",
    "good_takeoffs",
    "good_landings",
    "mean_delay_hours",
    "collisions",
];

/// Short-budget PPO settings: 30k decisions split into 2048-step rollouts
/// with a step size large enough to move the policy within ~20 episodes.
pub fn smoke_ppo_config() -> PpoConfig {
    PpoConfig {
        max_timesteps: 30_000,
        learning_rate: 3e-4,
        n_steps: 2048,
        batch_size: 256,
        epochs_per_update: 4,
        ..PpoConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub out_dir: PathBuf,
    /// Rollout workers, each with its own environment. Results depend on this
    /// count but not on the number of threads.
    pub workers: usize,
    pub resume: bool,
    /// Stop after this many updates in this call, even if timesteps remain.
    pub max_updates: Option<usize>,
    /// Print one line per finished episode to stderr.
    pub verbose: bool,
}

impl TrainOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            workers: 1,
            resume: false,
            max_updates: None,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub episodes: usize,
    pub timesteps: u64,
    pub updates: usize,
    pub best_score: Option<f64>,
    pub log_path: PathBuf,
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub episode: usize,
    pub steps: u64,
    pub total_reward: f64,
    pub policy_loss: Option<f64>,
    pub value_loss: Option<f64>,
    pub entropy: Option<f64>,
    pub clip_fraction: Option<f64>,
    pub mean_battery: f64,
    pub good_takeoffs: u64,
    pub good_landings: u64,
    pub mean_delay_hours: f64,
    pub collisions: u64,
}

pub fn read_training_log(path: impl AsRef<Path>) -> Result<Vec<LogRow>> {
    let path = path.as_ref();
    let mut rows = Vec::new();
    let mut reader = csv::Reader::from_path(path)?;
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

struct Worker {
    env: VertiportEnv,
    rng: Rng,
    seed_root: u64,
    episode_index: u64,
    acc: EpisodeAccumulator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WorkerState {
    env: EnvSnapshot,
    rng: Rng,
    episode_index: u64,
    acc: EpisodeAccumulator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainerState {
    config_hash: String,
    adam: AdamState,
    workers: Vec<WorkerState>,
    timesteps: u64,
    updates: usize,
    episodes: usize,
    episode_rewards: Vec<f64>,
    best_score: Option<f64>,
    last_stats: Option<UpdateStats>,
}

struct Rollout {
    transitions: Vec<Transition>,
    last_value: f64,
    /// Finished episodes with the index of their last transition.
    finished: Vec<(EpisodeMetrics, usize)>,
}

impl Worker {
    fn episode_seed(&self) -> u64 {
        indexed_seed(self.seed_root, self.episode_index)
    }

    fn collect(&mut self, policy: &GrlPolicy, steps: usize) -> Result<Rollout> {
        let mut transitions = Vec::with_capacity(steps);
        let mut finished = Vec::new();
        for _ in 0..steps {
            let obs = self.env.observation();
            let mask = self.env.action_mask();
            let (log_probs, value) = policy.evaluate(&obs, &mask)?;
            let action = sample_action(&log_probs, &mask, &mut self.rng)?;
            let out = self.env.step(action)?;
            for r in &out.records {
                self.acc.observe(r);
            }
            transitions.push(Transition {
                obs,
                mask,
                action: action.0,
                log_prob: log_probs[action.0],
                reward: out.reward,
                value,
                done: out.done,
            });
            if out.done {
                let noise = self.env.config().uncertainty.enabled;
                finished.push((self.acc.finish(self.episode_seed(), noise), transitions.len() - 1));
                self.acc = EpisodeAccumulator::default();
                self.episode_index += 1;
                let seed = self.episode_seed();
                self.env.reset(seed)?;
            }
        }
        let last_value = match transitions.last() {
            Some(t) if !t.done => {
                let obs = self.env.observation();
                policy.evaluate(&obs, &self.env.action_mask())?.1
            }
            _ => 0.0,
        };
        Ok(Rollout {
            transitions,
            last_value,
            finished,
        })
    }

    fn state(&self) -> WorkerState {
        WorkerState {
            env: self.env.snapshot(),
            rng: self.rng.clone(),
            episode_index: self.episode_index,
            acc: self.acc.clone(),
        }
    }
}

fn write_log_rows(path: &Path, rows: &[LogRow]) -> Result<()> {
    let file = fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Keeps the header and the first `rows` data lines of the log.
fn truncate_log(path: &Path, rows: usize) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let kept: String = text.lines().take(rows + 1).map(|l| format!("{l}\n")).collect();
    if kept.lines().count() != rows + 1 {
        return Err(Error::Checkpoint(format!(
            "{} has fewer than the {rows} rows recorded in the trainer state",
            path.display()
        )));
    }
    write_atomic(path, kept.as_bytes())
}

fn moving_average(rewards: &[f64], window: usize) -> Option<f64> {
    if rewards.is_empty() {
        return None;
    }
    let tail = &rewards[rewards.len().saturating_sub(window.max(1))..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Trains a fresh (or resumed) policy on `cfg` until `cfg.ppo.max_timesteps`
/// decisions have been collected.
pub fn train(cfg: &ScenarioConfig, opts: &TrainOptions) -> Result<TrainSummary> {
    cfg.validate()?;
    if opts.workers == 0 {
        return Err(Error::config("workers", "must be >= 1"));
    }
    let dir = &opts.out_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(CONFIG_FILE), cfg.to_json_pretty().as_bytes())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    pool.install(|| train_inner(cfg, opts))
}

fn train_inner(cfg: &ScenarioConfig, opts: &TrainOptions) -> Result<TrainSummary> {
    let dir = &opts.out_dir;
    let ppo = &cfg.ppo;
    let hash = cfg.config_hash();
    let log_path = dir.join(LOG_FILE);
    let state_path = dir.join(STATE_FILE);
    let root = cfg.seed;

    let n_actions = cfg.n_actions();
    let mut init_rng = Rng::seed_from_u64(child_seed(root, "policy-init"));
    let mut policy = GrlPolicy::new(&cfg.network, n_actions, &mut init_rng)?;
    let mut workers = (0..opts.workers)
        .map(|w| -> Result<Worker> {
            let mut worker = Worker {
                env: VertiportEnv::new(cfg.clone())?,
                rng: Rng::seed_from_u64(indexed_seed(child_seed(root, "rollout"), w as u64)),
                seed_root: indexed_seed(child_seed(root, "train-episodes"), w as u64),
                episode_index: 0,
                acc: EpisodeAccumulator::default(),
            };
            let seed = worker.episode_seed();
            worker.env.reset(seed)?;
            Ok(worker)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut state = TrainerState {
        config_hash: hash.clone(),
        adam: AdamState::new(policy.params(), ppo.learning_rate),
        workers: Vec::new(),
        timesteps: 0,
        updates: 0,
        episodes: 0,
        episode_rewards: Vec::new(),
        best_score: None,
        last_stats: None,
    };

    if opts.resume && state_path.exists() {
        let text = fs::read_to_string(&state_path).map_err(|e| Error::io(&state_path, e))?;
        let saved: TrainerState = serde_json::from_str(&text)?;
        if saved.config_hash != hash {
            return Err(Error::HashMismatch {
                checkpoint: saved.config_hash,
                config: hash,
            });
        }
        if saved.workers.len() != opts.workers {
            return Err(Error::config(
                "workers",
                format!("run was started with {} workers, resume with the same count", saved.workers.len()),
            ));
        }
        load_into(policy.params_mut(), dir.join(LAST_CHECKPOINT), Some(&hash))?;
        for (w, s) in workers.iter_mut().zip(&saved.workers) {
            w.env.restore(s.env.clone())?;
            w.rng = s.rng.clone();
            w.episode_index = s.episode_index;
            w.acc = s.acc.clone();
        }
        truncate_log(&log_path, saved.episodes)?;
        state = saved;
        // The configured step size wins over the saved one.
        state.adam.learning_rate = ppo.learning_rate;
    } else {
        let mut w = csv::Writer::from_path(&log_path)?;
        w.write_record(LOG_COLUMNS)?;
        w.flush().map_err(|e| Error::io(&log_path, e))?;
    }

    let update_root = child_seed(root, "rrelu");
    let mut updates_this_call = 0;
    while state.timesteps < ppo.max_timesteps && opts.max_updates.is_none_or(|m| updates_this_call < m) {
        let budget = (ppo.max_timesteps - state.timesteps).min(ppo.n_steps as u64) as usize;
        let n_workers = workers.len();
        let quotas: Vec<usize> = (0..n_workers)
            .map(|w| budget / n_workers + usize::from(w < budget % n_workers))
            .collect();
        let snapshot = &policy;
        let rollouts = workers
            .par_iter_mut()
            .zip(quotas.par_iter())
            .map(|(w, &q)| w.collect(snapshot, q))
            .collect::<Vec<Result<Rollout>>>();

        let mut buffer = RolloutBuffer::new();
        let mut rows = Vec::new();
        for r in rollouts {
            let r = r?;
            let offset = buffer.len();
            for (m, idx) in r.finished {
                rows.push((m, state.timesteps + (offset + idx + 1) as u64));
            }
            for t in r.transitions {
                buffer.push(t);
            }
            buffer.end_segment(r.last_value);
        }
        rows.sort_by_key(|(_, steps)| *steps);
        let log_rows: Vec<LogRow> = rows
            .into_iter()
            .map(|(m, steps)| {
                state.episodes += 1;
                state.episode_rewards.push(m.total_reward);
                let s = state.last_stats;
                LogRow {
                    episode: state.episodes,
                    steps,
                    total_reward: m.total_reward,
                    policy_loss: s.map(|s| s.policy_loss),
                    value_loss: s.map(|s| s.value_loss),
                    entropy: s.map(|s| s.entropy),
                    clip_fraction: s.map(|s| s.clip_fraction),
                    mean_battery: m.mean_battery,
                    good_takeoffs: m.good_takeoffs,
                    good_landings: m.good_landings,
                    mean_delay_hours: m.mean_delay_hours,
                    collisions: m.collisions,
                }
            })
            .collect();
        if opts.verbose {
            for r in &log_rows {
                eprintln!(
                    "episode {:>4}  steps {:>8}  reward {:>10.2}  battery {:>5.1}  takeoffs {:>3}  landings {:>3}",
                    r.episode, r.steps, r.total_reward, r.mean_battery, r.good_takeoffs, r.good_landings
                );
            }
        }

        buffer.compute_advantages(ppo.discount, ppo.gae_lambda);
        let stats = ppo_update(
            &mut policy,
            &mut state.adam,
            &buffer,
            ppo,
            indexed_seed(update_root, state.updates as u64),
        )?;
        state.last_stats = Some(stats);
        state.timesteps += budget as u64;
        state.updates += 1;
        updates_this_call += 1;

        write_log_rows(&log_path, &log_rows)?;
        save_checkpoint(policy.params(), &hash, dir.join(LAST_CHECKPOINT))?;
        if let Some(score) = moving_average(&state.episode_rewards, ppo.best_window) {
            if state.best_score.is_none_or(|b| score > b) {
                state.best_score = Some(score);
                save_checkpoint(policy.params(), &hash, dir.join(BEST_CHECKPOINT))?;
            }
        }
        state.workers = workers.iter().map(Worker::state).collect();
        write_atomic(&state_path, serde_json::to_string(&state)?.as_bytes())?;
    }

    Ok(TrainSummary {
        episodes: state.episodes,
        timesteps: state.timesteps,
        updates: state.updates,
        best_score: state.best_score,
        log_path,
    })
}
