//! Two-armed bandit used to sanity-check the PPO update in isolation from
//! the simulator. Every episode is one decision; arm 0 pays +1, arm 1 pays -1.

use std::sync::Arc;

use rand::{Rng as _, SeedableRng};

use super::policy::{sample_action, GrlPolicy};
use super::ppo::{ppo_update, RolloutBuffer, Transition};
use crate::config::{Connectivity, NetworkConfig, PpoConfig};
use crate::env::observation::adjacency;
use crate::env::{Observation, EVTOL_FEATURES, PORT_FEATURES};
use crate::error::Result;
use crate::nn::{AdamState, Matrix};
use crate::seed::{child_seed, indexed_seed, Rng};

pub const REWARDED_ARM: usize = 0;

/// PPO settings for the bandit: short rollouts and a larger step size than
/// the simulator default so convergence is visible within a few hundred updates.
pub fn bandit_ppo_config() -> PpoConfig {
    PpoConfig {
        learning_rate: 1e-4,
        n_steps: 64,
        batch_size: 32,
        epochs_per_update: 4,
        entropy_coef: 0.0,
        ..PpoConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct BanditRun {
    /// Probability of the rewarded arm before training and after each update.
    pub rewarded_prob: Vec<f64>,
}

impl BanditRun {
    /// First update index after which the rewarded arm's probability exceeds `p`.
    pub fn updates_to_reach(&self, p: f64) -> Option<usize> {
        self.rewarded_prob.iter().position(|&q| q > p)
    }
}

fn fixed_observation(rng: &mut Rng) -> Observation {
    let mut fill = |r: usize, c: usize| {
        let data = (0..r * c).map(|_| rng.gen_range(0.0..1.0)).collect();
        Matrix::from_vec(r, c, data).expect("sizes match")
    };
    Observation {
        evtol_nodes: fill(2, EVTOL_FEATURES),
        port_nodes: fill(3, PORT_FEATURES),
        evtol_adjacency: Arc::new(adjacency(2, Connectivity::Complete)),
        port_adjacency: Arc::new(adjacency(3, Connectivity::Complete)),
        selected: 0,
    }
}

/// Trains a fresh policy on the bandit for `updates` PPO updates.
pub fn run_bandit(seed: u64, updates: usize, cfg: &PpoConfig) -> Result<BanditRun> {
    let mut init = Rng::seed_from_u64(child_seed(seed, "policy-init"));
    let mut policy = GrlPolicy::new(&NetworkConfig::default(), 2, &mut init)?;
    let obs = fixed_observation(&mut Rng::seed_from_u64(child_seed(seed, "bandit-obs")));
    let mask = vec![true, true];
    let mut adam = AdamState::new(policy.params(), cfg.learning_rate);
    let mut rollout_rng = Rng::seed_from_u64(child_seed(seed, "rollout"));
    let update_root = child_seed(seed, "update");

    let prob = |p: &GrlPolicy| -> Result<f64> { Ok(p.evaluate(&obs, &mask)?.0[REWARDED_ARM].exp()) };
    let mut rewarded_prob = vec![prob(&policy)?];
    for u in 0..updates {
        let (log_probs, value) = policy.evaluate(&obs, &mask)?;
        let mut buffer = RolloutBuffer::new();
        for _ in 0..cfg.n_steps {
            let a = sample_action(&log_probs, &mask, &mut rollout_rng)?;
            buffer.push(Transition {
                obs: obs.clone(),
                mask: mask.clone(),
                action: a.0,
                log_prob: log_probs[a.0],
                reward: if a.0 == REWARDED_ARM { 1.0 } else { -1.0 },
                value,
                done: true,
            });
        }
        buffer.end_segment(0.0);
        buffer.compute_advantages(cfg.discount, cfg.gae_lambda);
        ppo_update(&mut policy, &mut adam, &buffer, cfg, indexed_seed(update_root, u as u64))?;
        rewarded_prob.push(prob(&policy)?);
    }
    Ok(BanditRun { rewarded_prob })
}
