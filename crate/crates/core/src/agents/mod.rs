//! Decision makers for [`VertiportEnv`]: the graph-convolutional PPO policy,
//! a first-come-first-served queue rule, and a uniform random baseline.

pub mod bandit;
pub mod fcfs;
pub mod policy;
pub mod ppo;
pub mod train;

use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::env::{ActionId, VertiportEnv};
use crate::error::{Error, Result};
use crate::seed::{child_seed, Rng};

pub use fcfs::FcfsAgent;
pub use policy::{greedy_action, sample_action, GrlPolicy};
pub use ppo::{compute_gae, ppo_update, RolloutBuffer, Transition, UpdateStats};
pub use train::{train, TrainOptions, TrainSummary};

/// Anything that can pick the selected eVTOL's action.
pub trait Agent: Send {
    fn name(&self) -> &str;
    /// Called before every episode with that episode's seed.
    fn reset(&mut self, seed: u64);
    /// Returns an unmasked action for `env.selected()`.
    fn act(&mut self, env: &VertiportEnv) -> Result<ActionId>;
}

/// Uniform choice over unmasked actions.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    rng: Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Rng::seed_from_u64(child_seed(seed, "random-agent")),
        }
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> &str {
        "random"
    }

    fn reset(&mut self, seed: u64) {
        self.rng = Rng::seed_from_u64(child_seed(seed, "random-agent"));
    }

    fn act(&mut self, env: &VertiportEnv) -> Result<ActionId> {
        let mask = env.action_mask();
        let allowed: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
        allowed
            .choose(&mut self.rng)
            .map(|&a| ActionId(a))
            .ok_or_else(|| Error::Contract("every action is masked".into()))
    }
}

/// Trained policy acting greedily, or sampling when `stochastic`.
#[derive(Debug, Clone)]
pub struct GrlAgent {
    policy: GrlPolicy,
    stochastic: bool,
    rng: Rng,
}

impl GrlAgent {
    pub fn new(policy: GrlPolicy) -> Self {
        Self {
            policy,
            stochastic: false,
            rng: Rng::seed_from_u64(0),
        }
    }

    pub fn stochastic(mut self, on: bool) -> Self {
        self.stochastic = on;
        self
    }

    pub fn policy(&self) -> &GrlPolicy {
        &self.policy
    }
}

impl Agent for GrlAgent {
    fn name(&self) -> &str {
        "grl"
    }

    fn reset(&mut self, seed: u64) {
        self.rng = Rng::seed_from_u64(child_seed(seed, "grl-agent"));
    }

    fn act(&mut self, env: &VertiportEnv) -> Result<ActionId> {
        let mask = env.action_mask();
        let (log_probs, _) = self.policy.evaluate(&env.observation(), &mask)?;
        if self.stochastic {
            sample_action(&log_probs, &mask, &mut self.rng)
        } else {
            greedy_action(&log_probs, &mask)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;

    #[test]
    fn random_agent_respects_mask_and_reseeds() {
        let mut env = VertiportEnv::new(ScenarioConfig::default()).unwrap();
        let mut agent = RandomAgent::new(0);
        let run = |agent: &mut RandomAgent, env: &mut VertiportEnv| {
            env.reset(5).unwrap();
            agent.reset(5);
            let mut acts = Vec::new();
            for _ in 0..300 {
                let a = agent.act(env).unwrap();
                assert!(env.action_mask()[a.0]);
                acts.push(a);
                env.step(a).unwrap();
            }
            acts
        };
        let a = run(&mut agent, &mut env);
        let b = run(&mut agent, &mut env);
        assert_eq!(a, b);
    }
}
