//! Rollout storage, generalized advantage estimation and the clipped-surrogate update.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rayon::prelude::*;

use super::policy::GrlPolicy;
use crate::config::PpoConfig;
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::nn::gradcheck::{check_gradients, GradcheckOptions, GradcheckReport};
use crate::nn::{AdamState, Fault, GradBuffer, Matrix, Tape};
use crate::seed::{child_seed, indexed_seed, Rng};

/// Samples per gradient task. Fixed so the reduction order, and therefore the
/// floating-point result, does not depend on the thread count.
const GRAD_CHUNK: usize = 32;

#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Observation,
    pub mask: Vec<bool>,
    pub action: usize,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    /// The episode ended with this transition.
    pub done: bool,
}

/// Contiguous run of transitions from one environment, with the value used
/// to bootstrap past its last step.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    start: usize,
    end: usize,
    last_value: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub steps: Vec<Transition>,
    segments: Vec<Segment>,
    open_from: usize,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        self.steps.push(t);
    }

    /// Closes the transitions pushed since the last call as one environment's
    /// segment. `last_value` bootstraps the final step unless it ended an episode.
    pub fn end_segment(&mut self, last_value: f64) {
        self.segments.push(Segment {
            start: self.open_from,
            end: self.steps.len(),
            last_value,
        });
        self.open_from = self.steps.len();
    }

    /// Fills `advantages` (normalized to mean 0, std 1) and `returns`.
    pub fn compute_advantages(&mut self, discount: f64, gae_lambda: f64) {
        if self.open_from < self.steps.len() {
            self.end_segment(0.0);
        }
        self.advantages = vec![0.0; self.steps.len()];
        self.returns = vec![0.0; self.steps.len()];
        for seg in &self.segments {
            let s = &self.steps[seg.start..seg.end];
            let rewards: Vec<f64> = s.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = s.iter().map(|t| t.value).collect();
            let dones: Vec<bool> = s.iter().map(|t| t.done).collect();
            let (adv, ret) = compute_gae(&rewards, &values, &dones, seg.last_value, discount, gae_lambda);
            self.advantages[seg.start..seg.end].copy_from_slice(&adv);
            self.returns[seg.start..seg.end].copy_from_slice(&ret);
        }
        normalize(&mut self.advantages);
    }
}

/// Generalized advantage estimation over one trajectory segment. Values past
/// a `done` step are treated as 0.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    discount: f64,
    gae_lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + discount * next_value * live - values[t];
        gae = delta + discount * gae_lambda * live * gae;
        adv[t] = gae;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// In-place standardization; a constant vector becomes all zeros.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for x in xs.iter_mut() {
        *x = (*x - mean) / (std + 1e-8);
    }
}

/// Means over every minibatch of an update.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct SampleStats {
    policy_loss: f64,
    value_loss: f64,
    entropy: f64,
    clipped: f64,
    approx_kl: f64,
}

impl SampleStats {
    fn add(&mut self, o: &SampleStats) {
        self.policy_loss += o.policy_loss;
        self.value_loss += o.value_loss;
        self.entropy += o.entropy;
        self.clipped += o.clipped;
        self.approx_kl += o.approx_kl;
    }
}

/// Records the per-sample PPO loss, scaled by `weight`, and returns the loss
/// node with unweighted statistics.
fn sample_loss(
    policy: &GrlPolicy,
    tape: &mut Tape,
    t: &Transition,
    advantage: f64,
    ret: f64,
    cfg: &PpoConfig,
    weight: f64,
) -> Result<(crate::nn::Var, SampleStats)> {
    let out = policy.forward(tape, &t.obs, &t.mask)?;
    let logp = tape.pick(out.log_probs, 0, t.action)?;
    let old = tape.constant(Matrix::scalar(t.log_prob));
    let diff = tape.sub(logp, old)?;
    let ratio = tape.exp(diff);
    let adv = tape.constant(Matrix::scalar(advantage));
    let unclipped = tape.mul(ratio, adv)?;
    let clipped_ratio = tape.clamp(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio);
    let clipped = tape.mul(clipped_ratio, adv)?;
    let surrogate = tape.minimum(unclipped, clipped)?;
    let target = tape.constant(Matrix::scalar(ret));
    let verr = tape.sub(out.value, target)?;
    let vsq = tape.square(verr);
    let entropy = tape.entropy(out.log_probs);

    let p_term = tape.scale(surrogate, -weight);
    let v_term = tape.scale(vsq, cfg.value_coef * weight);
    let e_term = tape.scale(entropy, -cfg.entropy_coef * weight);
    let loss = tape.add(p_term, v_term)?;
    let loss = tape.add(loss, e_term)?;

    let r = tape.value(ratio).item();
    let log_ratio = tape.value(diff).item();
    let stats = SampleStats {
        policy_loss: -tape.value(surrogate).item(),
        value_loss: tape.value(vsq).item(),
        entropy: tape.value(entropy).item(),
        clipped: f64::from(u8::from((r - 1.0).abs() > cfg.clip_ratio)),
        approx_kl: (r - 1.0) - log_ratio,
    };
    Ok((loss, stats))
}

/// Loss and gradient of one minibatch, reduced in fixed-size chunks.
fn minibatch_gradient(
    policy: &GrlPolicy,
    buffer: &RolloutBuffer,
    indices: &[usize],
    cfg: &PpoConfig,
    slope_seed: u64,
) -> Result<(GradBuffer, SampleStats, f64)> {
    let weight = 1.0 / indices.len() as f64;
    let chunks: Vec<Result<(GradBuffer, SampleStats, f64)>> = indices
        .par_chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grads = policy.params().new_grad_buffer();
            let mut stats = SampleStats::default();
            let mut loss_sum = 0.0;
            for (k, &i) in chunk.iter().enumerate() {
                let rng = Rng::seed_from_u64(indexed_seed(slope_seed, (c * GRAD_CHUNK + k) as u64));
                let mut tape = Tape::training(rng);
                let (loss, s) = sample_loss(policy, &mut tape, &buffer.steps[i], buffer.advantages[i], buffer.returns[i], cfg, weight)?;
                loss_sum += tape.value(loss).item();
                tape.accumulate_gradients(loss, &mut grads, 1.0)?;
                stats.add(&s);
            }
            Ok((grads, stats, loss_sum))
        })
        .collect();
    let mut total = policy.params().new_grad_buffer();
    let mut stats = SampleStats::default();
    let mut loss = 0.0;
    for chunk in chunks {
        let (g, s, l) = chunk?;
        total.add(&g);
        stats.add(&s);
        loss += l;
    }
    Ok((total, stats, loss))
}

/// Runs `epochs_per_update` passes of shuffled minibatch Adam steps over the
/// buffer. On a non-finite loss or gradient, parameters and optimizer state
/// are restored and the offending minibatch is reported.
pub fn ppo_update(
    policy: &mut GrlPolicy,
    adam: &mut AdamState,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    seed: u64,
) -> Result<UpdateStats> {
    if buffer.advantages.len() != buffer.len() || buffer.returns.len() != buffer.len() {
        return Err(Error::Contract("advantages not computed for this buffer".into()));
    }
    if buffer.is_empty() {
        return Ok(UpdateStats::default());
    }
    let snapshot = (policy.params().clone(), adam.clone());
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut totals = SampleStats::default();
    let mut samples = 0usize;
    let mut minibatch = 0usize;
    for epoch in 0..cfg.epochs_per_update {
        let epoch_seed = indexed_seed(seed, epoch as u64);
        let mut shuffle_rng = Rng::seed_from_u64(epoch_seed);
        order.shuffle(&mut shuffle_rng);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let slope_seed = indexed_seed(epoch_seed ^ 0x5eed, b as u64);
            let result = minibatch_gradient(policy, buffer, batch, cfg, slope_seed).and_then(|(g, s, l)| {
                if !l.is_finite() || !g.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("PPO minibatch {minibatch} (epoch {epoch}, batch {b})"),
                    });
                }
                Ok((g, s))
            });
            let (grads, stats) = match result {
                Ok(v) => v,
                Err(e) => {
                    *policy.params_mut() = snapshot.0;
                    *adam = snapshot.1;
                    return Err(e);
                }
            };
            policy.params_mut().set_grads(&grads)?;
            adam.step(policy.params_mut())?;
            totals.add(&stats);
            samples += batch.len();
            minibatch += 1;
        }
    }
    let n = samples as f64;
    Ok(UpdateStats {
        policy_loss: totals.policy_loss / n,
        value_loss: totals.value_loss / n,
        entropy: totals.entropy / n,
        clip_fraction: totals.clipped / n,
        approx_kl: totals.approx_kl / n,
    })
}

/// Finite-difference check of the full PPO loss of a freshly initialized
/// default-size policy over a few environment transitions, in training mode.
pub fn policy_loss_gradcheck(
    seed: u64,
    fault: Option<Fault>,
    max_entries_per_tensor: Option<usize>,
) -> Result<GradcheckReport> {
    use crate::config::ScenarioConfig;
    use crate::env::VertiportEnv;
    use rand::Rng as _;

    let cfg = ScenarioConfig::default();
    let mut rng = Rng::seed_from_u64(child_seed(seed, "gradcheck"));
    let policy = GrlPolicy::new(&cfg.network, cfg.n_actions(), &mut rng)?;
    let mut env = VertiportEnv::new(cfg.clone())?;
    env.reset(seed)?;
    let mut samples = Vec::new();
    for _ in 0..rng.gen_range(0..300) {
        let mask = env.action_mask();
        let ok: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
        env.step(crate::env::ActionId(ok[rng.gen_range(0..ok.len())]))?;
    }
    for _ in 0..3 {
        let obs = env.observation();
        let mask = env.action_mask();
        let (lp, v) = policy.evaluate(&obs, &mask)?;
        let a = super::policy::sample_action(&lp, &mask, &mut rng)?;
        // Perturb the stored log-prob so ratios land on both sides of the clip range.
        let old = lp[a.0] + rng.gen_range(-0.4..0.4);
        samples.push((
            Transition {
                obs,
                mask,
                action: a.0,
                log_prob: old,
                reward: 0.0,
                value: v,
                done: false,
            },
            rng.gen_range(-2.0..2.0),
            // Targets near the prediction keep the loss O(1); a large value
            // error would bury small gradients in finite-difference round-off.
            v + rng.gen_range(-1.0..1.0),
        ));
        env.step(a)?;
    }
    let ppo = PpoConfig::default();
    let slope_seed = child_seed(seed, "rrelu");
    let build = |store: &crate::nn::ParamStore| -> Result<(Tape, crate::nn::Var)> {
        let mut p = policy.clone();
        *p.params_mut() = store.clone();
        let mut tape = Tape::training(Rng::seed_from_u64(slope_seed));
        if let Some(f) = fault {
            tape.inject_fault(f);
        }
        let mut total = None;
        for (t, adv, ret) in &samples {
            let (l, _) = sample_loss(&p, &mut tape, t, *adv, *ret, &ppo, 1.0 / samples.len() as f64)?;
            total = Some(match total {
                None => l,
                Some(acc) => tape.add(acc, l)?,
            });
        }
        Ok((tape, total.expect("three samples")))
    };
    let opts = GradcheckOptions {
        max_entries_per_tensor,
        seed,
        ..GradcheckOptions::default()
    };
    let mut store = policy.params().clone();
    check_gradients(&mut store, build, &opts)
}
