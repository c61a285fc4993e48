//! Graph-convolutional actor-critic.
//!
//! Two GCN encoders (eVTOL graph, port graph) feed a fusion MLP over
//! `[mean eVTOL embedding | mean port embedding | selected eVTOL embedding]`.
//! A policy head ends in a masked log-softmax; a value head outputs a scalar.

use rand::Rng as _;

use crate::config::NetworkConfig;
use crate::env::{ActionId, Observation, EVTOL_FEATURES, PORT_FEATURES};
use crate::error::{Error, Result};
use crate::nn::{gcn_layer_forward, linear, normalize_adjacency, Matrix, ParamId, ParamStore, Tape, Var};
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
pub struct GrlPolicy {
    params: ParamStore,
    evtol_gcn: Vec<Dense>,
    port_gcn: Vec<Dense>,
    fusion: Vec<Dense>,
    policy_head: Vec<Dense>,
    value_head: Vec<Dense>,
    n_actions: usize,
}

/// Output of one forward pass recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct PolicyOutput {
    /// `1 x n_actions` masked log-probabilities.
    pub log_probs: Var,
    /// `1 x 1` state value.
    pub value: Var,
}

fn stack(
    params: &mut ParamStore,
    prefix: &str,
    widths: &[usize],
    rng: &mut Rng,
) -> Result<Vec<Dense>> {
    widths
        .windows(2)
        .enumerate()
        .map(|(i, io)| {
            let w = params.insert_glorot(format!("{prefix}.{i}.w"), io[0], io[1], rng)?;
            let b = params.insert(format!("{prefix}.{i}.b"), Matrix::zeros(1, io[1]))?;
            Ok(Dense { w, b })
        })
        .collect()
}

impl GrlPolicy {
    pub fn new(net: &NetworkConfig, n_actions: usize, rng: &mut Rng) -> Result<Self> {
        Self::with_features(net, EVTOL_FEATURES, PORT_FEATURES, n_actions, rng)
    }

    pub fn with_features(
        net: &NetworkConfig,
        evtol_features: usize,
        port_features: usize,
        n_actions: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        net.validate()?;
        if n_actions == 0 {
            return Err(Error::config("n_actions", "must be >= 1"));
        }
        let mut params = ParamStore::new();
        let gcn = |f: usize| -> Vec<usize> {
            std::iter::once(f).chain(std::iter::repeat_n(net.gcn_hidden, net.gcn_layers)).collect()
        };
        let evtol_gcn = stack(&mut params, "evtol_gcn", &gcn(evtol_features), rng)?;
        let port_gcn = stack(&mut params, "port_gcn", &gcn(port_features), rng)?;
        let fusion_widths: Vec<usize> = std::iter::once(3 * net.gcn_hidden).chain(net.fusion_hidden.iter().copied()).collect();
        let fusion = stack(&mut params, "fusion", &fusion_widths, rng)?;
        let embed = *fusion_widths.last().expect("non-empty");
        let policy_widths: Vec<usize> = std::iter::once(embed)
            .chain(net.policy_hidden.iter().copied())
            .chain(std::iter::once(n_actions))
            .collect();
        let policy_head = stack(&mut params, "policy", &policy_widths, rng)?;
        let value_widths: Vec<usize> = std::iter::once(embed)
            .chain(net.value_hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let value_head = stack(&mut params, "value", &value_widths, rng)?;
        Ok(Self {
            params,
            evtol_gcn,
            port_gcn,
            fusion,
            policy_head,
            value_head,
            n_actions,
        })
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn mlp(&self, tape: &mut Tape, mut x: Var, layers: &[Dense], activate_last: bool) -> Result<Var> {
        for (i, l) in layers.iter().enumerate() {
            let (w, b) = (tape.param(&self.params, l.w), tape.param(&self.params, l.b));
            x = linear(tape, x, w, b)?;
            if activate_last || i + 1 < layers.len() {
                x = tape.rrelu(x);
            }
        }
        Ok(x)
    }

    fn encode(&self, tape: &mut Tape, features: &Matrix, adjacency: &Matrix, layers: &[Dense]) -> Result<Var> {
        let a = tape.constant(normalize_adjacency(adjacency)?);
        let mut h = tape.constant(features.clone());
        for l in layers {
            let (w, b) = (tape.param(&self.params, l.w), tape.param(&self.params, l.b));
            h = gcn_layer_forward(tape, h, a, w, b)?;
        }
        Ok(h)
    }

    /// Records the forward pass for `obs` on `tape`.
    pub fn forward(&self, tape: &mut Tape, obs: &Observation, mask: &[bool]) -> Result<PolicyOutput> {
        if mask.len() != self.n_actions {
            return Err(Error::Shape(format!("mask has {} entries, policy has {} actions", mask.len(), self.n_actions)));
        }
        if obs.selected >= obs.evtol_nodes.rows() {
            return Err(Error::Shape(format!("selected eVTOL {} of {}", obs.selected, obs.evtol_nodes.rows())));
        }
        let he = self.encode(tape, &obs.evtol_nodes, &obs.evtol_adjacency, &self.evtol_gcn)?;
        let hp = self.encode(tape, &obs.port_nodes, &obs.port_adjacency, &self.port_gcn)?;
        let pooled_e = tape.mean_rows(he);
        let pooled_p = tape.mean_rows(hp);
        let sel = tape.select_row(he, obs.selected)?;
        let fused = tape.concat_cols(&[pooled_e, pooled_p, sel])?;
        let z = self.mlp(tape, fused, &self.fusion, true)?;
        let logits = self.mlp(tape, z, &self.policy_head, false)?;
        let log_probs = tape.masked_log_softmax(logits, mask)?;
        let value = self.mlp(tape, z, &self.value_head, false)?;
        Ok(PolicyOutput { log_probs, value })
    }

    /// Evaluation-mode forward: `(log_probs, value)`.
    pub fn evaluate(&self, obs: &Observation, mask: &[bool]) -> Result<(Vec<f64>, f64)> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, obs, mask)?;
        Ok((tape.value(out.log_probs).data().to_vec(), tape.value(out.value).item()))
    }
}

/// Categorical draw over unmasked actions from log-probabilities.
pub fn sample_action(log_probs: &[f64], mask: &[bool], rng: &mut Rng) -> Result<ActionId> {
    if !mask.iter().any(|&m| m) {
        return Err(Error::Contract("no unmasked action to sample".into()));
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for (i, (&lp, &m)) in log_probs.iter().zip(mask).enumerate() {
        if !m {
            continue;
        }
        acc += lp.exp();
        last = Some(i);
        if u < acc {
            return Ok(ActionId(i));
        }
    }
    // Rounding left the cumulative sum just below u.
    Ok(ActionId(last.expect("mask is non-empty")))
}

/// Highest-probability unmasked action; ties go to the lower id.
pub fn greedy_action(log_probs: &[f64], mask: &[bool]) -> Result<ActionId> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&lp, &m)) in log_probs.iter().zip(mask).enumerate() {
        if m && best.is_none_or(|(_, b)| lp > b) {
            best = Some((i, lp));
        }
    }
    best.map(|(i, _)| ActionId(i))
        .ok_or_else(|| Error::Contract("no unmasked action to choose".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::env::VertiportEnv;
    use rand::SeedableRng;

    fn policy(seed: u64) -> GrlPolicy {
        GrlPolicy::new(&NetworkConfig::default(), 14, &mut Rng::seed_from_u64(seed)).unwrap()
    }

    fn random_obs(seed: u64) -> (Observation, Vec<bool>) {
        let mut env = VertiportEnv::new(ScenarioConfig::default()).unwrap();
        env.reset(seed).unwrap();
        let mut rng = Rng::seed_from_u64(seed);
        for _ in 0..rng.gen_range(0..200) {
            let mask = env.action_mask();
            let ok: Vec<usize> = (0..14).filter(|&a| mask[a]).collect();
            env.step(ActionId(ok[rng.gen_range(0..ok.len())])).unwrap();
        }
        (env.observation(), env.action_mask())
    }

    #[test]
    fn architecture_sizes() {
        let p = policy(0);
        let shape = |n: &str| p.params().value(p.params().id(n).unwrap()).shape();
        assert_eq!(shape("evtol_gcn.0.w"), (EVTOL_FEATURES, 64));
        assert_eq!(shape("evtol_gcn.1.w"), (64, 64));
        assert_eq!(shape("port_gcn.0.w"), (PORT_FEATURES, 64));
        assert_eq!(shape("fusion.0.w"), (192, 128));
        assert_eq!(shape("fusion.1.w"), (128, 64));
        assert_eq!(shape("policy.0.w"), (64, 64));
        assert_eq!(shape("policy.1.w"), (64, 32));
        assert_eq!(shape("policy.2.w"), (32, 32));
        assert_eq!(shape("policy.3.w"), (32, 14));
        assert_eq!(shape("value.0.w"), (64, 32));
        assert_eq!(shape("value.1.w"), (32, 1));
    }

    #[test]
    fn normalized_over_unmasked() {
        let p = policy(1);
        for seed in 0..10 {
            let (obs, mask) = random_obs(seed);
            let (lp, v) = p.evaluate(&obs, &mask).unwrap();
            assert_eq!(lp.len(), 14);
            assert!(v.is_finite());
            let s: f64 = lp.iter().zip(&mask).filter(|(_, &m)| m).map(|(l, _)| l.exp()).sum();
            assert!((s - 1.0).abs() < 1e-10);
            assert!(lp.iter().zip(&mask).all(|(l, &m)| m || *l == f64::NEG_INFINITY));
        }
    }

    #[test]
    fn single_action_has_log_prob_zero() {
        let p = policy(2);
        let (obs, _) = random_obs(3);
        let mut mask = vec![false; 14];
        mask[0] = true;
        let (lp, _) = p.evaluate(&obs, &mask).unwrap();
        assert_eq!(lp[0], 0.0);
    }

    #[test]
    fn permuting_non_selected_nodes() {
        let p = policy(4);
        let (mut obs, mask) = random_obs(8);
        obs.selected = 0;
        let (lp, v) = p.evaluate(&obs, &mask).unwrap();
        let mut swapped = obs.clone();
        let (r2, r3) = (obs.evtol_nodes.row(2).to_vec(), obs.evtol_nodes.row(3).to_vec());
        for j in 0..EVTOL_FEATURES {
            swapped.evtol_nodes[(2, j)] = r3[j];
            swapped.evtol_nodes[(3, j)] = r2[j];
        }
        let (lp2, v2) = p.evaluate(&swapped, &mask).unwrap();
        for (a, b) in lp.iter().zip(&lp2) {
            assert!(a == b || (a - b).abs() < 1e-8);
        }
        assert!((v - v2).abs() < 1e-8);
    }

    #[test]
    fn dimension_mismatch() {
        let p = policy(5);
        let (obs, _) = random_obs(1);
        assert!(p.evaluate(&obs, &[true; 13]).is_err());
        let mut bad = obs.clone();
        bad.evtol_nodes = Matrix::zeros(4, EVTOL_FEATURES + 1);
        assert!(p.evaluate(&bad, &[true; 14]).is_err());
    }

    #[test]
    fn sampling_frequencies() {
        let lp = [0.5f64.ln(), 0.5f64.ln(), f64::NEG_INFINITY];
        let mask = [true, true, false];
        let mut rng = Rng::seed_from_u64(0);
        let n = 100_000;
        let zeros = (0..n).filter(|_| sample_action(&lp, &mask, &mut rng).unwrap() == ActionId(0)).count();
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 0.01);
        let only = [true, false, false];
        assert!((0..100).all(|_| sample_action(&[0.0, -1.0, -1.0], &only, &mut rng).unwrap() == ActionId(0)));
        assert!(sample_action(&lp, &[false; 3], &mut rng).is_err());
        let mut a = Rng::seed_from_u64(9);
        let mut b = Rng::seed_from_u64(9);
        assert_eq!(sample_action(&lp, &mask, &mut a).unwrap(), sample_action(&lp, &mask, &mut b).unwrap());
        assert_eq!(greedy_action(&[-2.0, -0.1, -0.05], &[true, true, false]).unwrap(), ActionId(1));
    }
}
