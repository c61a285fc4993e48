//! Central finite-difference checks of tape gradients.
//!
//! Entries whose perturbation crosses a piecewise boundary (an RReLU sign
//! change, a clamp edge, a min branch) are skipped: on a kink the finite
//! difference averages two different slopes and says nothing about either.

use rand::{Rng as _, SeedableRng};

use super::matrix::Matrix;
use super::params::ParamStore;
use super::tape::{Fault, Tape, Var};
use super::{gcn_layer_forward, linear, normalize_adjacency};
use crate::error::{Error, Result};
use crate::seed::{indexed_seed, Rng};

#[derive(Debug, Clone, Copy)]
pub struct GradcheckOptions {
    pub step: f64,
    /// Check at most this many entries per tensor (chosen at random); `None` checks all.
    pub max_entries_per_tensor: Option<usize>,
    /// Denominator floor for the relative error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_entries_per_tensor: None,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// `(tensor, flat index)` of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub skipped_kinks: usize,
}

impl GradcheckReport {
    pub fn merge(&mut self, other: GradcheckReport) {
        if other.max_rel_error > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
            if other.worst.is_some() {
                self.worst = other.worst;
            }
        }
        self.checked += other.checked;
        self.skipped_kinks += other.skipped_kinks;
    }
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares tape gradients of the scalar built by `build` against central
/// differences over the entries of every parameter in `store`.
pub fn check_gradients<F>(store: &mut ParamStore, build: F, opts: &GradcheckOptions) -> Result<GradcheckReport>
where
    F: Fn(&ParamStore) -> Result<(Tape, Var)>,
{
    let (tape, loss) = build(store)?;
    let base_sig = tape.kink_signature();
    let mut grads = store.new_grad_buffer();
    tape.accumulate_gradients(loss, &mut grads, 1.0)?;

    let mut rng = Rng::seed_from_u64(opts.seed);
    let mut report = GradcheckReport::default();
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let len = store.value(id).data().len();
        let mut entries: Vec<usize> = (0..len).collect();
        if let Some(k) = opts.max_entries_per_tensor {
            if k < len {
                for i in 0..k {
                    let j = rng.gen_range(i..len);
                    entries.swap(i, j);
                }
                entries.truncate(k);
            }
        }
        for k in entries {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + opts.step;
            let (tp, lp) = build(store)?;
            store.value_mut(id).data_mut()[k] = orig - opts.step;
            let (tm, lm) = build(store)?;
            store.value_mut(id).data_mut()[k] = orig;
            if tp.kink_signature() != base_sig || tm.kink_signature() != base_sig {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (tp.value(lp).item() - tm.value(lm).item()) / (2.0 * opts.step);
            let analytic = grads.get(id).data()[k];
            if !numeric.is_finite() || !analytic.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient check of `{}`[{k}]", store.name(id)),
                });
            }
            let err = relative_error(analytic, numeric, opts.floor);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((store.name(id).to_string(), k));
            }
        }
    }
    Ok(report)
}

/// A randomly sized two-layer GCN encoder, mean pooling, an MLP, masked
/// log-softmax and a value head, combined into a clipped-surrogate style loss.
/// Exercises every tape operation.
pub fn random_network_check(seed: u64, fault: Option<Fault>, training: bool) -> Result<GradcheckReport> {
    let mut rng = Rng::seed_from_u64(seed);
    let nodes = rng.gen_range(2..=6);
    let feats = rng.gen_range(2..=5);
    let hidden = rng.gen_range(3..=6);
    let n_actions = rng.gen_range(3..=7);
    let rand_mat = |rng: &mut Rng, r: usize, c: usize| {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };

    let mut adj = Matrix::zeros(nodes, nodes);
    for i in 0..nodes {
        for j in 0..i {
            if rng.gen_bool(0.6) {
                adj[(i, j)] = 1.0;
                adj[(j, i)] = 1.0;
            }
        }
    }
    let a_norm = normalize_adjacency(&adj)?;
    let x = rand_mat(&mut rng, nodes, feats)?;
    let selected = rng.gen_range(0..nodes);
    let mut mask: Vec<bool> = (0..n_actions).map(|_| rng.gen_bool(0.6)).collect();
    let action = rng.gen_range(0..n_actions);
    mask[action] = true;
    let advantage = rng.gen_range(-2.0..2.0);
    let old_logp = -rng.gen_range(0.5..2.0);
    let target = rng.gen_range(-1.0..1.0);
    let slope_seed = rng.gen();

    let mut store = ParamStore::new();
    let g1w = store.insert_glorot("gcn1.w", feats, hidden, &mut rng)?;
    let g1b = store.insert("gcn1.b", rand_mat(&mut rng, 1, hidden)?)?;
    let g2w = store.insert_glorot("gcn2.w", hidden, hidden, &mut rng)?;
    let g2b = store.insert("gcn2.b", rand_mat(&mut rng, 1, hidden)?)?;
    let f_w = store.insert_glorot("fuse.w", 2 * hidden, hidden, &mut rng)?;
    let f_b = store.insert("fuse.b", rand_mat(&mut rng, 1, hidden)?)?;
    let p_w = store.insert_glorot("policy.w", hidden, n_actions, &mut rng)?;
    let p_b = store.insert("policy.b", rand_mat(&mut rng, 1, n_actions)?)?;
    let v_w = store.insert_glorot("value.w", hidden, 1, &mut rng)?;
    let v_b = store.insert("value.b", rand_mat(&mut rng, 1, 1)?)?;

    let build = |s: &ParamStore| -> Result<(Tape, Var)> {
        let mut t = if training {
            Tape::training(Rng::seed_from_u64(slope_seed))
        } else {
            Tape::new()
        };
        if let Some(f) = fault {
            t.inject_fault(f);
        }
        let xv = t.constant(x.clone());
        let av = t.constant(a_norm.clone());
        let (w1, b1, w2, b2) = (t.param(s, g1w), t.param(s, g1b), t.param(s, g2w), t.param(s, g2b));
        let h1 = gcn_layer_forward(&mut t, xv, av, w1, b1)?;
        let h2 = gcn_layer_forward(&mut t, h1, av, w2, b2)?;
        let pooled = t.mean_rows(h2);
        let sel = t.select_row(h2, selected)?;
        let cat = t.concat_cols(&[pooled, sel])?;
        let (fw, fb) = (t.param(s, f_w), t.param(s, f_b));
        let z = linear(&mut t, cat, fw, fb)?;
        let z = t.rrelu(z);
        let (pw, pb) = (t.param(s, p_w), t.param(s, p_b));
        let logits = linear(&mut t, z, pw, pb)?;
        let logp = t.masked_log_softmax(logits, &mask)?;
        let lp = t.pick(logp, 0, action)?;
        let old = t.constant(Matrix::scalar(old_logp));
        let diff = t.sub(lp, old)?;
        let ratio = t.exp(diff);
        let adv = t.constant(Matrix::scalar(advantage));
        let unclipped = t.mul(ratio, adv)?;
        let clipped = t.clamp(ratio, 0.8, 1.2);
        let clipped = t.mul(clipped, adv)?;
        let surr = t.minimum(unclipped, clipped)?;
        let ent = t.entropy(logp);
        let (vw, vb) = (t.param(s, v_w), t.param(s, v_b));
        let value = linear(&mut t, z, vw, vb)?;
        let tgt = t.constant(Matrix::scalar(target));
        let verr = t.sub(value, tgt)?;
        let vsq = t.square(verr);
        let vloss = t.sum(vsq);
        let neg_surr = t.scale(surr, -1.0);
        let vterm = t.scale(vloss, 0.5);
        let eterm = t.scale(ent, -0.01);
        let l = t.add(neg_surr, vterm)?;
        let l = t.add(l, eterm)?;
        Ok((t, l))
    };
    check_gradients(&mut store, build, &GradcheckOptions { seed, ..Default::default() })
}

/// Runs [`random_network_check`] for `n_seeds` derived seeds, alternating
/// evaluation and training RReLU modes, and merges the reports.
pub fn run_suite(root_seed: u64, n_seeds: u64, fault: Option<Fault>) -> Result<GradcheckReport> {
    let mut total = GradcheckReport::default();
    for i in 0..n_seeds {
        total.merge(random_network_check(indexed_seed(root_seed, i), fault, i % 2 == 1)?);
    }
    Ok(total)
}
