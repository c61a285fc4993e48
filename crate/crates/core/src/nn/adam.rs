use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Bias-corrected Adam with per-parameter moment buffers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl AdamState {
    pub fn new(params: &ParamStore, learning_rate: f64) -> Self {
        let zeros = |store: &ParamStore| -> Vec<Matrix> {
            store.ids().map(|id| {
                let (r, c) = store.value(id).shape();
                Matrix::zeros(r, c)
            }).collect()
        };
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: zeros(params),
            v: zeros(params),
        }
    }

    /// Applies one update from the gradients currently held in `params`.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        if self.m.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, store has {}",
                self.m.len(),
                params.len()
            )));
        }
        for id in params.ids() {
            let name = params.name(id).to_string();
            let grad = params
                .grad(id)
                .ok_or_else(|| Error::Contract(format!("missing gradient for `{name}`")))?;
            if grad.shape() != self.m[id.0].shape() {
                return Err(Error::Shape(format!("gradient for `{name}` has wrong shape")));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let grad = params.grad(id).expect("checked above").clone();
            let m = &mut self.m[id.0];
            let v = &mut self.v[id.0];
            let value = params.value_mut(id);
            for (((p, g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("a", Matrix::from_rows(&[vec![1.0, -2.0]]).unwrap()).unwrap();
        s.insert("b", Matrix::filled(2, 3, 0.5)).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut s = store();
        let before = s.clone();
        let mut buf = s.new_grad_buffer();
        buf.grads.iter_mut().for_each(|g| g.fill(1.0));
        s.set_grads(&buf).unwrap();
        let mut adam = AdamState::new(&s, 1e-5);
        adam.step(&mut s).unwrap();
        assert_eq!(adam.t, 1);
        for id in s.ids() {
            for (a, b) in s.value(id).data().iter().zip(before.value(id).data()) {
                assert!(((b - a) - 1e-5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut s = store();
        let before = s.clone();
        s.zero_grad();
        let mut adam = AdamState::new(&s, 1e-3);
        adam.step(&mut s).unwrap();
        for id in s.ids() {
            assert_eq!(s.value(id), before.value(id));
        }
    }

    #[test]
    fn missing_gradient_errors() {
        let mut s = store();
        let mut adam = AdamState::new(&s, 1e-3);
        assert!(matches!(adam.step(&mut s), Err(Error::Contract(m)) if m.contains("`a`")));
        assert_eq!(adam.t, 0);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut s = store();
            let mut adam = AdamState::new(&s, 1e-2);
            for k in 0..20 {
                let mut buf = s.new_grad_buffer();
                for g in &mut buf.grads {
                    for (i, v) in g.data_mut().iter_mut().enumerate() {
                        *v = ((k * 7 + i) as f64).sin();
                    }
                }
                s.set_grads(&buf).unwrap();
                adam.step(&mut s).unwrap();
            }
            s
        };
        let (a, b) = (run(), run());
        for id in a.ids() {
            let bits = |m: &Matrix| m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.value(id)), bits(b.value(id)));
        }
    }
}
