use rand::Rng as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Index of a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

/// Named parameters with paired gradient buffers, iterated in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    /// Shared so tapes can reference parameters without copying them.
    values: Vec<Arc<Matrix>>,
    grads: Vec<Option<Matrix>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Result<ParamId> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::Shape(format!("duplicate parameter name `{name}`")));
        }
        self.names.push(name);
        self.values.push(Arc::new(value));
        self.grads.push(None);
        Ok(ParamId(self.values.len() - 1))
    }

    /// Glorot-uniform weight matrix.
    pub fn insert_glorot(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut Rng) -> Result<ParamId> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
        self.insert(name, Matrix::from_vec(rows, cols, data)?)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub(crate) fn shared_value(&self, id: ParamId) -> Arc<Matrix> {
        Arc::clone(&self.values[id.0])
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn grad(&self, id: ParamId) -> Option<&Matrix> {
        self.grads[id.0].as_ref()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|m| m.data().len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().map(|v| &**v))
    }

    /// Sets every gradient buffer to zeros.
    pub fn zero_grad(&mut self) {
        for (g, v) in self.grads.iter_mut().zip(&self.values) {
            match g {
                Some(g) => g.fill(0.0),
                None => *g = Some(Matrix::zeros(v.rows(), v.cols())),
            }
        }
    }

    pub fn clear_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// Overwrites all gradients from a buffer.
    pub fn set_grads(&mut self, grads: &GradBuffer) -> Result<()> {
        self.check_buffer(grads)?;
        for (g, b) in self.grads.iter_mut().zip(&grads.grads) {
            *g = Some(b.clone());
        }
        Ok(())
    }

    fn check_buffer(&self, grads: &GradBuffer) -> Result<()> {
        if grads.grads.len() != self.values.len()
            || grads.grads.iter().zip(&self.values).any(|(g, v)| g.shape() != v.shape())
        {
            return Err(Error::Shape("gradient buffer does not match parameter store".into()));
        }
        Ok(())
    }

    pub fn new_grad_buffer(&self) -> GradBuffer {
        GradBuffer {
            grads: self.values.iter().map(|v| Matrix::zeros(v.rows(), v.cols())).collect(),
        }
    }

    /// Copies parameter values from `other`, which must have the same names and shapes.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for (i, name) in self.names.iter().enumerate() {
            let src = other
                .id(name)
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` missing")))?;
            let src = other.value(src);
            if src.shape() != self.values[i].shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {:?}, expected {:?}",
                    src.shape(),
                    self.values[i].shape()
                )));
            }
            self.values[i] = Arc::new(src.clone());
        }
        if other.len() != self.len() {
            let extra: Vec<&str> = other.names.iter().filter(|n| !self.names.contains(n)).map(String::as_str).collect();
            return Err(Error::Checkpoint(format!("unexpected tensors {extra:?}")));
        }
        Ok(())
    }
}

/// Gradient accumulator aligned with a [`ParamStore`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    pub(crate) grads: Vec<Matrix>,
}

impl GradBuffer {
    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn add(&mut self, other: &GradBuffer) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign_scaled(b, 1.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Matrix::is_finite)
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}
