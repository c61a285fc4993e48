//! Reverse-mode differentiation over a recorded operation sequence.
//!
//! A [`Tape`] is built fresh for every forward pass. Each operation appends a
//! node holding its value; [`Tape::backward`] replays the nodes in reverse and
//! routes gradients to the parameters that were read through [`Tape::param`].

use std::sync::Arc;

use rand::Rng as _;

use super::matrix::{matmul_into, matmul_nt_acc, matmul_tn_acc, Matrix};
use super::params::{GradBuffer, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::seed::Rng;

pub const RRELU_LOWER: f64 = 0.1;
pub const RRELU_UPPER: f64 = 0.3;
/// Negative-side slope outside training.
pub const RRELU_EVAL_SLOPE: f64 = 0.5 * (RRELU_LOWER + RRELU_UPPER);

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Deliberate backward-pass bugs used to prove the gradient checker catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    FlipRreluBackward,
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Exp(Var),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
    Square(Var),
    Sum(Var),
    Pick(Var, usize, usize),
    MeanRows(Var),
    SelectRow(Var, usize),
    ConcatCols(Vec<Var>),
    Rrelu(Var, Vec<f64>),
    MaskedLogSoftmax(Var, Vec<bool>),
    Entropy(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Arc<Matrix>,
    op: Op,
}

/// Samples RReLU slopes in training mode (`Some(rng)`), or uses the fixed
/// midpoint slope otherwise. Returns the activations and per-element slopes.
pub fn rrelu(x: &Matrix, rng: Option<&mut Rng>) -> (Matrix, Vec<f64>) {
    let slopes: Vec<f64> = match rng {
        Some(rng) => x
            .data()
            .iter()
            .map(|_| rng.gen_range(RRELU_LOWER..=RRELU_UPPER))
            .collect(),
        None => vec![RRELU_EVAL_SLOPE; x.data().len()],
    };
    let mut out = x.clone();
    for (v, s) in out.data_mut().iter_mut().zip(&slopes) {
        if *v < 0.0 {
            *v *= s;
        }
    }
    (out, slopes)
}

/// Numerically stable log-softmax of a row. Entries equal to `-inf` are
/// treated as masked and stay `-inf`.
pub fn log_softmax(row: &Matrix) -> Result<Matrix> {
    let max = row.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Contract("log-softmax over an empty mask".into()));
    }
    let lse = max + row.data().iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    Ok(row.map(|v| if v == f64::NEG_INFINITY { v } else { v - lse }))
}

fn mix(hash: u64, v: u64) -> u64 {
    (hash ^ v).wrapping_mul(0x0000_0100_0000_01b3)
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    rng: Option<Rng>,
    fault: Option<Fault>,
    kinks: u64,
}

impl Tape {
    /// Tape for evaluation: RReLU uses the fixed midpoint slope.
    pub fn new() -> Self {
        Self {
            kinks: 0xcbf2_9ce4_8422_2325,
            ..Self::default()
        }
    }

    /// Tape for training: RReLU slopes are sampled from `rng` and kept for backward.
    pub fn training(rng: Rng) -> Self {
        Self {
            rng: Some(rng),
            ..Self::new()
        }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn inject_fault(&mut self, fault: Fault) {
        self.fault = Some(fault);
    }

    /// Hash of every piecewise branch taken so far (RReLU signs, clamp regions,
    /// min branches). Two passes with equal signatures are on the same smooth piece.
    pub fn kink_signature(&self) -> u64 {
        self.kinks
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value: Arc::new(value), op });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if self.param_vars.len() <= id.0 {
            self.param_vars.resize(id.0 + 1, None);
        }
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: store.shared_value(id),
            op: Op::Param,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ca != rb {
            return Err(Error::Shape(format!("matmul {ra}x{ca} by {rb}x{cb}")));
        }
        let mut out = Matrix::zeros(ra, cb);
        matmul_into(self.value(a), self.value(b), &mut out);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Adds a `1 x F` bias to every row of an `N x F` matrix.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(bias) != (1, c) {
            return Err(Error::Shape(format!("bias {:?} for {r}x{c} input", self.shape(bias))));
        }
        let mut out = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        for i in 0..r {
            for j in 0..c {
                out[(i, j)] += b[j];
            }
        }
        Ok(self.push(out, Op::AddRowBias(a, bias)))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let mut out = self.value(a).clone();
        for (o, y) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o = f(*o, *y);
        }
        out
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "minimum")?;
        let out = self.zip_with(a, b, f64::min);
        let mut k = self.kinks;
        for (x, y) in self.value(a).data().iter().zip(self.value(b).data()) {
            k = mix(k, u64::from(x <= y));
        }
        self.kinks = k;
        Ok(self.push(out, Op::Minimum(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|v| v.clamp(lo, hi));
        let mut k = self.kinks;
        for &v in self.value(a).data() {
            k = mix(k, if v < lo { 1 } else if v > hi { 2 } else { 3 });
        }
        self.kinks = k;
        self.push(out, Op::Clamp(a, lo, hi))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v * v);
        self.push(out, Op::Square(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::scalar(s), Op::Sum(a))
    }

    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if r >= rows || c >= cols {
            return Err(Error::Shape(format!("pick ({r},{c}) from {rows}x{cols}")));
        }
        let v = self.value(a)[(r, c)];
        Ok(self.push(Matrix::scalar(v), Op::Pick(a, r, c)))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let mut out = Matrix::zeros(1, c);
        for i in 0..r {
            for j in 0..c {
                out[(0, j)] += self.value(a)[(i, j)];
            }
        }
        let inv = 1.0 / r as f64;
        out.data_mut().iter_mut().for_each(|v| *v *= inv);
        self.push(out, Op::MeanRows(a))
    }

    pub fn select_row(&mut self, a: Var, r: usize) -> Result<Var> {
        let (rows, _) = self.shape(a);
        if r >= rows {
            return Err(Error::Shape(format!("row {r} of {rows}")));
        }
        let out = Matrix::row_vector(self.value(a).row(r).to_vec());
        Ok(self.push(out, Op::SelectRow(a, r)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map(|&p| self.shape(p).0).unwrap_or(0);
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(Error::Shape("concat of matrices with different row counts".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(i);
                for (j, &v) in src.iter().enumerate() {
                    out[(i, off + j)] = v;
                }
                off += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn rrelu(&mut self, a: Var) -> Var {
        let (out, slopes) = rrelu(&self.nodes[a.0].value, self.rng.as_mut());
        let mut k = self.kinks;
        for &v in self.value(a).data() {
            k = mix(k, u64::from(v < 0.0));
        }
        self.kinks = k;
        self.push(out, Op::Rrelu(a, slopes))
    }

    /// Log-softmax over the entries where `mask` is true; masked entries are `-inf`.
    pub fn masked_log_softmax(&mut self, a: Var, mask: &[bool]) -> Result<Var> {
        let (r, c) = self.shape(a);
        if r != 1 || mask.len() != c {
            return Err(Error::Shape(format!("mask of {} for {r}x{c} logits", mask.len())));
        }
        let masked = Matrix::row_vector(
            self.value(a)
                .data()
                .iter()
                .zip(mask)
                .map(|(&v, &m)| if m { v } else { f64::NEG_INFINITY })
                .collect(),
        );
        let out = log_softmax(&masked)?;
        Ok(self.push(out, Op::MaskedLogSoftmax(a, mask.to_vec())))
    }

    /// Entropy `-sum p log p` of a log-probability row, skipping `-inf` entries.
    pub fn entropy(&mut self, logp: Var) -> Var {
        let h = -self
            .value(logp)
            .data()
            .iter()
            .filter(|v| v.is_finite())
            .map(|&l| l.exp() * l)
            .sum::<f64>();
        self.push(Matrix::scalar(h), Op::Entropy(logp))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    fn node_gradients(&self, loss: Var) -> Result<Vec<Option<Matrix>>> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Contract("backward on a variable that was never recorded".into()));
        }
        if self.shape(loss) != (1, 1) {
            return Err(Error::Contract(format!("backward needs a scalar loss, got {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        fn acc(grads: &mut [Option<Matrix>], v: Var, shape: (usize, usize)) -> &mut Matrix {
            grads[v.0].get_or_insert_with(|| Matrix::zeros(shape.0, shape.1))
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (sa, sb) = (self.shape(*a), self.shape(*b));
                    matmul_nt_acc(&g, self.value(*b), acc(&mut grads, *a, sa));
                    matmul_tn_acc(self.value(*a), &g, acc(&mut grads, *b, sb));
                }
                Op::AddRowBias(a, b) => {
                    let sa = self.shape(*a);
                    acc(&mut grads, *a, sa).add_assign_scaled(&g, 1.0);
                    let gb = acc(&mut grads, *b, (1, sa.1));
                    for i in 0..g.rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                }
                Op::Add(a, b) => {
                    let s = g.shape();
                    acc(&mut grads, *a, s).add_assign_scaled(&g, 1.0);
                    acc(&mut grads, *b, s).add_assign_scaled(&g, 1.0);
                }
                Op::Sub(a, b) => {
                    let s = g.shape();
                    acc(&mut grads, *a, s).add_assign_scaled(&g, 1.0);
                    acc(&mut grads, *b, s).add_assign_scaled(&g, -1.0);
                }
                Op::Mul(a, b) => {
                    let s = g.shape();
                    let ga = Matrix::from_vec(s.0, s.1, g.data().iter().zip(self.value(*b).data()).map(|(x, y)| x * y).collect())?;
                    let gb = Matrix::from_vec(s.0, s.1, g.data().iter().zip(self.value(*a).data()).map(|(x, y)| x * y).collect())?;
                    acc(&mut grads, *a, s).add_assign_scaled(&ga, 1.0);
                    acc(&mut grads, *b, s).add_assign_scaled(&gb, 1.0);
                }
                Op::Scale(a, c) => {
                    acc(&mut grads, *a, g.shape()).add_assign_scaled(&g, *c);
                }
                Op::Exp(a) => {
                    let s = g.shape();
                    let ga = acc(&mut grads, *a, s);
                    for ((o, gv), y) in ga.data_mut().iter_mut().zip(g.data()).zip(node.value.data()) {
                        *o += gv * y;
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    let x = self.value(*a).data().to_vec();
                    let ga = acc(&mut grads, *a, g.shape());
                    for ((o, gv), xv) in ga.data_mut().iter_mut().zip(g.data()).zip(x) {
                        if xv >= *lo && xv <= *hi {
                            *o += gv;
                        }
                    }
                }
                Op::Minimum(a, b) => {
                    let s = g.shape();
                    let (xa, xb) = (self.value(*a).data().to_vec(), self.value(*b).data().to_vec());
                    {
                        let ga = acc(&mut grads, *a, s);
                        for (k, o) in ga.data_mut().iter_mut().enumerate() {
                            if xa[k] <= xb[k] {
                                *o += g.data()[k];
                            }
                        }
                    }
                    let gb = acc(&mut grads, *b, s);
                    for (k, o) in gb.data_mut().iter_mut().enumerate() {
                        if xa[k] > xb[k] {
                            *o += g.data()[k];
                        }
                    }
                }
                Op::Square(a) => {
                    let x = self.value(*a).data().to_vec();
                    let ga = acc(&mut grads, *a, g.shape());
                    for ((o, gv), xv) in ga.data_mut().iter_mut().zip(g.data()).zip(x) {
                        *o += 2.0 * xv * gv;
                    }
                }
                Op::Sum(a) => {
                    let gv = g.item();
                    let ga = acc(&mut grads, *a, self.shape(*a));
                    ga.data_mut().iter_mut().for_each(|o| *o += gv);
                }
                Op::Pick(a, r, c) => {
                    let sa = self.shape(*a);
                    acc(&mut grads, *a, sa)[(*r, *c)] += g.item();
                }
                Op::MeanRows(a) => {
                    let sa = self.shape(*a);
                    let inv = 1.0 / sa.0 as f64;
                    let ga = acc(&mut grads, *a, sa);
                    for i in 0..sa.0 {
                        for j in 0..sa.1 {
                            ga[(i, j)] += inv * g[(0, j)];
                        }
                    }
                }
                Op::SelectRow(a, r) => {
                    let sa = self.shape(*a);
                    let ga = acc(&mut grads, *a, sa);
                    for j in 0..sa.1 {
                        ga[(*r, j)] += g[(0, j)];
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let sp = self.shape(*p);
                        let gp = acc(&mut grads, *p, sp);
                        for i in 0..sp.0 {
                            for j in 0..sp.1 {
                                gp[(i, j)] += g[(i, off + j)];
                            }
                        }
                        off += sp.1;
                    }
                }
                Op::Rrelu(a, slopes) => {
                    let flip = self.fault == Some(Fault::FlipRreluBackward);
                    let x = self.value(*a).data().to_vec();
                    let ga = acc(&mut grads, *a, g.shape());
                    for (k, o) in ga.data_mut().iter_mut().enumerate() {
                        let d = if x[k] >= 0.0 {
                            1.0
                        } else if flip {
                            -slopes[k]
                        } else {
                            slopes[k]
                        };
                        *o += d * g.data()[k];
                    }
                }
                Op::MaskedLogSoftmax(a, mask) => {
                    let out = node.value.data();
                    let gsum: f64 = g.data().iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v).sum();
                    let ga = acc(&mut grads, *a, g.shape());
                    for (k, o) in ga.data_mut().iter_mut().enumerate() {
                        if mask[k] {
                            *o += g.data()[k] - out[k].exp() * gsum;
                        }
                    }
                }
                Op::Entropy(a) => {
                    let gv = g.item();
                    let l = self.value(*a).data().to_vec();
                    let ga = acc(&mut grads, *a, self.shape(*a));
                    for (k, o) in ga.data_mut().iter_mut().enumerate() {
                        if l[k].is_finite() {
                            *o += -gv * l[k].exp() * (l[k] + 1.0);
                        }
                    }
                }
            }
        }
        Ok(grads)
    }

    /// Adds `scale * d(loss)/d(param)` into `buf` for every parameter on the tape.
    pub fn accumulate_gradients(&self, loss: Var, buf: &mut GradBuffer, scale: f64) -> Result<()> {
        let grads = self.node_gradients(loss)?;
        for (pid, var) in self.param_vars.iter().enumerate() {
            if let Some(v) = var {
                if let Some(Some(g)) = grads.get(v.0) {
                    buf.grads[pid].add_assign_scaled(g, scale);
                }
            }
        }
        Ok(())
    }

    /// Writes `d(loss)/d(param)` into the store, overwriting previous gradients.
    /// Parameters that do not influence the loss get zero gradients.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let mut buf = store.new_grad_buffer();
        self.accumulate_gradients(loss, &mut buf, 1.0)?;
        store.set_grads(&buf)
    }
}
