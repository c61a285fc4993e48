//! Small dense-tensor engine: matrices, a recording tape with reverse-mode
//! gradients, GCN layers, Adam, and JSON checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod matrix;
pub mod params;
pub mod tape;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, load_into, save_checkpoint, Checkpoint};
pub use matrix::{normalize_adjacency, Matrix};
pub use params::{GradBuffer, ParamId, ParamStore};
pub use tape::{log_softmax, rrelu, Fault, Tape, Var};

use crate::error::Result;

/// `RReLU(A_norm · H · W + b)`.
pub fn gcn_layer_forward(tape: &mut Tape, h: Var, a_norm: Var, w: Var, b: Var) -> Result<Var> {
    let (n, f) = tape.value(h).shape();
    let (an, am) = tape.value(a_norm).shape();
    if an != n || am != n {
        return Err(crate::error::Error::Shape(format!(
            "adjacency {an}x{am} for {n} nodes"
        )));
    }
    if tape.value(w).rows() != f {
        return Err(crate::error::Error::Shape(format!(
            "weight {:?} for {f} input features",
            tape.value(w).shape()
        )));
    }
    let hw = tape.matmul(h, w)?;
    let ahw = tape.matmul(a_norm, hw)?;
    let z = tape.add_row_bias(ahw, b)?;
    Ok(tape.rrelu(z))
}

/// `x · W + b`, no activation.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    tape.add_row_bias(xw, b)
}
