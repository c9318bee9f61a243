//! LSTM numeric kernel.
//!
//! Gate weights act on the concatenation `[h_prev, x]`, one matrix per gate,
//! exactly as
//!
//! ```text
//! f = σ(w_f·[h,x] + b_f)    i = σ(w_i·[h,x] + b_i)    c̃ = tanh(w_c·[h,x] + b_c)
//! c' = f⊙c + i⊙c̃            o = σ(w_o·[h,x] + b_o)    h' = o⊙tanh(c')
//! ```
//!
//! Everything is `f64` and single-threaded so that gradient checks and
//! training runs are reproducible bit for bit.

mod adam;
mod cell;
mod dense;
mod dropout;
mod gradcheck;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use cell::{
    cell_forward, layer_backward, layer_backward_into, layer_forward, GateCache, LstmCellParams, LstmState,
    StepCache,
};
pub use dense::{dense_backward_into, dense_forward, DenseParams};
pub use dropout::{dropout, Mode};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, FD_STEP, REL_ERROR_FLOOR};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Uniform Glorot initialization for a `fan_out x fan_in` matrix.
pub(crate) fn glorot(fan_out: usize, fan_in: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_out * fan_in)
        .map(|_| rng.random_range(-limit..limit))
        .collect()
}
