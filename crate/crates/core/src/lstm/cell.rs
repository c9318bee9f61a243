use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{dot, glorot, sigmoid};
use crate::error::{Error, Result};

/// Weights and biases of one LSTM layer.
///
/// Every `w_*` is `units x (units + input_dim)` row-major; columns
/// `0..units` multiply the previous hidden state, the rest multiply the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub units: usize,
    pub input_dim: usize,
    pub w_f: Vec<f64>,
    pub b_f: Vec<f64>,
    pub w_i: Vec<f64>,
    pub b_i: Vec<f64>,
    pub w_c: Vec<f64>,
    pub b_c: Vec<f64>,
    pub w_o: Vec<f64>,
    pub b_o: Vec<f64>,
}

impl LstmCellParams {
    pub fn zeros(units: usize, input_dim: usize) -> Self {
        let w = vec![0.0; units * (units + input_dim)];
        let b = vec![0.0; units];
        Self {
            units,
            input_dim,
            w_f: w.clone(),
            b_f: b.clone(),
            w_i: w.clone(),
            b_i: b.clone(),
            w_c: w.clone(),
            b_c: b.clone(),
            w_o: w,
            b_o: b,
        }
    }

    /// Glorot-uniform gate weights, zero biases.
    pub fn init(units: usize, input_dim: usize, rng: &mut impl Rng) -> Self {
        let cols = units + input_dim;
        let mut p = Self::zeros(units, input_dim);
        p.w_f = glorot(units, cols, rng);
        p.w_i = glorot(units, cols, rng);
        p.w_c = glorot(units, cols, rng);
        p.w_o = glorot(units, cols, rng);
        p
    }

    pub fn concat_dim(&self) -> usize {
        self.units + self.input_dim
    }

    /// Parameter blocks in a fixed order: w_f, b_f, w_i, b_i, w_c, b_c, w_o, b_o.
    pub fn blocks(&self) -> [&[f64]; 8] {
        [
            &self.w_f, &self.b_f, &self.w_i, &self.b_i, &self.w_c, &self.b_c, &self.w_o, &self.b_o,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.w_f,
            &mut self.b_f,
            &mut self.w_i,
            &mut self.b_i,
            &mut self.w_c,
            &mut self.b_c,
            &mut self.w_o,
            &mut self.b_o,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.units * self.concat_dim();
        for (k, block) in self.blocks().iter().enumerate() {
            let expected = if k % 2 == 0 { w } else { self.units };
            if block.len() != expected {
                return Err(Error::Shape(format!(
                    "LSTM parameter block {k} has {} values, expected {expected}",
                    block.len()
                )));
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("LSTM parameter block {k} is not finite")));
            }
        }
        Ok(())
    }
}

/// Hidden and cell state carried between timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(units: usize) -> Self {
        Self {
            h: vec![0.0; units],
            c: vec![0.0; units],
        }
    }
}

/// Activations of one timestep kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCache {
    /// `[h_prev, x]`
    pub z: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One [`StepCache`] per processed timestep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GateCache {
    pub steps: Vec<StepCache>,
}

impl GateCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

pub fn cell_forward(p: &LstmCellParams, state: &LstmState, x: &[f64]) -> Result<(LstmState, StepCache)> {
    let u = p.units;
    if x.len() != p.input_dim || state.h.len() != u || state.c.len() != u {
        return Err(Error::Shape(format!(
            "cell expects input {} and state {u}, got input {} and state {}/{}",
            p.input_dim,
            x.len(),
            state.h.len(),
            state.c.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("LSTM cell input is not finite".into()));
    }
    let cols = p.concat_dim();
    let mut z = Vec::with_capacity(cols);
    z.extend_from_slice(&state.h);
    z.extend_from_slice(x);

    let gate = |w: &[f64], b: &[f64], r: usize| dot(&w[r * cols..(r + 1) * cols], &z) + b[r];
    let mut f = vec![0.0; u];
    let mut i = vec![0.0; u];
    let mut g = vec![0.0; u];
    let mut o = vec![0.0; u];
    let mut c = vec![0.0; u];
    let mut tanh_c = vec![0.0; u];
    let mut h = vec![0.0; u];
    for r in 0..u {
        f[r] = sigmoid(gate(&p.w_f, &p.b_f, r));
        i[r] = sigmoid(gate(&p.w_i, &p.b_i, r));
        g[r] = gate(&p.w_c, &p.b_c, r).tanh();
        o[r] = sigmoid(gate(&p.w_o, &p.b_o, r));
        c[r] = f[r] * state.c[r] + i[r] * g[r];
        tanh_c[r] = c[r].tanh();
        h[r] = o[r] * tanh_c[r];
    }
    let next = LstmState {
        h: h.clone(),
        c: c.clone(),
    };
    let cache = StepCache {
        z,
        c_prev: state.c.clone(),
        f,
        i,
        g,
        o,
        c,
        tanh_c,
        h,
    };
    Ok((next, cache))
}

/// Runs the layer over `seq` (`steps x input_dim`) from a zero state.
///
/// With `return_sequences` the output is every hidden state (`steps x units`),
/// otherwise only the last one.
pub fn layer_forward(p: &LstmCellParams, seq: &[f64], return_sequences: bool) -> Result<(Vec<f64>, GateCache)> {
    if p.input_dim == 0 || seq.is_empty() || !seq.len().is_multiple_of(p.input_dim) {
        return Err(Error::Shape(format!(
            "sequence of {} values is not a whole number of {}-wide steps",
            seq.len(),
            p.input_dim
        )));
    }
    let mut state = LstmState::zeros(p.units);
    let mut cache = GateCache::default();
    for x in seq.chunks_exact(p.input_dim) {
        let (next, step) = cell_forward(p, &state, x)?;
        state = next;
        cache.steps.push(step);
    }
    let out = if return_sequences {
        cache.steps.iter().flat_map(|s| s.h.iter().copied()).collect()
    } else {
        state.h
    };
    Ok((out, cache))
}

/// Reverse-time pass through a cached forward run.
///
/// `upstream` is either `steps x units` (gradient on every hidden output) or
/// just `units` (gradient on the final hidden state only). Parameter gradients
/// are added into `grads`; the input-sequence gradient is returned.
pub fn layer_backward_into(
    p: &LstmCellParams,
    cache: &GateCache,
    upstream: &[f64],
    grads: &mut LstmCellParams,
) -> Result<Vec<f64>> {
    let u = p.units;
    let steps = cache.len();
    let last_only = upstream.len() == u && steps != 1;
    if steps == 0 || !(last_only || upstream.len() == steps * u) {
        return Err(Error::Contract(format!(
            "upstream gradient of {} values does not fit a {steps}-step cache of {u} units",
            upstream.len()
        )));
    }
    if grads.units != u || grads.input_dim != p.input_dim {
        return Err(Error::Shape("gradient accumulator has the wrong dimensions".into()));
    }
    let cols = p.concat_dim();
    let mut dx = vec![0.0; steps * p.input_dim];
    let mut dh_next = vec![0.0; u];
    let mut dc_next = vec![0.0; u];
    let mut da = [vec![0.0; u], vec![0.0; u], vec![0.0; u], vec![0.0; u]];
    let mut dz = vec![0.0; cols];

    for t in (0..steps).rev() {
        let s = &cache.steps[t];
        if s.z.len() != cols {
            return Err(Error::Contract("cache does not match parameter shapes".into()));
        }
        for r in 0..u {
            let up = if last_only {
                if t == steps - 1 {
                    upstream[r]
                } else {
                    0.0
                }
            } else {
                upstream[t * u + r]
            };
            let dh = up + dh_next[r];
            let d_o = dh * s.tanh_c[r];
            let dc = dc_next[r] + dh * s.o[r] * (1.0 - s.tanh_c[r] * s.tanh_c[r]);
            let df = dc * s.c_prev[r];
            let di = dc * s.g[r];
            let dg = dc * s.i[r];
            dc_next[r] = dc * s.f[r];
            da[0][r] = df * s.f[r] * (1.0 - s.f[r]);
            da[1][r] = di * s.i[r] * (1.0 - s.i[r]);
            da[2][r] = dg * (1.0 - s.g[r] * s.g[r]);
            da[3][r] = d_o * s.o[r] * (1.0 - s.o[r]);
        }
        dz.iter_mut().for_each(|v| *v = 0.0);
        let [gw_f, gb_f, gw_i, gb_i, gw_c, gb_c, gw_o, gb_o] = grads.blocks_mut();
        let gate_grads: [(&mut [f64], &mut [f64], &[f64]); 4] = [
            (gw_f, gb_f, &p.w_f),
            (gw_i, gb_i, &p.w_i),
            (gw_c, gb_c, &p.w_c),
            (gw_o, gb_o, &p.w_o),
        ];
        for ((gw, gb, w), d) in gate_grads.into_iter().zip(&da) {
            for r in 0..u {
                let dr = d[r];
                if dr == 0.0 {
                    continue;
                }
                gb[r] += dr;
                let row = &w[r * cols..(r + 1) * cols];
                let grow = &mut gw[r * cols..(r + 1) * cols];
                for k in 0..cols {
                    grow[k] += dr * s.z[k];
                    dz[k] += dr * row[k];
                }
            }
        }
        dh_next.copy_from_slice(&dz[..u]);
        dx[t * p.input_dim..(t + 1) * p.input_dim].copy_from_slice(&dz[u..]);
    }
    Ok(dx)
}

/// Allocating form of [`layer_backward_into`].
pub fn layer_backward(p: &LstmCellParams, cache: &GateCache, upstream: &[f64]) -> Result<(LstmCellParams, Vec<f64>)> {
    let mut grads = LstmCellParams::zeros(p.units, p.input_dim);
    let dx = layer_backward_into(p, cache, upstream, &mut grads)?;
    Ok((grads, dx))
}
