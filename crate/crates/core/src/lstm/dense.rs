use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{dot, glorot};
use crate::error::{Error, Result};

/// Affine map applied identically at every timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub input_dim: usize,
    pub output_dim: usize,
    /// `output_dim x input_dim`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            weight: vec![0.0; input_dim * output_dim],
            bias: vec![0.0; output_dim],
        }
    }

    pub fn init(input_dim: usize, output_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: glorot(output_dim, input_dim, rng),
            ..Self::zeros(input_dim, output_dim)
        }
    }

    pub fn blocks(&self) -> [&[f64]; 2] {
        [&self.weight, &self.bias]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn validate(&self) -> Result<()> {
        if self.weight.len() != self.input_dim * self.output_dim || self.bias.len() != self.output_dim {
            return Err(Error::Shape(format!(
                "dense layer {}x{} has {} weights and {} biases",
                self.output_dim,
                self.input_dim,
                self.weight.len(),
                self.bias.len()
            )));
        }
        if self.blocks().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
            return Err(Error::Numeric("dense parameters are not finite".into()));
        }
        Ok(())
    }
}

/// `x` is `steps x input_dim`; returns `steps x output_dim`.
pub fn dense_forward(p: &DenseParams, x: &[f64]) -> Result<Vec<f64>> {
    if p.input_dim == 0 || !x.len().is_multiple_of(p.input_dim) {
        return Err(Error::Shape(format!(
            "{} values are not whole {}-wide rows",
            x.len(),
            p.input_dim
        )));
    }
    let mut y = Vec::with_capacity(x.len() / p.input_dim * p.output_dim);
    for row in x.chunks_exact(p.input_dim) {
        for r in 0..p.output_dim {
            y.push(dot(&p.weight[r * p.input_dim..(r + 1) * p.input_dim], row) + p.bias[r]);
        }
    }
    Ok(y)
}

/// Adds parameter gradients into `grads` and returns the input gradient.
pub fn dense_backward_into(p: &DenseParams, x: &[f64], dy: &[f64], grads: &mut DenseParams) -> Result<Vec<f64>> {
    let steps = x.len() / p.input_dim.max(1);
    if x.len() != steps * p.input_dim || dy.len() != steps * p.output_dim {
        return Err(Error::Shape(format!(
            "dense backward got {} inputs and {} output gradients",
            x.len(),
            dy.len()
        )));
    }
    let mut dx = vec![0.0; x.len()];
    for s in 0..steps {
        let xs = &x[s * p.input_dim..(s + 1) * p.input_dim];
        let dxs = &mut dx[s * p.input_dim..(s + 1) * p.input_dim];
        for r in 0..p.output_dim {
            let d = dy[s * p.output_dim + r];
            if d == 0.0 {
                continue;
            }
            grads.bias[r] += d;
            let base = r * p.input_dim;
            for k in 0..p.input_dim {
                grads.weight[base + k] += d * xs[k];
                dxs[k] += d * p.weight[base + k];
            }
        }
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::lstm::grad_check;

    #[test]
    fn identity_and_bias_only() {
        let mut p = DenseParams::zeros(3, 3);
        for k in 0..3 {
            p.weight[k * 3 + k] = 1.0;
        }
        let x = [0.5, -1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(dense_forward(&p, &x).unwrap(), x.to_vec());

        let mut p = DenseParams::zeros(3, 2);
        p.bias = vec![0.25, -7.0];
        assert_eq!(dense_forward(&p, &x).unwrap(), vec![0.25, -7.0, 0.25, -7.0]);
    }

    #[test]
    fn shape_errors() {
        let p = DenseParams::zeros(3, 2);
        assert!(dense_forward(&p, &[1.0, 2.0]).is_err());
        let mut g = DenseParams::zeros(3, 2);
        assert!(dense_backward_into(&p, &[1.0, 2.0, 3.0], &[1.0], &mut g).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut p = DenseParams::init(4, 3, &mut rng);
        p.bias = vec![0.1, -0.2, 0.3];
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mix: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        // quadratic loss keeps the check smooth
        let loss_of = |q: &DenseParams, x: &[f64]| {
            dense_forward(q, x).unwrap().iter().zip(&mix).map(|(y, w)| 0.5 * (y - w).powi(2)).sum::<f64>()
        };
        let y = dense_forward(&p, &x).unwrap();
        let dy: Vec<f64> = y.iter().zip(&mix).map(|(y, w)| y - w).collect();
        let mut g = DenseParams::zeros(4, 3);
        let dx = dense_backward_into(&p, &x, &dy, &mut g).unwrap();

        let params = [p.weight.clone(), p.bias.clone()].concat();
        let analytic = [g.weight.clone(), g.bias.clone()].concat();
        let loss = |flat: &[f64]| {
            let mut q = p.clone();
            q.weight.copy_from_slice(&flat[..12]);
            q.bias.copy_from_slice(&flat[12..]);
            loss_of(&q, &x)
        };
        let report = grad_check(loss, &params, &analytic, 100, 0, 1e-6);
        assert!(report.passed(), "{report:?}");
        let report = grad_check(|xs: &[f64]| loss_of(&p, xs), &x, &dx, 100, 0, 1e-6);
        assert!(report.passed(), "{report:?}");
    }
}
