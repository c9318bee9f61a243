//! Overlapping stride-1 windows over a feature matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Window length in consecutive flow records. Stride is always 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub timesteps: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { timesteps: 10 }
    }
}

impl WindowConfig {
    pub fn new(timesteps: usize) -> Result<Self> {
        if timesteps == 0 {
            return Err(Error::Parameter("window length must be at least 1".into()));
        }
        Ok(Self { timesteps })
    }

    pub fn stride(&self) -> usize {
        1
    }

    pub fn window_count(&self, n: usize) -> usize {
        if n >= self.timesteps {
            n - self.timesteps + 1
        } else {
            0
        }
    }
}

/// `windows x timesteps x features`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    timesteps: usize,
    features: usize,
    data: Vec<f64>,
    /// First source row of each window.
    pub origin: Vec<usize>,
}

impl SequenceBatch {
    pub fn new(timesteps: usize, features: usize, data: Vec<f64>, origin: Vec<usize>) -> Result<Self> {
        if data.len() != origin.len() * timesteps * features {
            return Err(Error::Shape(format!(
                "{} values for {} windows of {timesteps}x{features}",
                data.len(),
                origin.len()
            )));
        }
        Ok(Self {
            timesteps,
            features,
            data,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.origin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origin.is_empty()
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn window_len(&self) -> usize {
        self.timesteps * self.features
    }

    /// Window `k` as a flat `timesteps x features` slice.
    pub fn window(&self, k: usize) -> &[f64] {
        let w = self.window_len();
        &self.data[k * w..(k + 1) * w]
    }

    pub fn get(&self, k: usize, step: usize, feature: usize) -> f64 {
        self.data[k * self.window_len() + step * self.features + feature]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Same layout, different values. Used for reconstructions.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        Self::new(self.timesteps, self.features, data, self.origin.clone())
    }

    pub fn select(&self, windows: &[usize]) -> SequenceBatch {
        let mut data = Vec::with_capacity(windows.len() * self.window_len());
        for &k in windows {
            data.extend_from_slice(self.window(k));
        }
        SequenceBatch {
            timesteps: self.timesteps,
            features: self.features,
            data,
            origin: windows.iter().map(|&k| self.origin[k]).collect(),
        }
    }
}

/// Builds all `n - t + 1` windows; window `k` holds source rows `k..k+t`.
pub fn make_windows(matrix: &Matrix, cfg: WindowConfig) -> Result<SequenceBatch> {
    let n = matrix.rows();
    let t = cfg.timesteps;
    if t == 0 {
        return Err(Error::Parameter("window length must be at least 1".into()));
    }
    if n < t {
        return Err(Error::InsufficientData { n, t });
    }
    let w = cfg.window_count(n);
    let m = matrix.cols();
    let src = matrix.as_slice();
    let mut data = Vec::with_capacity(w * t * m);
    for k in 0..w {
        data.extend_from_slice(&src[k * m..(k + t) * m]);
    }
    SequenceBatch::new(t, m, data, (0..w).collect())
}

/// Every `(window, offset)` pair whose window covers source row `sample_index`.
pub fn windows_containing(sample_index: usize, n: usize, cfg: WindowConfig) -> Result<Vec<(usize, usize)>> {
    let t = cfg.timesteps;
    if n < t || t == 0 {
        return Err(Error::InsufficientData { n, t });
    }
    if sample_index >= n {
        return Err(Error::Bounds {
            index: sample_index,
            len: n,
        });
    }
    let first = (sample_index + 1).saturating_sub(t);
    let last = sample_index.min(n - t);
    Ok((first..=last).map(|k| (k, sample_index - k)).collect())
}

/// Number of windows covering row `i`: `min(t, i + 1, n - i, n - t + 1)`.
pub fn coverage(i: usize, n: usize, t: usize) -> usize {
    t.min(i + 1).min(n - i).min(n + 1 - t)
}
