//! Seeded synthetic flow data.
//!
//! Each benign feature is `mean + amplitude * sin(2π i / period + phase)` plus
//! Gaussian noise. Attack rows continue the same process and add
//! `shift * sigma` to every feature, where `sigma` is the stationary standard
//! deviation of that benign feature, `sqrt(amplitude² / 2 + noise²)`.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_file, write_flows, Dataset, FeatureSpec, DEFAULT_FEATURES};
use crate::matrix::Matrix;

/// One benign feature process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureProcess {
    pub mean: f64,
    pub amplitude: f64,
    /// Period in rows.
    pub period: f64,
    pub phase: f64,
    pub noise: f64,
}

impl FeatureProcess {
    /// Stationary standard deviation of the benign process.
    pub fn sigma(&self) -> f64 {
        (self.amplitude * self.amplitude / 2.0 + self.noise * self.noise).sqrt()
    }

    fn signal(&self, i: usize) -> f64 {
        self.mean + self.amplitude * (TAU * i as f64 / self.period + self.phase).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_benign: usize,
    pub n_attack: usize,
    pub features: Vec<FeatureProcess>,
    /// Attack mean offset in units of each feature's benign sigma.
    pub shift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        // Packet-length-like magnitudes for the five default columns.
        let f = |mean, amplitude, period, phase| FeatureProcess {
            mean,
            amplitude,
            period,
            phase,
            noise: amplitude * DEFAULT_NOISE_RATIO,
        };
        Self {
            n_benign: 2000,
            n_attack: 500,
            features: vec![
                f(800.0, 200.0, 960.0, 0.0),
                f(700.0, 180.0, 960.0, 0.6),
                f(60.0, 15.0, 480.0, 1.1),
                f(400.0, 100.0, 960.0, 1.9),
                f(50.0, 10.0, 480.0, 2.7),
            ],
            shift: 5.0,
            seed: 0,
        }
    }
}

/// Default noise standard deviation as a fraction of each amplitude.
pub const DEFAULT_NOISE_RATIO: f64 = 0.15;

impl SynthConfig {
    /// Sets every feature's noise to `ratio * amplitude`.
    pub fn with_noise_ratio(mut self, ratio: f64) -> Self {
        for p in &mut self.features {
            p.noise = p.amplitude * ratio;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_benign == 0 {
            return Err(Error::Parameter("need at least one benign row".into()));
        }
        if self.features.is_empty() {
            return Err(Error::Parameter("need at least one feature".into()));
        }
        for (j, p) in self.features.iter().enumerate() {
            let finite = [p.mean, p.amplitude, p.period, p.phase, p.noise, self.shift]
                .iter()
                .all(|v| v.is_finite());
            if !finite || p.period <= 0.0 || p.noise < 0.0 || p.amplitude < 0.0 || p.sigma() <= 0.0 {
                return Err(Error::Parameter(format!("feature process {j} is invalid")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub benign: Dataset,
    pub attack: Dataset,
}

pub fn gen(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normals: Vec<Normal<f64>> = config
        .features
        .iter()
        .map(|p| Normal::new(0.0, p.noise).expect("validated noise"))
        .collect();
    let m = config.features.len();
    let mut row = |i: usize, offset: bool, out: &mut Vec<f64>| {
        for (p, noise) in config.features.iter().zip(&normals) {
            let shift = if offset { config.shift * p.sigma() } else { 0.0 };
            out.push(p.signal(i) + noise.sample(&mut rng) + shift);
        }
    };
    let mut benign = Vec::with_capacity(config.n_benign * m);
    for i in 0..config.n_benign {
        row(i, false, &mut benign);
    }
    let mut attack = Vec::with_capacity(config.n_attack * m);
    for i in 0..config.n_attack {
        row(config.n_benign + i, true, &mut attack);
    }
    Ok(SynthData {
        benign: Dataset::new(Matrix::new(config.n_benign, m, benign)?, vec![0; config.n_benign])?,
        attack: Dataset::new(Matrix::new(config.n_attack, m, attack)?, vec![1; config.n_attack])?,
    })
}

/// Header of generated files: a few identifying columns around the default
/// features, in CICDDoS2019 order and spelling, leading spaces included.
pub const SYNTH_COLUMNS: [&str; 8] = [
    "Flow ID",
    " Timestamp",
    " Fwd Packet Length Max",
    " Fwd Packet Length Min",
    " Min Packet Length",
    " Max Packet Length",
    " Average Packet Size",
    " Label",
];

pub const SYNTH_ATTACK_LABEL: &str = "DrDoS_DNS";

fn to_csv(ds: &Dataset, first_row: usize) -> Result<Vec<u8>> {
    let spec = FeatureSpec::default();
    let mut buf = Vec::new();
    let base = chrono::DateTime::from_timestamp(1_546_300_800, 0).expect("fixed epoch");
    write_flows(&mut buf, &spec, &SYNTH_COLUMNS, ds, SYNTH_ATTACK_LABEL, |i, col| {
        let n = first_row + i;
        match col {
            "Flow ID" => format!("172.16.0.5-192.168.50.1-{}-53-17", 1024 + n % 60000),
            _ => (base + chrono::Duration::milliseconds(n as i64 * 10))
                .format("%Y-%m-%d %H:%M:%S%.3f")
                .to_string(),
        }
    })?;
    Ok(buf)
}

/// Writes `benign.csv` and `attack.csv` under `dir`. Only five-feature
/// configs fit the CICDDoS2019 header.
pub fn write_csv(data: &SynthData, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let m = data.benign.matrix.cols();
    if m != DEFAULT_FEATURES.len() {
        return Err(Error::Parameter(format!(
            "flow CSV schema needs {} features, data has {m}",
            DEFAULT_FEATURES.len()
        )));
    }
    let dir = dir.as_ref();
    let benign = dir.join("benign.csv");
    let attack = dir.join("attack.csv");
    write_file(&benign, &to_csv(&data.benign, 0)?)?;
    write_file(&attack, &to_csv(&data.attack, data.benign.len())?)?;
    Ok((benign, attack))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_reader;

    fn small(shift: f64) -> SynthConfig {
        SynthConfig {
            n_benign: 400,
            n_attack: 200,
            shift,
            seed: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = gen(&small(5.0)).unwrap();
        let b = gen(&small(5.0)).unwrap();
        assert_eq!(to_csv(&a.benign, 0).unwrap(), to_csv(&b.benign, 0).unwrap());
        assert_eq!(a, b);
        let c = gen(&SynthConfig { seed: 6, ..small(5.0) }).unwrap();
        assert_ne!(a.benign, c.benign);
    }

    #[test]
    fn shift_moves_means_by_sigma_units() {
        let mut cfg = small(5.0).with_noise_ratio(0.0);
        // whole periods on both sides, so the sinusoid averages out exactly
        cfg.n_benign = 960;
        cfg.n_attack = 960;
        let d = gen(&cfg).unwrap();
        for (j, p) in cfg.features.iter().enumerate() {
            let mean = |m: &Matrix| m.iter_rows().map(|r| r[j]).sum::<f64>() / m.rows() as f64;
            let diff = mean(&d.attack.matrix) - mean(&d.benign.matrix);
            assert!((diff - 5.0 * p.sigma()).abs() < 1e-9 * p.sigma(), "feature {j}: {diff}");
        }
    }

    #[test]
    fn zero_shift_zero_noise_attack_is_benign_process() {
        let cfg = SynthConfig {
            n_benign: 960,
            ..small(0.0).with_noise_ratio(0.0)
        };
        let d = gen(&cfg).unwrap();
        let bmin = |j: usize| d.benign.matrix.iter_rows().map(|r| r[j]).fold(f64::INFINITY, f64::min);
        let bmax = |j: usize| d.benign.matrix.iter_rows().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
        for r in d.attack.matrix.iter_rows() {
            for (j, &v) in r.iter().enumerate() {
                assert!(v >= bmin(j) - 1e-9 && v <= bmax(j) + 1e-9);
            }
        }
    }

    #[test]
    fn benign_values_are_bounded() {
        let cfg = SynthConfig {
            n_benign: 10_000,
            n_attack: 0,
            ..SynthConfig::default()
        };
        let d = gen(&cfg).unwrap();
        for r in d.benign.matrix.iter_rows() {
            for (v, p) in r.iter().zip(&cfg.features) {
                assert!((v - p.mean).abs() <= p.amplitude + 6.0 * p.noise);
            }
        }
    }

    #[test]
    fn csv_parses_without_skips() {
        let d = gen(&small(5.0)).unwrap();
        let text = to_csv(&d.attack, 400).unwrap();
        let parsed = parse_reader(text.as_slice(), &FeatureSpec::default()).unwrap();
        assert_eq!(parsed.skipped(), 0);
        assert_eq!(parsed.records.len(), 200);
        assert!(parsed.records.iter().all(|r| r.label == 1));
        let back = Dataset::from_records(&parsed.records, 5).unwrap();
        assert_eq!(back.matrix, d.attack.matrix);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small(5.0);
        cfg.features[0].period = 0.0;
        assert!(gen(&cfg).is_err());
        let mut cfg = small(5.0);
        cfg.features[1].amplitude = 0.0;
        cfg.features[1].noise = 0.0;
        assert!(gen(&cfg).is_err());
    }
}
