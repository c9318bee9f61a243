use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}

/// Inverted dropout. In train mode each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; the returned mask holds
/// those per-element multipliers for the backward pass. Infer mode, or a zero
/// rate, is the identity and returns no mask.
pub fn dropout(x: &[f64], rate: f64, mode: Mode, rng: &mut impl Rng) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Parameter(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((x.to_vec(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let out = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
    Ok((out, Some(mask)))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn zero_rate_and_infer_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = [1.0, -2.0, 3.5];
        for mode in [Mode::Train, Mode::Infer] {
            let (y, mask) = dropout(&x, 0.0, mode, &mut rng).unwrap();
            assert_eq!(y, x.to_vec());
            assert!(mask.is_none());
        }
        let (y, _) = dropout(&x, 0.2, Mode::Infer, &mut rng).unwrap();
        assert_eq!(y, x.to_vec());
    }

    #[test]
    fn rate_out_of_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(dropout(&[1.0], 1.0, Mode::Train, &mut rng), Err(Error::Parameter(_))));
        assert!(dropout(&[1.0], -0.1, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn survivor_fraction_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let x = vec![1.0; 100_000];
        let (y, mask) = dropout(&x, 0.2, Mode::Train, &mut rng).unwrap();
        let survivors = y.iter().filter(|&&v| v != 0.0).count() as f64 / x.len() as f64;
        assert!((survivors - 0.8).abs() <= 0.01, "{survivors}");
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() <= 0.02, "{mean}");
        assert!(mask.unwrap().iter().all(|&m| m == 0.0 || m == 1.25));
    }
}
