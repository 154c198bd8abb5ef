use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Largest sample size enumerated exactly, whatever the resample budget.
const MAX_EXACT_N: usize = 30;

fn differences(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::EmptyInput);
    }
    Ok(x.iter().zip(y).map(|(a, b)| a - b).collect())
}

/// Smallest `|sum|` counted as at least as extreme as the observed one.
/// The relative slack absorbs summation-order error and is invariant under
/// common scaling of the differences.
fn hit_threshold(d: &[f64]) -> f64 {
    let observed = d.iter().sum::<f64>().abs();
    observed - d.iter().map(|v| v.abs()).sum::<f64>() * 1e-12
}

/// Two-sided paired sign-flip permutation test on `x - y` with the sum of
/// differences as statistic.
///
/// All `2^n` sign patterns are enumerated when `2^n <= resamples`; otherwise
/// `resamples` random patterns are drawn from a ChaCha8 generator seeded with
/// `rng_seed` and the observed pattern is counted once more, giving
/// `p = (1 + hits) / (resamples + 1)`.
pub fn paired_permutation_test(x: &[f64], y: &[f64], resamples: usize, rng_seed: u64) -> Result<f64> {
    let n = differences(x, y)?.len();
    if n <= MAX_EXACT_N && (1usize << n) <= resamples.max(1) {
        exact_sign_flip_test(x, y)
    } else {
        monte_carlo_sign_flip_test(x, y, resamples, rng_seed)
    }
}

/// Exact p-value over all `2^n` sign patterns; `n` is limited to 30.
pub fn exact_sign_flip_test(x: &[f64], y: &[f64]) -> Result<f64> {
    let d = differences(x, y)?;
    let n = d.len();
    if n > MAX_EXACT_N {
        return Err(Error::InvalidConfig(format!("{n} pairs are too many to enumerate")));
    }
    let threshold = hit_threshold(&d);
    let total = 1usize << n;
    let hits = (0..total)
        .filter(|pattern| {
            let s: f64 = d
                .iter()
                .enumerate()
                .map(|(i, v)| if pattern >> i & 1 == 1 { -v } else { *v })
                .sum();
            s.abs() >= threshold
        })
        .count();
    Ok(hits as f64 / total as f64)
}

/// Monte Carlo p-value `(1 + hits) / (resamples + 1)` from seeded random
/// sign patterns.
pub fn monte_carlo_sign_flip_test(x: &[f64], y: &[f64], resamples: usize, rng_seed: u64) -> Result<f64> {
    let d = differences(x, y)?;
    let threshold = hit_threshold(&d);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut hits = 0usize;
    for _ in 0..resamples {
        let s: f64 = d
            .iter()
            .map(|v| if rng.random::<bool>() { -v } else { *v })
            .sum();
        if s.abs() >= threshold {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (resamples + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_differences_give_one() {
        let x = [0.3, 0.5, 0.7];
        assert_eq!(paired_permutation_test(&x, &x, 100, 1).unwrap(), 1.0);
        assert_eq!(paired_permutation_test(&x, &x, 2, 1).unwrap(), 1.0);
    }

    #[test]
    fn constant_shift_exact() {
        let x = [1.0; 8];
        let y = [0.0; 8];
        assert_eq!(paired_permutation_test(&x, &y, 256, 0).unwrap(), 0.0078125);
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(paired_permutation_test(&[1.0], &[1.0, 2.0], 10, 0).is_err());
        assert!(paired_permutation_test(&[1.0], &[1.0], 10, 0).is_err());
    }
}
