use std::collections::HashMap;
use std::hash::Hash;

use super::metrics::EvalError;

/// Chance-adjusted agreement between two labelings of the same items.
/// Returns 1 when both labelings use one and the same label throughout.
pub fn cohen_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = a.len() as f64;
    let observed = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut ca: HashMap<&T, f64> = HashMap::new();
    let mut cb: HashMap<&T, f64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *ca.entry(x).or_default() += 1.0;
        *cb.entry(y).or_default() += 1.0;
    }
    let expected: f64 = ca.iter().map(|(k, &na)| na * cb.get(k).copied().unwrap_or(0.0)).sum::<f64>() / (n * n);
    if expected >= 1.0 {
        return Ok(1.0);
    }
    Ok((observed - expected) / (1.0 - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_is_one() {
        assert_eq!(cohen_kappa(&[1, 2, 2, 3], &[1, 2, 2, 3]).unwrap(), 1.0);
        assert_eq!(cohen_kappa(&["x"; 4], &["x"; 4]).unwrap(), 1.0);
    }

    #[test]
    fn two_by_two_closed_form() {
        // yes/yes 20, yes/no 5, no/yes 10, no/no 15
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (x, y, n) in [(true, true, 20), (true, false, 5), (false, true, 10), (false, false, 15)] {
            for _ in 0..n {
                a.push(x);
                b.push(y);
            }
        }
        let po = 35.0 / 50.0;
        let pe = (25.0 / 50.0) * (30.0 / 50.0) + (25.0 / 50.0) * (20.0 / 50.0);
        let k = cohen_kappa(&a, &b).unwrap();
        assert!((k - (po - pe) / (1.0 - pe)).abs() < 1e-12);
        assert!((k - 0.4).abs() < 1e-12);
    }

    #[test]
    fn independent_labels_are_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<u8> = (0..10_000).map(|_| rng.random_range(0..3)).collect();
        let b: Vec<u8> = (0..10_000).map(|_| rng.random_range(0..3)).collect();
        assert!(cohen_kappa(&a, &b).unwrap().abs() < 0.05);
    }

    #[test]
    fn rejects_mismatched_lengths() {
        assert_eq!(cohen_kappa(&[1], &[1, 2]), Err(EvalError::LengthMismatch(1, 2)));
    }
}
