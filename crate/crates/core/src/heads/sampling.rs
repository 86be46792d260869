use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("no observation outside the evidence set to swap in")]
    EmptyPool,
    #[error("evidence set is empty")]
    EmptyEvidence,
}

/// Target for the evidence head: 1 when `h` was the worse evidence set for
/// the correct decision, i.e. `P_A(y | h) < P_A(y | h')`.
pub fn pseudo_label(p_correct_h: f64, p_correct_alt: f64) -> bool {
    p_correct_h < p_correct_alt
}

/// Replaces one uniformly chosen slot of `h` with a uniformly chosen member
/// of `pool` that is not already in `h`.
pub fn make_alternate<R: Rng>(h: &[usize], pool: &[usize], rng: &mut R) -> Result<Vec<usize>, SampleError> {
    if h.is_empty() {
        return Err(SampleError::EmptyEvidence);
    }
    let mut outside: Vec<usize> = pool.iter().copied().filter(|i| !h.contains(i)).collect();
    outside.sort_unstable();
    outside.dedup();
    if outside.is_empty() {
        return Err(SampleError::EmptyPool);
    }
    let slot = rng.random_range(0..h.len());
    let mut alt = h.to_vec();
    alt[slot] = outside[rng.random_range(0..outside.len())];
    Ok(alt)
}

/// Indices kept for one epoch: every positive plus a rotating window of
/// `min(N_neg, ceil(ratio * max(N_pos, 1)))` negatives.
///
/// Negatives follow one fixed seeded permutation and consecutive epochs take
/// consecutive windows of it, so every negative is seen at least once in any
/// `ceil(N_neg / window)` consecutive epochs. The result is sorted.
pub fn sample_negatives(labels: &[bool], ratio: f64, epoch: usize, seed: u64) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(labels.len());
    let mut negatives = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        if y {
            out.push(i);
        } else {
            negatives.push(i);
        }
    }
    let window = negatives_per_epoch(out.len(), negatives.len(), ratio);
    if window > 0 {
        negatives.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = negatives.len();
        let start = (epoch as u128 * window as u128 % n as u128) as usize;
        out.extend((0..window).map(|j| negatives[(start + j) % n]));
    }
    out.sort_unstable();
    out
}

pub fn negatives_per_epoch(n_pos: usize, n_neg: usize, ratio: f64) -> usize {
    if ratio.is_nan() || ratio <= 0.0 {
        return 0;
    }
    let want = (ratio * n_pos.max(1) as f64).ceil();
    if want >= n_neg as f64 {
        n_neg
    } else {
        want as usize
    }
}
