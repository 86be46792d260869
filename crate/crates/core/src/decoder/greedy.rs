use serde::{Deserialize, Serialize};

use super::DecodeError;

/// Indices into the M-best list, one per evidence slot. Slot order is kept
/// as built by the decoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub slots: Vec<usize>,
}

impl Evidence {
    pub fn top(k: usize) -> Self {
        Evidence { slots: (0..k).collect() }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.slots.contains(&index)
    }
}

/// One outer iteration: the best single-slot replacement by candidate
/// `candidate`, and whether it was taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub candidate: usize,
    pub slot: usize,
    pub proposed: f64,
    pub accepted: bool,
    /// Evidence score after this iteration.
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyTrace {
    pub evidence: Evidence,
    pub initial: f64,
    pub steps: Vec<GreedyStep>,
}

impl GreedyTrace {
    /// Evidence score held after initialization and after every iteration.
    pub fn accepted_scores(&self) -> Vec<f64> {
        std::iter::once(self.initial).chain(self.steps.iter().map(|s| s.current)).collect()
    }

    pub fn score(&self) -> f64 {
        self.steps.last().map_or(self.initial, |s| s.current)
    }
}

/// Starts from the top `k` candidates and, for each later candidate `t`,
/// tries it in every slot; the best replacement (lowest slot on ties) is
/// kept only if it scores strictly higher than the current evidence.
pub fn select_evidence_greedy<F>(m: usize, k: usize, mut score: F) -> Result<GreedyTrace, DecodeError>
where
    F: FnMut(&[usize]) -> Result<f64, DecodeError>,
{
    if k == 0 || k > m {
        return Err(DecodeError::InvalidK { k, m });
    }
    let mut h: Vec<usize> = (0..k).collect();
    let initial = score(&h)?;
    let mut current = initial;
    let mut steps = Vec::with_capacity(m - k);
    let mut trial = h.clone();
    for t in k..m {
        let mut best: Option<(usize, f64)> = None;
        for slot in 0..k {
            trial.copy_from_slice(&h);
            trial[slot] = t;
            let s = score(&trial)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((slot, s));
            }
        }
        let (slot, proposed) = best.expect("k >= 1");
        let accepted = proposed > current;
        if accepted {
            h[slot] = t;
            current = proposed;
        }
        steps.push(GreedyStep { candidate: t, slot, proposed, accepted, current });
    }
    Ok(GreedyTrace { evidence: Evidence { slots: h }, initial, steps })
}

/// `score(i, h)` for every candidate `i` in `0..m`.
pub fn score_candidates<F>(m: usize, evidence: &Evidence, mut score: F) -> Result<Vec<f64>, DecodeError>
where
    F: FnMut(usize, &Evidence) -> Result<f64, DecodeError>,
{
    (0..m).map(|i| score(i, evidence)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mean_scorer(values: &[f64]) -> impl FnMut(&[usize]) -> Result<f64, DecodeError> + '_ {
        move |h| Ok(h.iter().map(|&i| values[i]).sum::<f64>() / h.len() as f64)
    }

    #[test]
    fn hand_traced_mean_example() {
        let values = [0.9, 0.1, 0.8, 0.7];
        let t = select_evidence_greedy(4, 2, mean_scorer(&values)).unwrap();
        assert_eq!(t.evidence.slots, vec![0, 2]);
        assert_eq!(t.initial, 0.5);
        assert!(t.steps[0].accepted && (t.steps[0].proposed - 0.85).abs() < 1e-12);
        assert!(!t.steps[1].accepted && (t.steps[1].proposed - 0.8).abs() < 1e-12);
    }

    #[test]
    fn k_equal_m_keeps_the_list() {
        let values = [0.1, 0.5, 0.3];
        let t = select_evidence_greedy(3, 3, mean_scorer(&values)).unwrap();
        assert_eq!(t.evidence, Evidence::top(3));
        assert!(t.steps.is_empty());
    }

    #[test]
    fn ties_keep_the_incumbent_and_lowest_slot() {
        let t = select_evidence_greedy(3, 2, |_| Ok(0.5)).unwrap();
        assert_eq!(t.evidence.slots, vec![0, 1]);
        assert_eq!(t.steps[0].slot, 0);
        assert!(!t.steps[0].accepted);
    }

    #[test]
    fn bad_k() {
        assert!(matches!(select_evidence_greedy(3, 0, |_| Ok(0.0)), Err(DecodeError::InvalidK { .. })));
        assert!(matches!(select_evidence_greedy(3, 4, |_| Ok(0.0)), Err(DecodeError::InvalidK { .. })));
    }

    proptest! {
        #[test]
        fn accepted_scores_never_decrease(values in proptest::collection::vec(0.0f64..1.0, 1..9), kf in 0.0f64..1.0) {
            let m = values.len();
            let k = 1 + ((m - 1) as f64 * kf) as usize;
            let t = select_evidence_greedy(m, k, |h| Ok(h.iter().map(|&i| values[i] * (i as f64 + 1.0).sqrt()).product::<f64>())).unwrap();
            let s = t.accepted_scores();
            prop_assert!(s.windows(2).all(|w| w[0] <= w[1]));
            let mut slots = t.evidence.slots.clone();
            slots.sort_unstable();
            slots.dedup();
            prop_assert_eq!(slots.len(), k);
        }
    }
}
