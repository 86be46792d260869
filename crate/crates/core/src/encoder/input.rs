//! Semi-structured input sequences.
//!
//! Answer-scoring layout (separators carry the segment of what precedes them):
//!
//! ```text
//! [CLS] q.. [SEP] t.. [SEP] left answer right [SEP] (left answer right [SEP])*
//!   Q   Q    Q    T    T    A-------------------A   O------------------------O
//! ```
//!
//! The evidence-scoring layout is the same without the `A` block.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::vocab::{Vocab, CLS_ID, MASK_ID, SEP_ID};
use crate::candidates::MBestRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Segment {
    Q = 0,
    T = 1,
    A = 2,
    O = 3,
}

impl Segment {
    pub const COUNT: usize = 4;

    pub fn letter(self) -> char {
        match self {
            Segment::Q => 'Q',
            Segment::T => 'T',
            Segment::A => 'A',
            Segment::O => 'O',
        }
    }
}

/// The flat two-segment baseline encoding reuses two rows of the segment
/// table: `A` for the scored answer, `Q` for everything else ("B").
pub const BASE_SEGMENT_A: Segment = Segment::A;
pub const BASE_SEGMENT_B: Segment = Segment::Q;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubSegment {
    Left = 0,
    Answer = 1,
    Right = 2,
    None = 3,
}

impl SubSegment {
    pub const COUNT: usize = 4;
}

/// One input position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    pub token: u32,
    pub segment: Segment,
    pub sub: SubSegment,
    /// Candidate score on candidate/evidence positions, 0 elsewhere.
    pub feature: f64,
    /// Token hidden for evidence scoring or MLM.
    pub masked: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InputSequence {
    pub slots: Vec<Slot>,
}

impl InputSequence {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn token_ids(&self) -> Vec<u32> {
        self.slots.iter().map(|s| s.token).collect()
    }

    /// One letter per position, e.g. `QQQQQTTTAAAAAAOOOO`.
    pub fn segment_string(&self) -> String {
        self.slots.iter().map(|s| s.segment.letter()).collect()
    }

    fn push(&mut self, token: u32, segment: Segment, sub: SubSegment, feature: f64) {
        self.slots.push(Slot { token, segment, sub, feature, masked: false });
    }
}

/// A candidate or evidence observation as vocabulary ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationInput {
    pub left: Vec<u32>,
    pub answer: Vec<u32>,
    pub right: Vec<u32>,
    pub feature: f64,
}

impl ObservationInput {
    fn len_capped(&self, cap: usize) -> usize {
        self.left.len().min(cap) + self.answer.len() + self.right.len().min(cap) + 1
    }

    fn max_context(&self) -> usize {
        self.left.len().max(self.right.len())
    }
}

/// How candidate scores become the feature channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Min-max normalized to [0, 1] within each M-best list (all 1 when
    /// every score is equal).
    #[default]
    MinMax,
    Raw,
}

/// A record mapped to vocabulary ids with per-candidate features.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedRecord {
    pub question: Vec<u32>,
    pub title: Vec<u32>,
    pub observations: Vec<ObservationInput>,
}

impl EncodedRecord {
    pub fn new(record: &MBestRecord, vocab: &Vocab, mode: FeatureMode) -> Self {
        let scores: Vec<f64> = record.candidates.iter().map(|c| c.score).collect();
        let features = match mode {
            FeatureMode::Raw => scores,
            FeatureMode::MinMax => {
                let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                scores
                    .iter()
                    .map(|s| if hi > lo { (s - lo) / (hi - lo) } else { 1.0 })
                    .collect()
            }
        };
        let observations = record
            .candidates
            .iter()
            .zip(features)
            .map(|(c, feature)| ObservationInput {
                left: vocab.ids(&c.left),
                answer: vocab.ids(&c.answer),
                right: vocab.ids(&c.right),
                feature,
            })
            .collect();
        EncodedRecord { question: vocab.ids(&record.question), title: vocab.ids(&record.title), observations }
    }

    pub fn evidence(&self, slots: &[usize]) -> Vec<&ObservationInput> {
        slots.iter().map(|&i| &self.observations[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InputError {
    #[error(
        "input does not fit in {max_len} positions even with no evidence and no context \
         (question {question}, title {title}, candidate answer {answer}; needs {needed})"
    )]
    Overflow { question: usize, title: usize, answer: usize, max_len: usize, needed: usize },
    #[error("cannot mask {requested} tokens, only {available} maskable")]
    TooManyMasks { requested: usize, available: usize },
}

fn assemble(
    question: &[u32],
    title: &[u32],
    candidate: Option<&ObservationInput>,
    evidence: &[&ObservationInput],
    mask_answers: bool,
    max_len: usize,
) -> Result<InputSequence, InputError> {
    let fixed = 3 + question.len() + title.len();
    let total = |n_ev: usize, cap: usize| {
        fixed
            + candidate.map_or(0, |c| c.len_capped(cap))
            + evidence[..n_ev].iter().map(|o| o.len_capped(cap)).sum::<usize>()
    };

    // Drop evidence from the end, then trim contexts from the outside in.
    let mut n_ev = evidence.len();
    while n_ev > 0 && total(n_ev, usize::MAX) > max_len {
        n_ev -= 1;
    }
    let widest = candidate
        .into_iter()
        .chain(evidence[..n_ev].iter().copied())
        .map(ObservationInput::max_context)
        .max()
        .unwrap_or(0);
    let mut cap = widest;
    while total(n_ev, cap) > max_len {
        if cap == 0 {
            return Err(InputError::Overflow {
                question: question.len(),
                title: title.len(),
                answer: candidate.map_or(0, |c| c.answer.len()),
                max_len,
                needed: total(n_ev, 0),
            });
        }
        cap -= 1;
    }

    let mut seq = InputSequence { slots: Vec::with_capacity(total(n_ev, cap)) };
    seq.push(CLS_ID, Segment::Q, SubSegment::None, 0.0);
    for &id in question {
        seq.push(id, Segment::Q, SubSegment::None, 0.0);
    }
    seq.push(SEP_ID, Segment::Q, SubSegment::None, 0.0);
    for &id in title {
        seq.push(id, Segment::T, SubSegment::None, 0.0);
    }
    seq.push(SEP_ID, Segment::T, SubSegment::None, 0.0);
    if let Some(c) = candidate {
        push_observation(&mut seq, c, Segment::A, cap, false);
    }
    for o in &evidence[..n_ev] {
        push_observation(&mut seq, o, Segment::O, cap, mask_answers);
    }
    Ok(seq)
}

fn push_observation(seq: &mut InputSequence, o: &ObservationInput, segment: Segment, cap: usize, mask: bool) {
    let f = o.feature;
    let left_skip = o.left.len().saturating_sub(cap);
    for &id in &o.left[left_skip..] {
        seq.push(id, segment, SubSegment::Left, f);
    }
    for &id in &o.answer {
        if mask {
            seq.slots.push(Slot { token: MASK_ID, segment, sub: SubSegment::Answer, feature: f, masked: true });
        } else {
            seq.push(id, segment, SubSegment::Answer, f);
        }
    }
    for &id in o.right.iter().take(cap) {
        seq.push(id, segment, SubSegment::Right, f);
    }
    seq.push(SEP_ID, segment, SubSegment::None, 0.0);
}

/// Input for scoring one candidate against an evidence set.
pub fn build_answer_input(
    question: &[u32],
    title: &[u32],
    candidate: &ObservationInput,
    evidence: &[&ObservationInput],
    max_len: usize,
) -> Result<InputSequence, InputError> {
    assemble(question, title, Some(candidate), evidence, false, max_len)
}

/// Input for scoring an evidence set on its own; `mask_answers` hides every
/// answer token inside the evidence.
pub fn build_evidence_input(
    question: &[u32],
    title: &[u32],
    evidence: &[&ObservationInput],
    mask_answers: bool,
    max_len: usize,
) -> Result<InputSequence, InputError> {
    assemble(question, title, None, evidence, mask_answers, max_len)
}

/// The flat baseline encoding `[CLS] a_i [SEP] q [SEP] a_1 [SEP] .. a_M [SEP]`
/// with `a_i` (and its `[CLS]`/`[SEP]`) in segment A and the rest in B.
/// Overflow is cut from the end.
pub fn mma_base_input(record: &EncodedRecord, index: usize, max_len: usize) -> InputSequence {
    let mut seq = InputSequence::default();
    seq.push(CLS_ID, BASE_SEGMENT_A, SubSegment::None, 0.0);
    for &id in &record.observations[index].answer {
        seq.push(id, BASE_SEGMENT_A, SubSegment::None, 0.0);
    }
    seq.push(SEP_ID, BASE_SEGMENT_A, SubSegment::None, 0.0);
    for &id in &record.question {
        seq.push(id, BASE_SEGMENT_B, SubSegment::None, 0.0);
    }
    seq.push(SEP_ID, BASE_SEGMENT_B, SubSegment::None, 0.0);
    for o in &record.observations {
        for &id in &o.answer {
            seq.push(id, BASE_SEGMENT_B, SubSegment::None, 0.0);
        }
        seq.push(SEP_ID, BASE_SEGMENT_B, SubSegment::None, 0.0);
    }
    seq.slots.truncate(max_len);
    seq
}

/// A hidden position and the token it held.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlmTarget {
    pub position: usize,
    pub token: u32,
}

/// Hides exactly `n_mask` non-special, not-yet-masked positions.
pub fn mlm_mask<R: Rng>(
    seq: &InputSequence,
    n_mask: usize,
    rng: &mut R,
) -> Result<(InputSequence, Vec<MlmTarget>), InputError> {
    let eligible: Vec<usize> = seq
        .slots
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.masked && !Vocab::is_special(s.token))
        .map(|(i, _)| i)
        .collect();
    if n_mask > eligible.len() {
        return Err(InputError::TooManyMasks { requested: n_mask, available: eligible.len() });
    }
    let mut picked: Vec<usize> = sample(rng, eligible.len(), n_mask).into_iter().map(|i| eligible[i]).collect();
    picked.sort_unstable();
    let mut out = seq.clone();
    let targets = picked
        .into_iter()
        .map(|position| {
            let slot = &mut out.slots[position];
            let token = slot.token;
            slot.token = MASK_ID;
            slot.masked = true;
            MlmTarget { position, token }
        })
        .collect();
    Ok((out, targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(l: usize, a: usize, r: usize, base: u32, feature: f64) -> ObservationInput {
        ObservationInput {
            left: (0..l as u32).map(|i| base + i).collect(),
            answer: (0..a as u32).map(|i| base + 20 + i).collect(),
            right: (0..r as u32).map(|i| base + 40 + i).collect(),
            feature,
        }
    }

    /// Hand layout: [CLS] q q q [SEP] t t [SEP] l l a r r [SEP] l a r [SEP]
    #[test]
    fn answer_layout_matches_hand_trace() {
        let cand = obs(2, 1, 2, 100, 0.7);
        let ev = obs(1, 1, 1, 200, 0.3);
        let seq = build_answer_input(&[10, 11, 12], &[13, 14], &cand, &[&ev], 256).unwrap();
        assert_eq!(seq.segment_string(), "QQQQQTTTAAAAAAOOOO");
        let ids = seq.token_ids();
        assert_eq!(ids, [CLS_ID, 10, 11, 12, SEP_ID, 13, 14, SEP_ID, 100, 101, 120, 140, 141, SEP_ID, 200, 220, 240, SEP_ID]);
        let subs: String = seq
            .slots
            .iter()
            .map(|s| match s.sub {
                SubSegment::Left => 'l',
                SubSegment::Answer => 'a',
                SubSegment::Right => 'r',
                SubSegment::None => '-',
            })
            .collect();
        assert_eq!(subs, "--------llarr-lar-");
        let feats: Vec<f64> = seq.slots.iter().map(|s| s.feature).collect();
        assert_eq!(&feats[8..13], &[0.7; 5]);
        assert_eq!(feats[13], 0.0);
        assert_eq!(&feats[14..17], &[0.3; 3]);
        assert!(feats[..8].iter().all(|&f| f == 0.0));
    }

    #[test]
    fn no_evidence_means_no_o_segment() {
        let seq = build_answer_input(&[10], &[11], &obs(1, 1, 1, 100, 1.0), &[], 256).unwrap();
        assert!(!seq.segment_string().contains('O'));
    }

    #[test]
    fn deterministic() {
        let cand = obs(2, 2, 2, 100, 0.5);
        let a = build_answer_input(&[1, 2], &[3], &cand, &[&cand], 64).unwrap();
        let b = build_answer_input(&[1, 2], &[3], &cand, &[&cand], 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn masking_touches_exactly_answer_positions() {
        let evs = [obs(2, 2, 1, 100, 0.2), obs(0, 3, 2, 300, 0.9)];
        let refs: Vec<&ObservationInput> = evs.iter().collect();
        let plain = build_evidence_input(&[5, 6], &[7], &refs, false, 64).unwrap();
        let masked = build_evidence_input(&[5, 6], &[7], &refs, true, 64).unwrap();
        assert_eq!(plain.len(), masked.len());
        let mut diffs = 0;
        for (p, m) in plain.slots.iter().zip(&masked.slots) {
            assert_eq!((p.segment, p.sub, p.feature), (m.segment, m.sub, m.feature));
            if p.sub == SubSegment::Answer {
                assert_eq!(m.token, MASK_ID);
                assert!(m.masked);
                diffs += 1;
            } else {
                assert_eq!(p, m);
            }
        }
        assert_eq!(diffs, 5);
    }

    #[test]
    fn truncation_drops_evidence_then_trims_context() {
        let cand = obs(3, 1, 3, 100, 1.0);
        let evs = [obs(3, 1, 3, 200, 0.5), obs(3, 1, 3, 300, 0.1)];
        let refs: Vec<&ObservationInput> = evs.iter().collect();
        // fixed 3 + 1 + 1 = 5, candidate 8, each evidence 8 → 29
        let seq = build_answer_input(&[1], &[2], &cand, &refs, 21).unwrap();
        assert_eq!(seq.len(), 21);
        assert_eq!(seq.segment_string().matches('O').count(), 8);
        // without evidence the candidate still needs 13; at 9 contexts shrink to 1 per side
        let seq = build_answer_input(&[1], &[2], &cand, &refs, 9).unwrap();
        assert_eq!(seq.token_ids(), [CLS_ID, 1, SEP_ID, 2, SEP_ID, 102, 120, 140, SEP_ID]);
        let err = build_answer_input(&[1, 1, 1], &[2], &cand, &refs, 8).unwrap_err();
        assert!(matches!(err, InputError::Overflow { needed: 9, .. }));
    }

    #[test]
    fn base_input_layout() {
        let rec = EncodedRecord {
            question: vec![50, 51],
            title: vec![60],
            observations: vec![obs(1, 2, 1, 100, 1.0), obs(1, 1, 1, 200, 0.0)],
        };
        let seq = mma_base_input(&rec, 1, 64);
        assert_eq!(seq.token_ids(), [CLS_ID, 220, SEP_ID, 50, 51, SEP_ID, 120, 121, SEP_ID, 220, SEP_ID]);
        assert_eq!(seq.segment_string(), "AAAQQQQQQQQ");
        assert!(seq.slots.iter().all(|s| s.sub == SubSegment::None && s.feature == 0.0));
        let cut = mma_base_input(&rec, 1, 5);
        assert_eq!(cut.token_ids(), &seq.token_ids()[..5]);
    }

    #[test]
    fn mlm_mask_counts_and_determinism() {
        let long = obs(60, 80, 58, 1000, 0.5);
        let seq = build_answer_input(&[], &[], &long, &[], 256).unwrap();
        let (same, t) = mlm_mask(&seq, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!((same, t.len()), (seq.clone(), 0));
        let (m1, t1) = mlm_mask(&seq, 30, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let (m2, t2) = mlm_mask(&seq, 30, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!((m1.clone(), t1.clone()), (m2, t2));
        assert_eq!(m1.slots.iter().filter(|s| s.masked).count(), 30);
        for t in &t1 {
            assert_eq!(seq.slots[t.position].token, t.token);
            assert_eq!(m1.slots[t.position].token, MASK_ID);
        }
        assert!(mlm_mask(&seq, 199, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }
}
