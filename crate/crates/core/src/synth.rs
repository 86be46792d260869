//! Synthetic M-best lists with a planted cue.
//!
//! On an answerable question exactly one candidate is correct. With
//! probability `p_cue` the token [`CUE`] sits immediately to the left of
//! that candidate's answer. No other candidate, and no candidate of an
//! unanswerable question, ever carries the cue, so a reader that sees
//! left context can find the answer and detect unanswerable questions.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{AnswerSpan, GoldAnnotationSet, MBestRecord, Observation, Token, ANNOTATORS};

pub const CUE: &str = "cue";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_questions: usize,
    /// Distinct words, the cue included.
    pub vocab_size: usize,
    /// Candidates per question.
    pub m: usize,
    /// Context tokens on each side of an answer.
    pub context_len: usize,
    pub p_cue: f64,
    pub answerable_fraction: f64,
    pub seed: u64,
    /// Prefix of question ids, so several splits can share a namespace.
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_questions: 2000,
            vocab_size: 200,
            m: 5,
            context_len: 6,
            p_cue: 1.0,
            answerable_fraction: 0.49,
            seed: 0,
            id_prefix: "q".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_questions == 0 || self.m == 0 || self.context_len == 0 {
            return Err("n_questions, m and context_len must be positive".into());
        }
        if self.vocab_size < 10 {
            return Err("vocab_size must be at least 10".into());
        }
        for (name, p) in [("p_cue", self.p_cue), ("answerable_fraction", self.answerable_fraction)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        Ok(())
    }
}

/// Generated records and gold, aligned by position.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub records: Vec<MBestRecord>,
    pub gold: Vec<GoldAnnotationSet>,
    /// Index (in the sorted list) of the correct candidate, per question.
    pub correct: Vec<Option<usize>>,
}

impl SynthData {
    pub fn mbest_jsonl(&self) -> String {
        self.records.iter().map(|r| r.to_json_line() + "\n").collect()
    }

    pub fn gold_jsonl(&self) -> String {
        self.gold.iter().map(|g| g.to_json_line() + "\n").collect()
    }
}

fn tok(s: &str) -> Token {
    Token::new(s).expect("generated words have no whitespace")
}

fn words<R: Rng>(rng: &mut R, n: usize, vocab: usize) -> Vec<Token> {
    (0..n).map(|_| tok(&format!("w{}", rng.random_range(0..vocab - 1)))).collect()
}

fn span_of(o: &Observation) -> AnswerSpan {
    AnswerSpan { start: o.span_start, end: o.span_end, tokens: o.answer.clone() }
}

pub fn synth_generate(config: &SynthConfig) -> Result<SynthData, String> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (v, k) = (config.vocab_size, config.context_len);
    let mut data = SynthData { records: Vec::new(), gold: Vec::new(), correct: Vec::new() };
    for q in 0..config.n_questions {
        let qid = format!("{}{q:05}", config.id_prefix);
        let answerable = rng.random_bool(config.answerable_fraction);
        let correct = answerable.then(|| rng.random_range(0..config.m));
        let cue = correct.is_some() && rng.random_bool(config.p_cue);
        let mut starts: Vec<u64> = rand::seq::index::sample(&mut rng, 40 * config.m, config.m)
            .into_iter()
            .map(|s| s as u64 * 10)
            .collect();
        starts.shuffle(&mut rng);
        let mut scores: Vec<f64> = (0..config.m).map(|_| rng.random::<f64>()).collect();
        scores.sort_by(|a, b| b.total_cmp(a));
        let candidates: Vec<Observation> = (0..config.m)
            .map(|i| {
                let len = rng.random_range(1..=3);
                let answer = words(&mut rng, len, v);
                let mut left = words(&mut rng, k, v);
                if cue && correct == Some(i) {
                    left[k - 1] = tok(CUE);
                }
                Observation {
                    left,
                    right: words(&mut rng, k, v),
                    score: scores[i],
                    span_start: starts[i],
                    span_end: starts[i] + answer.len() as u64,
                    answer,
                }
            })
            .collect();
        let record = MBestRecord::new(qid.clone(), words(&mut rng, 5, v), words(&mut rng, 2, v), candidates, None)
            .map_err(|e| e.to_string())?;
        // scores are distinct almost surely, so sorting keeps generation order
        let annotations = annotate(&mut rng, &record, correct);
        data.gold.push(GoldAnnotationSet::new(qid, annotations).map_err(|e| e.to_string())?);
        data.records.push(record);
        data.correct.push(correct);
    }
    Ok(data)
}

/// Five annotations. Answerable: 2 to 5 agree on the correct span, the rest
/// are NULL or pairwise-distinct other candidates. Unanswerable: no two
/// annotations agree.
fn annotate<R: Rng>(rng: &mut R, record: &MBestRecord, correct: Option<usize>) -> Vec<Option<AnswerSpan>> {
    let others: Vec<usize> = (0..record.m()).filter(|&i| Some(i) != correct).collect();
    let mut pool = others.clone();
    pool.shuffle(rng);
    let mut out = Vec::with_capacity(ANNOTATORS);
    if let Some(c) = correct {
        for _ in 0..rng.random_range(2..=ANNOTATORS) {
            out.push(Some(span_of(&record.candidates[c])));
        }
    }
    while out.len() < ANNOTATORS {
        if rng.random_bool(0.5) {
            if let Some(i) = pool.pop() {
                out.push(Some(span_of(&record.candidates[i])));
                continue;
            }
        }
        out.push(None);
    }
    out.shuffle(rng);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::{is_answerable, Matcher};

    #[test]
    fn gold_matches_construction() {
        let d = synth_generate(&SynthConfig { n_questions: 300, seed: 4, ..SynthConfig::default() }).unwrap();
        for ((r, g), c) in d.records.iter().zip(&d.gold).zip(&d.correct) {
            assert_eq!(is_answerable(g, Matcher::ExactSpan), c.is_some());
            for (i, cand) in r.candidates.iter().enumerate() {
                let has_cue = cand.left.last().is_some_and(|t| t.text() == CUE);
                assert_eq!(has_cue, Some(i) == *c);
                assert_eq!(g.support(&span_of(cand), Matcher::ExactSpan) >= 2, Some(i) == *c);
                assert!(cand.left.len() == 6 && cand.right.len() == 6);
            }
        }
    }

    #[test]
    fn answerable_fraction_is_close() {
        let d = synth_generate(&SynthConfig { n_questions: 10_000, answerable_fraction: 0.49, seed: 1, ..SynthConfig::default() })
            .unwrap();
        let frac = d.correct.iter().filter(|c| c.is_some()).count() as f64 / 10_000.0;
        assert!((frac - 0.49).abs() < 0.02, "{frac}");
    }

    #[test]
    fn same_seed_same_bytes() {
        let c = SynthConfig { n_questions: 50, seed: 9, ..SynthConfig::default() };
        let (a, b) = (synth_generate(&c).unwrap(), synth_generate(&c).unwrap());
        assert_eq!(a.mbest_jsonl(), b.mbest_jsonl());
        assert_eq!(a.gold_jsonl(), b.gold_jsonl());
        let other = synth_generate(&SynthConfig { seed: 10, ..c }).unwrap();
        assert_ne!(a.mbest_jsonl(), other.mbest_jsonl());
    }

    #[test]
    fn cue_free_when_p_cue_is_zero() {
        let d = synth_generate(&SynthConfig { n_questions: 100, p_cue: 0.0, ..SynthConfig::default() }).unwrap();
        assert!(d.records.iter().flat_map(|r| &r.candidates).all(|c| c.left.iter().all(|t| t.text() != CUE)));
    }
}
