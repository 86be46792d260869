use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{index_predictions, judge, score_outcomes, EvalError, MatchResult, PredictedAnswer, QuestionOutcome};
use crate::candidates::{AnswerSpan, GoldAnnotationSet, Matcher, ANNOTATORS};

/// Who is being compared against the resampled annotators.
#[derive(Debug, Clone, Copy)]
pub enum BootstrapSubject<'a> {
    /// A system's predictions (missing questions count as abstentions).
    System(&'a [PredictedAnswer]),
    /// The held-out annotator itself.
    Annotator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Mean precision, recall and F1 over resamples.
    pub mean: MatchResult,
    /// Standard error of the mean F1.
    pub f1_std_error: f64,
    pub resamples: usize,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random stream for one (question, resample) pair. It does not depend on
/// the subject, so every system sees the same held-out annotator and the
/// same pseudo-gold for a given seed.
fn question_rng(seed: u64, resample: usize, question_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ splitmix(resample as u64)) ^ fnv1a(question_id)))
}

/// Held-out annotator index and the pseudo-gold drawn from the other four.
pub fn resample_gold(gold: &GoldAnnotationSet, seed: u64, resample: usize) -> (usize, GoldAnnotationSet) {
    let mut rng = question_rng(seed, resample, &gold.question_id);
    let held = rng.random_range(0..ANNOTATORS);
    let rest: Vec<&Option<AnswerSpan>> =
        gold.annotations().iter().enumerate().filter(|(i, _)| *i != held).map(|(_, a)| a).collect();
    let drawn = (0..ANNOTATORS).map(|_| rest[rng.random_range(0..rest.len())].clone()).collect();
    (held, GoldAnnotationSet::new(gold.question_id.clone(), drawn).expect("five annotations"))
}

/// Scores `subject` against `resamples` bootstrap replicates of the gold
/// annotations: per question one annotator is held out and five
/// annotations are redrawn with replacement from the remaining four.
pub fn bootstrap_compare(
    gold: &[GoldAnnotationSet],
    subject: BootstrapSubject<'_>,
    resamples: usize,
    seed: u64,
    matcher: Matcher,
) -> Result<BootstrapResult, EvalError> {
    if resamples == 0 {
        return Err(EvalError::NoResamples);
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(g) = gold.iter().find(|g| g.padded) {
        return Err(EvalError::TooFewAnnotations(g.question_id.clone()));
    }
    let answers: HashMap<&str, Option<&AnswerSpan>> = match subject {
        BootstrapSubject::System(p) => index_predictions(p, gold)?,
        BootstrapSubject::Annotator => HashMap::new(),
    };
    let per_resample: Vec<MatchResult> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let outcomes: Vec<QuestionOutcome> = gold
                .iter()
                .map(|g| {
                    let (held, pseudo) = resample_gold(g, seed, r);
                    let answer = match subject {
                        BootstrapSubject::System(_) => answers.get(g.question_id.as_str()).copied().flatten(),
                        BootstrapSubject::Annotator => g.annotations()[held].as_ref(),
                    };
                    judge(answer, &pseudo, matcher)
                })
                .collect();
            score_outcomes(&outcomes)
        })
        .collect();
    let n = resamples as f64;
    let mean = |f: fn(&MatchResult) -> f64| per_resample.iter().map(f).sum::<f64>() / n;
    let f1 = mean(|m| m.f1);
    let var = if resamples > 1 {
        per_resample.iter().map(|m| (m.f1 - f1).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(BootstrapResult {
        mean: MatchResult {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1,
            precision_undefined: per_resample.iter().all(|m| m.precision_undefined),
            recall_undefined: per_resample.iter().all(|m| m.recall_undefined),
            empty_convention: false,
        },
        f1_std_error: (var / n).sqrt(),
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::tokenize;

    fn span(start: u64) -> AnswerSpan {
        AnswerSpan { start, end: start + 1, tokens: tokenize("x") }
    }

    #[test]
    fn unanimous_gold_and_matching_prediction_scores_one() {
        let gold: Vec<GoldAnnotationSet> =
            (0..10).map(|i| GoldAnnotationSet::new(format!("q{i}"), vec![Some(span(i)); 5]).unwrap()).collect();
        let preds: Vec<PredictedAnswer> =
            (0..10).map(|i| PredictedAnswer { question_id: format!("q{i}"), answer: Some(span(i)) }).collect();
        for seed in 0..5 {
            let r = bootstrap_compare(&gold, BootstrapSubject::System(&preds), 20, seed, Matcher::ExactSpan).unwrap();
            assert_eq!(r.mean.f1, 1.0);
            assert_eq!(r.f1_std_error, 0.0);
        }
    }

    #[test]
    fn held_out_annotator_is_shared_across_subjects() {
        let g = GoldAnnotationSet::new("q".into(), (0..5).map(|i| Some(span(i))).collect()).unwrap();
        for r in 0..50 {
            assert_eq!(resample_gold(&g, 9, r), resample_gold(&g, 9, r));
            let (held, pseudo) = resample_gold(&g, 9, r);
            assert!(pseudo.non_null().all(|s| s.start != held as u64));
        }
    }

    #[test]
    fn rejects_padded_gold_and_zero_resamples() {
        let g = vec![GoldAnnotationSet::new("q".into(), vec![Some(span(1))]).unwrap()];
        assert_eq!(
            bootstrap_compare(&g, BootstrapSubject::Annotator, 5, 0, Matcher::ExactSpan),
            Err(EvalError::TooFewAnnotations("q".into()))
        );
        assert_eq!(bootstrap_compare(&g, BootstrapSubject::Annotator, 0, 0, Matcher::ExactSpan), Err(EvalError::NoResamples));
    }
}
