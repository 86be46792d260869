use metaqa_core::candidates::{Condition, MBestRecord};
use metaqa_core::decoder::{
    choose, evaluate_threshold, tune_threshold, AnswererSettings, Evidence, MetaAnswerer, ScoredQuestion,
};
use metaqa_core::encoder::{EncodedRecord, EncoderConfig, Vocab};
use metaqa_core::heads::{MetaModel, ModelOptions};
use metaqa_core::synth::{synth_generate, SynthConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setup(settings: AnswererSettings) -> (MetaAnswerer, Vec<MBestRecord>) {
    let d = synth_generate(&SynthConfig { n_questions: 10, vocab_size: 30, ..SynthConfig::default() }).unwrap();
    let tokens: Vec<_> = d
        .records
        .iter()
        .flat_map(|r| r.question.iter().chain(&r.title).chain(r.candidates.iter().flat_map(|c| c.left.iter().chain(&c.answer).chain(&c.right))))
        .cloned()
        .collect();
    let vocab = Vocab::build(&tokens, 100);
    let config = EncoderConfig { vocab_size: vocab.len(), ..EncoderConfig::default() };
    let model = MetaModel::new(config, ModelOptions::default(), &mut ChaCha8Rng::seed_from_u64(3));
    (MetaAnswerer { model, vocab, settings }, d.records)
}

fn context(m: usize, k: usize) -> AnswererSettings {
    AnswererSettings { condition: Condition::Context, window: 3, m, k, ..AnswererSettings::default() }
}

#[test]
fn scores_cover_every_candidate_and_are_deterministic() {
    let (a, records) = setup(context(5, 3));
    for r in &records {
        let s = a.score(r).unwrap();
        assert_eq!(s.scores.len(), 5);
        assert!(s.scores.iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(s, a.score(r).unwrap());
        let trace = s.evidence.unwrap();
        assert!(trace.accepted_scores().windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn k_equal_m_is_plain_rescoring() {
    let (a, records) = setup(context(4, 4));
    for r in &records {
        let s = a.score(r).unwrap();
        assert_eq!(s.evidence.unwrap().evidence, Evidence::top(4));
    }
}

#[test]
fn duplicate_candidates_score_equally() {
    let (a, records) = setup(context(5, 5));
    let mut r = records[0].clone();
    let copy = r.candidates[1].clone();
    r.candidates[3] = metaqa_core::candidates::Observation { span_start: 999, span_end: 1000, ..copy };
    let s = a.score(&r).unwrap().scores;
    assert_eq!(s[1], s[3]);
}

#[test]
fn scores_depend_on_the_evidence() {
    let (a, records) = setup(context(5, 2));
    let enc = EncodedRecord::new(&a.view(&records[0]), &a.vocab, a.settings.features);
    let score = |slots: &[usize]| a.model.p_answer(&enc.question, &enc.title, &enc.observations[0], &enc.evidence(slots)).unwrap();
    assert_ne!(score(&[0, 1]), score(&[0, 2]));
}

#[test]
fn self_evidence_flag_changes_scores() {
    let (a, records) = setup(context(5, 5));
    let mut b = a.clone();
    b.settings.allow_self_evidence = false;
    assert_ne!(a.score(&records[0]).unwrap().scores, b.score(&records[0]).unwrap().scores);
}

#[test]
fn records_shorter_than_k_still_decode() {
    let (a, records) = setup(context(5, 3));
    let short = records[0].truncated(2);
    let s = a.score(&short).unwrap();
    assert_eq!(s.scores.len(), 2);
    assert_eq!(s.evidence.unwrap().evidence.len(), 2);
}

fn brute_best(dev: &[ScoredQuestion]) -> f64 {
    let mut ts: Vec<f64> = dev.iter().map(|q| q.max_score).collect();
    ts.push(f64::INFINITY);
    ts.push(f64::NEG_INFINITY);
    ts.iter().map(|&t| evaluate_threshold(dev, t).f1).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn raising_the_threshold_never_adds_an_answer(
        scores in proptest::collection::vec(0.0f64..1.0, 1..6),
        t1 in 0.0f64..1.0,
        t2 in 0.0f64..1.0,
    ) {
        let starts: Vec<u64> = (0..scores.len() as u64).collect();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        if choose(&scores, &starts, hi).is_some() {
            prop_assert!(choose(&scores, &starts, lo).is_some());
        }
    }

    #[test]
    fn tuning_matches_a_full_sweep(
        dev in proptest::collection::vec((0u8..20, any::<bool>(), any::<bool>()), 1..40),
    ) {
        let dev: Vec<ScoredQuestion> = dev
            .into_iter()
            .map(|(s, answerable, correct)| ScoredQuestion { max_score: s as f64 / 20.0, answerable, correct: answerable && correct })
            .collect();
        let choice = tune_threshold(&dev).unwrap();
        prop_assert_eq!(choice.result.f1, brute_best(&dev));
        prop_assert_eq!(evaluate_threshold(&dev, choice.threshold.0).f1, choice.result.f1);
    }
}
