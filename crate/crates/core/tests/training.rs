use metaqa_core::candidates::Condition;
use metaqa_core::decoder::Variant;
use metaqa_core::encoder::nn::{bce_with_logit, Params};
use metaqa_core::encoder::{EncoderConfig, ObservationInput};
use metaqa_core::heads::{loss_value, LossWeights, MetaModel, ModelOptions, OptimizerConfig, TrainExample};
use metaqa_core::synth::{synth_generate, SynthConfig};
use metaqa_core::train::{train, Checkpoint, CheckpointError, Dataset, Preset, TrainConfig, TrainError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn data(n: usize, seed: u64) -> Dataset {
    let d = synth_generate(&SynthConfig { n_questions: n, vocab_size: 40, seed, ..SynthConfig::default() }).unwrap();
    Dataset { records: d.records, gold: d.gold }
}

fn small() -> TrainConfig {
    let mut c = Preset::AnswerOnly.config();
    c.answerer.condition = Condition::Context;
    c.answerer.window = 2;
    c.encoder = EncoderConfig { d_token: 8, d_segment: 4, d_sub_segment: 4, d_feature: 4, d_position: 4, max_len: 64, heads: 2, ffn: 16, ..EncoderConfig::default() };
    c.steps = 12;
    c.batch_size = 4;
    c.pretrain_steps = 0;
    c.eval_every = 4;
    c
}

#[test]
fn same_seed_same_checkpoint() {
    let d = data(30, 1);
    let a = train(&d, Some(&d), &small(), None).unwrap();
    let b = train(&d, Some(&d), &small(), None).unwrap();
    assert_eq!(a.checkpoint, b.checkpoint);
    assert_eq!(a.metrics, b.metrics);
    let mut other = small();
    other.seed = 5;
    assert_ne!(train(&d, None, &other, None).unwrap().checkpoint.model, a.checkpoint.model);
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let d = data(20, 2);
    let mut c = small();
    c.optimizer = OptimizerConfig { lr: 0.0, ..OptimizerConfig::default() };
    c.pretrain_steps = 3;
    c.weights.mlm = 1.0;
    c.weights.evidence = 1.0;
    let trained = train(&d, None, &c, None).unwrap().checkpoint.model;
    c.steps = 0;
    c.pretrain_steps = 0;
    let initial = train(&d, None, &c, None).unwrap().checkpoint.model;
    assert_eq!(trained, initial);
}

#[test]
fn divergence_reports_the_last_checkpoint() {
    let d = data(20, 3);
    let dir = tempfile::tempdir().unwrap();
    let mut c = small();
    c.steps = 8;
    c.checkpoint_every = 2;
    c.optimizer = OptimizerConfig { lr: 1e-3, warmup_steps: 0, linear_decay: false, clip_norm: None, ..OptimizerConfig::default() };
    // fine for two steps, then blows up
    let good = train(&d, None, &TrainConfig { steps: 2, ..c.clone() }, None).unwrap();
    assert!(good.checkpoint.validate().is_ok());
    c.optimizer.lr = 1e306;
    match train(&d, None, &c, Some(dir.path())) {
        Err(TrainError::Diverged { step, last_checkpoint, .. }) => {
            assert!(step < 8);
            if let Some(p) = last_checkpoint {
                Checkpoint::load(&p).unwrap();
            }
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn checkpoints_round_trip_and_validate() {
    let d = data(20, 4);
    let dir = tempfile::tempdir().unwrap();
    let mut c = small();
    c.checkpoint_every = 4;
    let out = train(&d, Some(&d), &c, Some(dir.path())).unwrap();
    assert_eq!(out.checkpoints_written.len(), 3);
    let loaded = Checkpoint::load(&dir.path().join("model.json")).unwrap();
    assert_eq!(loaded, out.checkpoint);
    assert!(loaded.threshold.is_some());
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("train,4,"));

    let mut broken = out.checkpoint.clone();
    broken.vocab = metaqa_core::encoder::Vocab::from(vec!["[PAD]".to_string()]);
    assert!(matches!(Checkpoint::from_json(&broken.to_json()), Err(CheckpointError::Invalid(_))));
    let mut wrong_version = out.checkpoint.clone();
    wrong_version.version = 99;
    assert!(matches!(Checkpoint::from_json(&wrong_version.to_json()), Err(CheckpointError::Version(99))));
    assert!(matches!(Checkpoint::from_json("{}"), Err(CheckpointError::Json(_))));
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().contains(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn impossibility_head_is_not_used_when_decoding() {
    let d = data(20, 6);
    let out = train(&d, None, &small(), None).unwrap();
    let a = out.checkpoint.answerer();
    let mut b = a.clone();
    for (_, t) in b.model.heads.impossible.tensors_mut() {
        t.fill(f64::NAN);
    }
    for r in &d.records {
        assert_eq!(a.predict(r, 0.5).unwrap(), b.predict(r, 0.5).unwrap());
    }
}

/// Every context repeats its answer, so masked tokens are recoverable.
fn echo_data(n: usize) -> Dataset {
    use metaqa_core::candidates::{tokenize, AnswerSpan, GoldAnnotationSet, MBestRecord, Observation};
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut records = Vec::new();
    let mut gold = Vec::new();
    for q in 0..n {
        let cands = (0..5u64)
            .map(|i| {
                let a = format!("w{} w{}", rng.random_range(0..30), rng.random_range(0..30));
                Observation {
                    left: tokenize(&a),
                    answer: tokenize(&a),
                    right: tokenize(&a),
                    score: 1.0 - i as f64 / 10.0,
                    span_start: i * 10,
                    span_end: i * 10 + 2,
                }
            })
            .collect();
        let r = MBestRecord::new(format!("e{q}"), tokenize("x y"), tokenize("t"), cands, None).unwrap();
        let span = AnswerSpan { start: 0, end: 2, tokens: r.candidates[0].answer.clone() };
        gold.push(GoldAnnotationSet::new(r.question_id.clone(), vec![Some(span.clone()), Some(span)]).unwrap());
        records.push(r);
    }
    Dataset { records, gold }
}

#[test]
fn mlm_only_training_lowers_the_loss() {
    let d = echo_data(60);
    let mut c = small();
    c.weights = LossWeights::new(0.0, 0.0, 0.0, 1.0);
    c.steps = 0;
    c.pretrain_steps = 240;
    c.pretrain_masks = 3;
    c.batch_size = 8;
    c.eval_every = 40;
    c.optimizer = OptimizerConfig { kind: metaqa_core::heads::OptimizerKind::Adam, lr: 3e-3, warmup_steps: 10, ..OptimizerConfig::default() };
    let out = train(&d, None, &c, None).unwrap();
    let curve: Vec<f64> = out.metrics.iter().map(|m| m.losses.mlm.unwrap()).collect();
    assert_eq!(curve.len(), 6);
    assert!(curve.windows(2).all(|w| w[1] < w[0]), "{curve:?}");
}

#[test]
fn base_variant_trains_and_predicts() {
    let d = data(20, 8);
    let mut c = small();
    c.answerer.variant = Variant::Base;
    c.weights = LossWeights::new(1.0, 0.0, 0.0, 0.0);
    let out = train(&d, Some(&d), &c, None).unwrap();
    let a = out.checkpoint.answerer();
    let s = a.score(&d.records[0]).unwrap();
    assert!(s.evidence.is_none());
    assert_eq!(s.scores.len(), 5);
    c.weights.evidence = 1.0;
    assert!(matches!(train(&d, None, &c, None), Err(TrainError::Config(_))));
}

fn model(seed: u64) -> MetaModel {
    let config = EncoderConfig { vocab_size: 30, d_token: 8, d_segment: 4, d_sub_segment: 4, d_feature: 4, d_position: 4, max_len: 48, heads: 2, ffn: 16, ..EncoderConfig::default() };
    MetaModel::new(config, ModelOptions::default(), &mut ChaCha8Rng::seed_from_u64(seed))
}

fn example<R: Rng>(rng: &mut R, label: bool) -> TrainExample {
    let mut obs = || ObservationInput {
        left: vec![rng.random_range(5..30)],
        answer: vec![rng.random_range(5..30), rng.random_range(5..30)],
        right: vec![rng.random_range(5..30)],
        feature: rng.random(),
    };
    let evidence = vec![obs(), obs()];
    let alternate = vec![evidence[0].clone(), obs()];
    TrainExample {
        label,
        answerable: label,
        question: vec![5, 6],
        title: vec![7],
        candidate: obs(),
        evidence,
        alternate: Some(alternate),
        mlm_seed: 1,
    }
}

#[test]
fn answer_loss_is_mean_cross_entropy_of_p_answer() {
    let m = model(1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let raw: Vec<TrainExample> = (0..6).map(|i| example(&mut rng, i % 2 == 0)).collect();
    let batch: Vec<_> = raw.iter().map(|e| e.compile(48, true).unwrap()).collect();
    let got = loss_value(&m, &batch, &LossWeights::new(1.0, 0.0, 0.0, 0.0)).unwrap().answer.unwrap();
    let expected = raw
        .iter()
        .map(|e| {
            let h: Vec<&ObservationInput> = e.evidence.iter().collect();
            let p = m.p_answer(&e.question, &e.title, &e.candidate, &h).unwrap();
            -(if e.label { p.ln() } else { (1.0 - p).ln() })
        })
        .sum::<f64>()
        / raw.len() as f64;
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    assert_eq!(bce_with_logit(0.0, true).0, std::f64::consts::LN_2);
}

#[test]
fn evidence_loss_ignores_which_set_is_called_h() {
    let m = model(3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let raw: Vec<TrainExample> = (0..5).map(|i| example(&mut rng, i % 2 == 1)).collect();
    let swapped: Vec<TrainExample> = raw
        .iter()
        .map(|e| TrainExample { evidence: e.alternate.clone().unwrap(), alternate: Some(e.evidence.clone()), ..e.clone() })
        .collect();
    let w = LossWeights::new(0.0, 1.0, 0.0, 0.0);
    let compile = |v: &[TrainExample]| v.iter().map(|e| e.compile(48, true).unwrap()).collect::<Vec<_>>();
    let a = loss_value(&m, &compile(&raw), &w).unwrap().evidence.unwrap();
    let b = loss_value(&m, &compile(&swapped), &w).unwrap().evidence.unwrap();
    assert!((a - b).abs() < 1e-12, "{a} vs {b}");
}

#[test]
fn zero_weight_makes_a_loss_insensitive_to_its_own_inputs() {
    let m = model(5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let raw: Vec<TrainExample> = (0..4).map(|i| example(&mut rng, i % 2 == 0)).collect();
    let w = LossWeights::new(1.0, 0.0, 1.0, 0.0);
    let base: Vec<_> = raw.iter().map(|e| e.compile(48, true).unwrap()).collect();
    let changed: Vec<_> = raw
        .iter()
        .map(|e| {
            let mut alt = e.alternate.clone().unwrap();
            alt[1].answer = vec![29, 28, 27];
            TrainExample { alternate: Some(alt), ..e.clone() }.compile(48, true).unwrap()
        })
        .collect();
    assert_eq!(loss_value(&m, &base, &w).unwrap().total, loss_value(&m, &changed, &w).unwrap().total);
}
