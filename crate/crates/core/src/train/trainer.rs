use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use crate::candidates::{apply_condition, is_answerable, AnswerSpan, GoldAnnotationSet, MBestRecord, Matcher};
use crate::decoder::{
    evaluate_threshold, scored_questions, tune_threshold, DecodeError, MetaAnswerer, ScoredQuestion, Threshold,
    ThresholdChoice, Variant,
};
use crate::encoder::nn::all_finite;
use crate::encoder::{
    mlm_mask, mma_base_input, EncodeError, EncodedRecord, EncoderConfig, InputSequence, MlmTarget, ObservationInput, Vocab,
};
use crate::evaluation::MatchResult;
use crate::heads::{
    loss_total, make_alternate, mlm_pretrain_loss, sample_negatives, CompiledExample, LossBreakdown, MetaModel,
    ModelError, Optimizer, SampleError, TrainExample,
};

/// M-best records with their gold annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<MBestRecord>,
    pub gold: Vec<GoldAnnotationSet>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no gold annotations for question {0}")]
    MissingGold(String),
    #[error("training set has no examples")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("training diverged at step {step} ({what}); last good checkpoint: {}", last_checkpoint.as_ref().map_or("none".to_string(), |p| p.display().to_string()))]
    Diverged { step: usize, what: String, last_checkpoint: Option<PathBuf> },
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub phase: &'static str,
    pub step: usize,
    pub lr: f64,
    pub grad_norm: f64,
    pub losses: LossBreakdown,
    pub dev: Option<DevReport>,
}

/// Dev-set quality at the tuned threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DevReport {
    pub threshold: Threshold,
    pub result: MatchResult,
    /// Share of answerable questions whose best-scoring candidate is correct.
    pub accuracy: Option<f64>,
}

pub const METRICS_HEADER: &str =
    "phase,step,lr,grad_norm,total,answer,evidence,impossible,mlm,dev_precision,dev_recall,dev_f1,dev_accuracy,threshold";

impl MetricsRow {
    pub fn csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        let l = &self.losses;
        let d = self.dev.as_ref();
        format!(
            "{},{},{:.6e},{:.6},{:.6},{},{},{},{},{},{},{},{},{}",
            self.phase,
            self.step,
            self.lr,
            self.grad_norm,
            l.total,
            opt(l.answer),
            opt(l.evidence),
            opt(l.impossible),
            opt(l.mlm),
            opt(d.map(|d| d.result.precision)),
            opt(d.map(|d| d.result.recall)),
            opt(d.map(|d| d.result.f1)),
            opt(d.and_then(|d| d.accuracy)),
            d.map_or(String::new(), |d| match d.threshold.0 {
                t if t.is_finite() => format!("{t:.6}"),
                t if t > 0.0 => "inf".into(),
                _ => "-inf".into(),
            }),
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricsRow>,
    pub checkpoints_written: Vec<PathBuf>,
    pub dev: Option<DevReport>,
}

/// Scores `data`, tunes the threshold on it and reports quality there.
pub fn dev_report(
    answerer: &MetaAnswerer,
    data: &Dataset,
    matcher: Matcher,
) -> Result<(DevReport, Vec<ScoredQuestion>), DecodeError> {
    let preds = answerer.predict_all(&data.records, f64::NEG_INFINITY)?;
    let scored = scored_questions(&preds, &data.records, &data.gold, matcher)?;
    let ThresholdChoice { threshold, result } = tune_threshold(&scored)?;
    Ok((DevReport { threshold, result, accuracy: selection_accuracy(&scored) }, scored))
}

/// Fraction of answerable questions whose best candidate is correct.
pub fn selection_accuracy(scored: &[ScoredQuestion]) -> Option<f64> {
    let answerable: Vec<&ScoredQuestion> = scored.iter().filter(|q| q.answerable).collect();
    (!answerable.is_empty()).then(|| answerable.iter().filter(|q| q.correct).count() as f64 / answerable.len() as f64)
}

/// Quality of `answerer` on `data` at a fixed threshold.
pub fn evaluate_at(
    answerer: &MetaAnswerer,
    data: &Dataset,
    threshold: f64,
    matcher: Matcher,
) -> Result<DevReport, DecodeError> {
    let preds = answerer.predict_all(&data.records, f64::NEG_INFINITY)?;
    let scored = scored_questions(&preds, &data.records, &data.gold, matcher)?;
    Ok(DevReport {
        threshold: Threshold(threshold),
        result: evaluate_threshold(&scored, threshold),
        accuracy: selection_accuracy(&scored),
    })
}

struct ExampleRef {
    record: usize,
    candidate: usize,
    label: bool,
    answerable: bool,
}

struct Prepared {
    encoded: Vec<EncodedRecord>,
    examples: Vec<ExampleRef>,
}

fn prepare(data: &Dataset, config: &TrainConfig, views: &[MBestRecord], vocab: &Vocab) -> Result<Prepared, TrainError> {
    let gold: HashMap<&str, &GoldAnnotationSet> = data.gold.iter().map(|g| (g.question_id.as_str(), g)).collect();
    let mut examples = Vec::new();
    for (r, view) in views.iter().enumerate() {
        let g = gold.get(view.question_id.as_str()).ok_or_else(|| TrainError::MissingGold(view.question_id.clone()))?;
        let answerable = is_answerable(g, config.matcher);
        for (c, cand) in view.candidates.iter().enumerate() {
            let span = AnswerSpan { start: cand.span_start, end: cand.span_end, tokens: cand.answer.clone() };
            let label = g.support(&span, config.matcher) >= 2;
            examples.push(ExampleRef { record: r, candidate: c, label, answerable });
        }
    }
    let encoded = views.par_iter().map(|v| EncodedRecord::new(v, vocab, config.answerer.features)).collect();
    Ok(Prepared { encoded, examples })
}

fn build_vocab(views: &[MBestRecord], cap: usize) -> Vocab {
    let tokens = views.iter().flat_map(|v| {
        v.question
            .iter()
            .chain(&v.title)
            .chain(v.candidates.iter().flat_map(|c| c.left.iter().chain(&c.answer).chain(&c.right)))
    });
    Vocab::build(tokens, cap)
}

/// Draws evidence for one example and assembles the model inputs.
fn draw_example<R: Rng>(
    p: &Prepared,
    e: &ExampleRef,
    config: &TrainConfig,
    max_len: usize,
    rng: &mut R,
) -> Result<CompiledExample, TrainError> {
    let enc = &p.encoded[e.record];
    let mlm_seed = rng.random();
    if config.answerer.variant == Variant::Base {
        return Ok(CompiledExample {
            label: e.label,
            answerable: e.answerable,
            answer_input: mma_base_input(enc, e.candidate, max_len),
            evidence_pair: None,
            mlm_seed,
        });
    }
    let m = enc.observations.len();
    let pool: Vec<usize> = (0..m).filter(|&i| config.answerer.allow_self_evidence || i != e.candidate).collect();
    let k = config.answerer.k.min(pool.len());
    let mut h: Vec<usize> = sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
    h.sort_unstable();
    let alternate = if config.weights.evidence > 0.0 && k > 0 && pool.len() > k {
        Some(make_alternate(&h, &pool, rng)?)
    } else {
        None
    };
    let obs = |slots: &[usize]| -> Vec<ObservationInput> { slots.iter().map(|&i| enc.observations[i].clone()).collect() };
    let example = TrainExample {
        label: e.label,
        answerable: e.answerable,
        question: enc.question.clone(),
        title: enc.title.clone(),
        candidate: enc.observations[e.candidate].clone(),
        evidence: obs(&h),
        alternate: alternate.as_deref().map(obs),
        mlm_seed,
    };
    example.compile(max_len, config.model.mask_evidence_answers).map_err(|e| TrainError::Model(e.into()))
}

struct Run<'a> {
    out_dir: Option<&'a Path>,
    metrics: Option<BufWriter<File>>,
    rows: Vec<MetricsRow>,
    written: Vec<PathBuf>,
}

impl Run<'_> {
    fn log(&mut self, row: MetricsRow) -> Result<(), TrainError> {
        if let (Some(w), Some(dir)) = (self.metrics.as_mut(), self.out_dir) {
            let path = dir.join("metrics.csv");
            writeln!(w, "{}", row.csv()).and_then(|_| w.flush()).map_err(|source| TrainError::Io { path, source })?;
        }
        self.rows.push(row);
        Ok(())
    }

    fn checkpoint(&mut self, ckpt: &Checkpoint, name: &str) -> Result<(), TrainError> {
        if let Some(dir) = self.out_dir {
            let path = dir.join(name);
            ckpt.save(&path).map_err(|source| TrainError::Io { path: path.clone(), source })?;
            self.written.push(path);
        }
        Ok(())
    }

    fn diverged(&self, step: usize, what: &str) -> TrainError {
        TrainError::Diverged { step, what: what.to_string(), last_checkpoint: self.written.last().cloned() }
    }
}

/// Trains a model on `train`. With `dev`, the decision threshold is tuned
/// there and dev quality is logged at every evaluation step. With
/// `out_dir`, `metrics.csv` and checkpoints are written into it.
pub fn train(
    train: &Dataset,
    dev: Option<&Dataset>,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    config.validate().map_err(TrainError::Config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let settings = &config.answerer;
    let views: Vec<MBestRecord> = train
        .records
        .iter()
        .map(|r| apply_condition(&r.truncated(settings.m), settings.condition, settings.window).record)
        .collect();
    let vocab = build_vocab(&views, config.vocab_cap);
    let encoder = EncoderConfig { vocab_size: vocab.len(), ..config.encoder.clone() };
    let mut model = MetaModel::new(encoder, config.model.clone(), &mut rng);
    let prepared = prepare(train, config, &views, &vocab)?;
    if prepared.examples.is_empty() {
        return Err(TrainError::Empty);
    }
    let max_len = model.max_len();

    let mut run = Run { out_dir, metrics: None, rows: Vec::new(), written: Vec::new() };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|source| TrainError::Io { path: dir.to_path_buf(), source })?;
        let path = dir.join("metrics.csv");
        let mut w = BufWriter::new(File::create(&path).map_err(|source| TrainError::Io { path: path.clone(), source })?);
        writeln!(w, "{METRICS_HEADER}").map_err(|source| TrainError::Io { path, source })?;
        run.metrics = Some(w);
    }
    let every = config.eval_every.max(1);

    if config.pretrain_steps > 0 && config.pretrain_masks > 0 {
        let mut opt = Optimizer::new(config.optimizer.clone(), &model, config.pretrain_steps);
        let (mut acc, mut n) = (0.0, 0);
        for step in 0..config.pretrain_steps {
            let mut batch: Vec<(InputSequence, Vec<MlmTarget>)> = Vec::with_capacity(config.batch_size);
            for _ in 0..config.batch_size {
                let e = &prepared.examples[rng.random_range(0..prepared.examples.len())];
                let ex = draw_example(&prepared, e, config, max_len, &mut rng)?;
                let eligible =
                    ex.answer_input.slots.iter().filter(|s| !s.masked && !Vocab::is_special(s.token)).count();
                let masked = mlm_mask(&ex.answer_input, config.pretrain_masks.min(eligible), &mut rng)
                    .map_err(|e| TrainError::Model(e.into()))?;
                batch.push(masked);
            }
            let (loss, grads) = match mlm_pretrain_loss(&model, &batch, true) {
                Err(ModelError::Encode(EncodeError::NonFinite(at))) => {
                    return Err(run.diverged(step, &format!("non-finite activations in {at}")))
                }
                other => other?,
            };
            let grads = grads.expect("requested");
            if !loss.is_finite() || !all_finite(&grads) {
                return Err(run.diverged(step, "masked-LM pretraining loss is not finite"));
            }
            let info = opt.step(&mut model, &grads);
            acc += loss;
            n += 1;
            if (step + 1) % every == 0 || step + 1 == config.pretrain_steps {
                let losses = LossBreakdown { mlm: Some(acc / n as f64), total: acc / n as f64, ..LossBreakdown::default() };
                run.log(MetricsRow { phase: "pretrain", step: step + 1, lr: info.lr, grad_norm: info.grad_norm, losses, dev: None })?;
                (acc, n) = (0.0, 0);
            }
        }
    }

    let labels: Vec<bool> = prepared.examples.iter().map(|e| e.label).collect();
    let mut opt = Optimizer::new(config.optimizer.clone(), &model, config.steps);
    let mut epoch = 0;
    let mut order = epoch_order(&labels, config, epoch, &mut rng);
    let mut cursor = 0;
    let mut window: Vec<LossBreakdown> = Vec::new();
    let mut last_dev = None;
    let mut threshold = None;
    for step in 0..config.steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size {
            if cursor == order.len() {
                epoch += 1;
                order = epoch_order(&labels, config, epoch, &mut rng);
                cursor = 0;
            }
            let e = &prepared.examples[order[cursor]];
            cursor += 1;
            batch.push(draw_example(&prepared, e, config, max_len, &mut rng)?);
        }
        let (losses, grads) = match loss_total(&model, &batch, &config.weights) {
            Err(ModelError::Encode(EncodeError::NonFinite(at))) => {
                return Err(run.diverged(step, &format!("non-finite activations in {at}")))
            }
            other => other?,
        };
        if !losses.is_finite() || !all_finite(&grads) {
            return Err(run.diverged(step, "loss or gradient is not finite"));
        }
        let info = opt.step(&mut model, &grads);
        if !all_finite(&model) {
            return Err(run.diverged(step, "parameters are not finite"));
        }
        window.push(losses);
        let done = step + 1;
        if done % every == 0 || done == config.steps {
            let dev_now = match dev {
                Some(d) => {
                    let answerer = MetaAnswerer { model: model.clone(), vocab: vocab.clone(), settings: settings.clone() };
                    let (report, _) = dev_report(&answerer, d, config.matcher)?;
                    threshold = Some(report.threshold);
                    Some(report)
                }
                None => None,
            };
            last_dev = dev_now.or(last_dev);
            run.log(MetricsRow { phase: "train", step: done, lr: info.lr, grad_norm: info.grad_norm, losses: mean(&window), dev: dev_now })?;
            window.clear();
        }
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done != config.steps {
            let ckpt = Checkpoint::new(done, resolved(config, &model), vocab.clone(), model.clone(), threshold);
            run.checkpoint(&ckpt, &format!("checkpoint-{done:06}.json"))?;
        }
    }
    let ckpt = Checkpoint::new(config.steps, resolved(config, &model), vocab, model, threshold);
    run.checkpoint(&ckpt, "model.json")?;
    Ok(TrainOutcome { checkpoint: ckpt, metrics: run.rows, checkpoints_written: run.written, dev: last_dev })
}

fn resolved(config: &TrainConfig, model: &MetaModel) -> TrainConfig {
    TrainConfig { encoder: model.encoder.config.clone(), ..config.clone() }
}

fn epoch_order<R: Rng>(labels: &[bool], config: &TrainConfig, epoch: usize, rng: &mut R) -> Vec<usize> {
    let mut order = sample_negatives(labels, config.negative_ratio, epoch, config.seed);
    order.shuffle(rng);
    order
}

fn mean(window: &[LossBreakdown]) -> LossBreakdown {
    let n = window.len().max(1) as f64;
    let avg = |f: fn(&LossBreakdown) -> Option<f64>| {
        let vals: Vec<f64> = window.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    LossBreakdown {
        answer: avg(|l| l.answer),
        evidence: avg(|l| l.evidence),
        impossible: avg(|l| l.impossible),
        mlm: avg(|l| l.mlm),
        total: window.iter().map(|l| l.total).sum::<f64>() / n,
    }
}
