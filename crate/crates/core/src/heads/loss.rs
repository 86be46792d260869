use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{MetaModel, ModelError};
use super::sampling::pseudo_label;
use crate::encoder::nn::{add_scaled, bce_with_logit, sigmoid};
use crate::encoder::{
    build_answer_input, build_evidence_input, mlm_mask, InputError, InputSequence, MlmTarget, ObservationInput,
};
use crate::encoder::Vocab;

/// Weights of the four training losses. A zero weight skips that loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub answer: f64,
    pub evidence: f64,
    pub impossible: f64,
    pub mlm: f64,
}

impl LossWeights {
    pub fn new(answer: f64, evidence: f64, impossible: f64, mlm: f64) -> Self {
        LossWeights { answer, evidence, impossible, mlm }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, w) in [("answer", self.answer), ("evidence", self.evidence), ("impossible", self.impossible), ("mlm", self.mlm)] {
            if !w.is_finite() || w < 0.0 {
                return Err(format!("loss weight {name} must be finite and non-negative, got {w}"));
            }
        }
        Ok(())
    }
}

/// One candidate with its evidence, in vocabulary ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    /// Whether the candidate is a correct answer.
    pub label: bool,
    /// Whether the question has any correct answer.
    pub answerable: bool,
    pub question: Vec<u32>,
    pub title: Vec<u32>,
    pub candidate: ObservationInput,
    pub evidence: Vec<ObservationInput>,
    /// The evidence set with one observation swapped, for the evidence loss.
    pub alternate: Option<Vec<ObservationInput>>,
    pub mlm_seed: u64,
}

/// Model inputs for one example, built once per batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExample {
    pub label: bool,
    pub answerable: bool,
    pub answer_input: InputSequence,
    pub evidence_pair: Option<EvidencePair>,
    pub mlm_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvidencePair {
    /// Evidence-only input for `h`.
    pub evidence: InputSequence,
    /// Evidence-only input for `h'`.
    pub alternate: InputSequence,
    /// Answer input with `h'` in place of `h`.
    pub alternate_answer: InputSequence,
}

impl TrainExample {
    pub fn compile(&self, max_len: usize, mask_evidence_answers: bool) -> Result<CompiledExample, InputError> {
        let h: Vec<&ObservationInput> = self.evidence.iter().collect();
        let answer_input = build_answer_input(&self.question, &self.title, &self.candidate, &h, max_len)?;
        let evidence_pair = match &self.alternate {
            Some(alt) => {
                let h2: Vec<&ObservationInput> = alt.iter().collect();
                Some(EvidencePair {
                    evidence: build_evidence_input(&self.question, &self.title, &h, mask_evidence_answers, max_len)?,
                    alternate: build_evidence_input(&self.question, &self.title, &h2, mask_evidence_answers, max_len)?,
                    alternate_answer: build_answer_input(&self.question, &self.title, &self.candidate, &h2, max_len)?,
                })
            }
            None => None,
        };
        Ok(CompiledExample {
            label: self.label,
            answerable: self.answerable,
            answer_input,
            evidence_pair,
            mlm_seed: self.mlm_seed,
        })
    }
}

/// Batch-mean value of each loss; `None` when the loss was skipped (zero
/// weight or nothing to score).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub answer: Option<f64>,
    pub evidence: Option<f64>,
    pub impossible: Option<f64>,
    pub mlm: Option<f64>,
    pub total: f64,
}

impl LossBreakdown {
    fn finish(mut self, w: &LossWeights) -> Self {
        self.total = w.answer * self.answer.unwrap_or(0.0)
            + w.evidence * self.evidence.unwrap_or(0.0)
            + w.impossible * self.impossible.unwrap_or(0.0)
            + w.mlm * self.mlm.unwrap_or(0.0);
        self
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite()
            && [self.answer, self.evidence, self.impossible, self.mlm].iter().all(|l| l.is_none_or(f64::is_finite))
    }
}

/// Number of tokens hidden for masked-LM co-training, per example.
pub const COTRAIN_MASKS: usize = 1;

#[derive(Default)]
struct Partial {
    answer: f64,
    impossible: f64,
    evidence: f64,
    evidence_count: usize,
    mlm: f64,
    mlm_count: usize,
}

struct Scales {
    answer: f64,
    impossible: f64,
    evidence: f64,
    mlm: f64,
}

fn mlm_eligible(seq: &InputSequence) -> bool {
    seq.slots.iter().any(|s| !s.masked && !Vocab::is_special(s.token))
}

fn p_given(label: bool, p: f64) -> f64 {
    if label {
        p
    } else {
        1.0 - p
    }
}

fn example_pass(
    model: &MetaModel,
    ex: &CompiledExample,
    w: &LossWeights,
    scales: &Scales,
    g: &mut MetaModel,
) -> Result<Partial, ModelError> {
    let mut part = Partial::default();
    let enc = &model.encoder;
    let heads = &model.heads;

    let use_mlm = w.mlm > 0.0 && mlm_eligible(&ex.answer_input);
    let (seq, targets): (InputSequence, Vec<MlmTarget>) = if use_mlm {
        mlm_mask(&ex.answer_input, COTRAIN_MASKS, &mut ChaCha8Rng::seed_from_u64(ex.mlm_seed))?
    } else {
        (ex.answer_input.clone(), Vec::new())
    };
    let (encoding, cache) = enc.forward(&seq)?;
    let mut d_states = Array2::zeros(encoding.states.dim());

    let (la, ca) = heads.answer.forward(&encoding.cls);
    let (loss_a, dla) = bce_with_logit(la, ex.label);
    part.answer = loss_a;
    let (li, ci) = heads.impossible.forward(&encoding.cls);
    let (loss_i, dli) = bce_with_logit(li, !ex.answerable);
    part.impossible = loss_i;
    let mut d_cls = ndarray::Array1::zeros(encoding.cls.len());
    if w.answer > 0.0 {
        d_cls += &heads.answer.backward(&ca, dla * scales.answer, &mut g.heads.answer);
    }
    if w.impossible > 0.0 {
        d_cls += &heads.impossible.backward(&ci, dli * scales.impossible, &mut g.heads.impossible);
    }
    if use_mlm {
        let (loss_m, mc) = enc.mlm_loss(&encoding.states, &targets);
        part.mlm = loss_m;
        part.mlm_count = 1;
        enc.mlm_backward(&mc, scales.mlm, &mut d_states, &mut g.encoder);
    }

    if w.evidence > 0.0 {
        if let Some(pair) = &ex.evidence_pair {
            let p_h = if use_mlm { sigmoid(heads.answer.logit(&enc.encode(&ex.answer_input)?.cls)) } else { sigmoid(la) };
            let p_alt = sigmoid(heads.answer.logit(&enc.encode(&pair.alternate_answer)?.cls));
            let (y_h, y_alt) = (p_given(ex.label, p_h), p_given(ex.label, p_alt));
            for (input, target) in [(&pair.evidence, pseudo_label(y_h, y_alt)), (&pair.alternate, pseudo_label(y_alt, y_h))] {
                let (e, c) = enc.forward(input)?;
                let (lh, ch) = heads.evidence.forward(&e.cls);
                let (loss_h, dlh) = bce_with_logit(lh, target);
                part.evidence += loss_h;
                let d = heads.evidence.backward(&ch, dlh * scales.evidence, &mut g.heads.evidence);
                let mut ds = Array2::zeros(e.states.dim());
                ds.row_mut(0).assign(&d);
                enc.backward(&c, ds, &mut g.encoder);
            }
            part.evidence_count = 1;
        }
    }

    let mut row = d_states.row_mut(0);
    row += &d_cls;
    enc.backward(&cache, d_states, &mut g.encoder);
    Ok(part)
}

fn forward_only(model: &MetaModel, ex: &CompiledExample, w: &LossWeights) -> Result<Partial, ModelError> {
    let mut part = Partial::default();
    let enc = &model.encoder;
    let heads = &model.heads;
    let use_mlm = w.mlm > 0.0 && mlm_eligible(&ex.answer_input);
    let (seq, targets) = if use_mlm {
        mlm_mask(&ex.answer_input, COTRAIN_MASKS, &mut ChaCha8Rng::seed_from_u64(ex.mlm_seed))?
    } else {
        (ex.answer_input.clone(), Vec::new())
    };
    let encoding = enc.encode(&seq)?;
    let la = heads.answer.logit(&encoding.cls);
    part.answer = bce_with_logit(la, ex.label).0;
    part.impossible = bce_with_logit(heads.impossible.logit(&encoding.cls), !ex.answerable).0;
    if use_mlm {
        part.mlm = enc.mlm_loss(&encoding.states, &targets).0;
        part.mlm_count = 1;
    }
    if w.evidence > 0.0 {
        if let Some(pair) = &ex.evidence_pair {
            let p_h = if use_mlm { sigmoid(heads.answer.logit(&enc.encode(&ex.answer_input)?.cls)) } else { sigmoid(la) };
            let p_alt = sigmoid(heads.answer.logit(&enc.encode(&pair.alternate_answer)?.cls));
            let (y_h, y_alt) = (p_given(ex.label, p_h), p_given(ex.label, p_alt));
            for (input, target) in [(&pair.evidence, pseudo_label(y_h, y_alt)), (&pair.alternate, pseudo_label(y_alt, y_h))] {
                let lh = heads.evidence.logit(&enc.encode(input)?.cls);
                part.evidence += bce_with_logit(lh, target).0;
            }
            part.evidence_count = 1;
        }
    }
    Ok(part)
}

fn scales(batch: &[CompiledExample], w: &LossWeights) -> (Scales, usize, usize) {
    let n = batch.len() as f64;
    let n_ev = if w.evidence > 0.0 { batch.iter().filter(|e| e.evidence_pair.is_some()).count() } else { 0 };
    let n_mlm = if w.mlm > 0.0 { batch.iter().filter(|e| mlm_eligible(&e.answer_input)).count() } else { 0 };
    let s = Scales {
        answer: w.answer / n,
        impossible: w.impossible / n,
        // each example contributes two evidence terms (h and h')
        evidence: if n_ev > 0 { w.evidence / (2.0 * n_ev as f64) } else { 0.0 },
        mlm: if n_mlm > 0 { w.mlm / n_mlm as f64 } else { 0.0 },
    };
    (s, n_ev, n_mlm)
}

fn reduce(parts: &[Partial], batch: usize, n_ev: usize, n_mlm: usize, w: &LossWeights) -> LossBreakdown {
    let n = batch as f64;
    let sum = |f: fn(&Partial) -> f64| parts.iter().map(f).sum::<f64>();
    LossBreakdown {
        answer: (w.answer > 0.0).then(|| sum(|p| p.answer) / n),
        impossible: (w.impossible > 0.0).then(|| sum(|p| p.impossible) / n),
        evidence: (n_ev > 0).then(|| sum(|p| p.evidence) / (2.0 * n_ev as f64)),
        mlm: (n_mlm > 0).then(|| sum(|p| p.mlm) / n_mlm as f64),
        total: 0.0,
    }
    .finish(w)
}

/// Weighted training loss of a batch and its gradient.
///
/// Examples are processed in parallel; their gradients are summed in batch
/// order so results do not depend on the thread count.
pub fn loss_total(
    model: &MetaModel,
    batch: &[CompiledExample],
    weights: &LossWeights,
) -> Result<(LossBreakdown, MetaModel), ModelError> {
    let mut grads = model.zeros_like();
    if batch.is_empty() {
        return Ok((LossBreakdown::default(), grads));
    }
    let (s, n_ev, n_mlm) = scales(batch, weights);
    let results: Vec<Result<(Partial, MetaModel), ModelError>> = batch
        .par_iter()
        .map(|ex| {
            let mut g = model.zeros_like();
            example_pass(model, ex, weights, &s, &mut g).map(|p| (p, g))
        })
        .collect();
    let mut parts = Vec::with_capacity(batch.len());
    for r in results {
        let (p, g) = r?;
        add_scaled(&mut grads, &g, 1.0);
        parts.push(p);
    }
    Ok((reduce(&parts, batch.len(), n_ev, n_mlm, weights), grads))
}

/// Same value as [`loss_total`] without the backward pass.
pub fn loss_value(model: &MetaModel, batch: &[CompiledExample], weights: &LossWeights) -> Result<LossBreakdown, ModelError> {
    if batch.is_empty() {
        return Ok(LossBreakdown::default());
    }
    let (_, n_ev, n_mlm) = scales(batch, weights);
    let parts = batch
        .par_iter()
        .map(|ex| forward_only(model, ex, weights))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(reduce(&parts, batch.len(), n_ev, n_mlm, weights))
}

/// Mean masked-LM cross-entropy over every hidden token of `batch`, with
/// gradient when `with_grad` is set.
pub fn mlm_pretrain_loss(
    model: &MetaModel,
    batch: &[(InputSequence, Vec<MlmTarget>)],
    with_grad: bool,
) -> Result<(f64, Option<MetaModel>), ModelError> {
    let total: usize = batch.iter().map(|(_, t)| t.len()).sum();
    if total == 0 {
        return Ok((0.0, with_grad.then(|| model.zeros_like())));
    }
    let scale = 1.0 / total as f64;
    let enc = &model.encoder;
    let results: Vec<Result<(f64, Option<MetaModel>), ModelError>> = batch
        .par_iter()
        .map(|(seq, targets)| {
            if targets.is_empty() {
                return Ok((0.0, None));
            }
            let (e, cache) = enc.forward(seq)?;
            let (loss, mc) = enc.mlm_loss(&e.states, targets);
            if !with_grad {
                return Ok((loss, None));
            }
            let mut g = model.zeros_like();
            let mut ds = Array2::zeros(e.states.dim());
            enc.mlm_backward(&mc, scale, &mut ds, &mut g.encoder);
            enc.backward(&cache, ds, &mut g.encoder);
            Ok((loss, Some(g)))
        })
        .collect();
    let mut sum = 0.0;
    let mut grads = with_grad.then(|| model.zeros_like());
    for r in results {
        let (l, g) = r?;
        sum += l;
        if let (Some(acc), Some(g)) = (grads.as_mut(), g) {
            add_scaled(acc, &g, 1.0);
        }
    }
    Ok((sum * scale, grads))
}
