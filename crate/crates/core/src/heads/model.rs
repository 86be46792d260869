use ndarray::Axis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::nn::{impl_params, join, sigmoid, Linear, Mat, Params, Vector};
use crate::encoder::{
    build_answer_input, build_evidence_input, EncodeError, EncoderConfig, EncoderParams, InputError, InputSequence,
    ObservationInput,
};

/// Feed-forward scorer on a `[CLS]` vector: one tanh hidden layer and a
/// scalar logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub hidden: Linear,
    pub output: Linear,
}

impl_params!(Head { hidden, output });

pub(crate) struct HeadCache {
    x: Mat,
    z: Mat,
}

impl Head {
    pub fn new<R: Rng>(width: usize, rng: &mut R) -> Self {
        Head { hidden: Linear::new(width, width, rng), output: Linear::new(width, 1, rng) }
    }

    pub fn logit(&self, cls: &Vector) -> f64 {
        self.forward(cls).0
    }

    pub(crate) fn forward(&self, cls: &Vector) -> (f64, HeadCache) {
        let x = cls.view().insert_axis(Axis(0)).to_owned();
        let z = self.hidden.forward(&x).mapv(f64::tanh);
        let logit = self.output.forward(&z)[[0, 0]];
        (logit, HeadCache { x, z })
    }

    /// Returns the gradient with respect to the `[CLS]` vector.
    pub(crate) fn backward(&self, c: &HeadCache, dlogit: f64, g: &mut Head) -> Vector {
        let dy = Mat::from_elem((1, 1), dlogit);
        let dz = self.output.backward(&c.z, &dy, &mut g.output);
        let dpre = dz * &c.z.mapv(|t| 1.0 - t * t);
        self.hidden.backward(&c.x, &dpre, &mut g.hidden).row(0).to_owned()
    }
}

/// The answer, evidence and impossibility scorers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub answer: Head,
    pub evidence: Head,
    pub impossible: Head,
}

impl_params!(HeadParams { answer, evidence, impossible });

/// Options that change how inputs are built, stored with the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    /// Hide answer tokens inside evidence when scoring evidence.
    pub mask_evidence_answers: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions { mask_evidence_answers: true }
    }
}

/// Encoder plus heads: every trainable parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaModel {
    pub encoder: EncoderParams,
    pub heads: HeadParams,
    #[serde(default)]
    pub options: ModelOptions,
}

impl Params for MetaModel {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a [f64])>) {
        self.encoder.collect(&join(prefix, "encoder"), out);
        self.heads.collect(&join(prefix, "heads"), out);
    }
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut [f64])>) {
        self.encoder.collect_mut(&join(prefix, "encoder"), out);
        self.heads.collect_mut(&join(prefix, "heads"), out);
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("parameter shapes do not match the configuration: {0}")]
    Shape(String),
}

impl MetaModel {
    pub fn new<R: Rng>(config: EncoderConfig, options: ModelOptions, rng: &mut R) -> Self {
        let encoder = EncoderParams::new(config, rng);
        let d = encoder.width();
        let heads = HeadParams { answer: Head::new(d, rng), evidence: Head::new(d, rng), impossible: Head::new(d, rng) };
        MetaModel { encoder, heads, options }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn max_len(&self) -> usize {
        self.encoder.config.max_len
    }

    /// Checks every tensor against the shapes implied by the encoder config.
    pub fn validate_shapes(&self) -> Result<(), ModelError> {
        self.encoder.config.validate().map_err(ModelError::Shape)?;
        let reference = MetaModel::new(self.encoder.config.clone(), self.options.clone(), &mut ChaCha8Rng::seed_from_u64(0));
        let want = reference.tensors();
        let got = self.tensors();
        if want.len() != got.len() {
            return Err(ModelError::Shape(format!("{} tensors, expected {}", got.len(), want.len())));
        }
        for ((wn, wt), (gn, gt)) in want.iter().zip(&got) {
            if wn != gn || wt.len() != gt.len() {
                return Err(ModelError::Shape(format!("{gn} has {} entries, expected {wn} with {}", gt.len(), wt.len())));
            }
        }
        let e = &self.encoder.embeddings;
        let c = &self.encoder.config;
        if e.token.dim() != (c.vocab_size, c.d_token) || e.position.dim() != (c.max_len, c.d_position) {
            return Err(ModelError::Shape("embedding table dimensions".into()));
        }
        Ok(())
    }

    /// Answer and impossibility logits from one encoding of an answer input.
    pub fn answer_logits(&self, seq: &InputSequence) -> Result<(f64, f64), ModelError> {
        let enc = self.encoder.encode(seq)?;
        Ok((self.heads.answer.logit(&enc.cls), self.heads.impossible.logit(&enc.cls)))
    }

    pub fn p_answer_input(&self, seq: &InputSequence) -> Result<f64, ModelError> {
        let enc = self.encoder.encode(seq)?;
        Ok(sigmoid(self.heads.answer.logit(&enc.cls)))
    }

    pub fn p_evidence_input(&self, seq: &InputSequence) -> Result<f64, ModelError> {
        let enc = self.encoder.encode(seq)?;
        Ok(sigmoid(self.heads.evidence.logit(&enc.cls)))
    }

    /// Probability that candidate `a_i` is correct given the evidence.
    pub fn p_answer(
        &self,
        question: &[u32],
        title: &[u32],
        candidate: &ObservationInput,
        evidence: &[&ObservationInput],
    ) -> Result<f64, ModelError> {
        self.p_answer_input(&build_answer_input(question, title, candidate, evidence, self.max_len())?)
    }

    /// Probability that the evidence set is useful, computed without any
    /// candidate block (and with evidence answers masked when configured).
    pub fn p_evidence(&self, question: &[u32], title: &[u32], evidence: &[&ObservationInput]) -> Result<f64, ModelError> {
        let seq = build_evidence_input(question, title, evidence, self.options.mask_evidence_answers, self.max_len())?;
        self.p_evidence_input(&seq)
    }

    /// Probability that the question is unanswerable, from the same encoding
    /// the answer head reads.
    pub fn p_impossible(
        &self,
        question: &[u32],
        title: &[u32],
        candidate: &ObservationInput,
        evidence: &[&ObservationInput],
    ) -> Result<f64, ModelError> {
        let seq = build_answer_input(question, title, candidate, evidence, self.max_len())?;
        Ok(sigmoid(self.answer_logits(&seq)?.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_model(seed: u64) -> MetaModel {
        let config = EncoderConfig { vocab_size: 60, ..EncoderConfig::default() };
        MetaModel::new(config, ModelOptions::default(), &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn random_obs<R: Rng>(rng: &mut R) -> ObservationInput {
        let mut ids = |n: usize| (0..n).map(|_| rng.random_range(5..60)).collect::<Vec<u32>>();
        let left = ids(2);
        let answer = ids(2);
        let right = ids(1);
        ObservationInput { left, answer, right, feature: rng.random() }
    }

    #[test]
    fn probabilities_stay_in_open_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..20 {
            let m = tiny_model(seed);
            for _ in 0..50 {
                let (c, e1, e2) = (random_obs(&mut rng), random_obs(&mut rng), random_obs(&mut rng));
                for p in [
                    m.p_answer(&[7, 8], &[9], &c, &[&e1, &e2]).unwrap(),
                    m.p_evidence(&[7, 8], &[9], &[&e1, &e2]).unwrap(),
                    m.p_impossible(&[7, 8], &[9], &c, &[&e1]).unwrap(),
                ] {
                    assert!(p > 0.0 && p < 1.0, "{p}");
                }
            }
        }
    }

    #[test]
    fn zeroed_output_layers_give_one_half() {
        let mut m = tiny_model(1);
        for h in [&mut m.heads.answer, &mut m.heads.evidence, &mut m.heads.impossible] {
            h.output.w.fill(0.0);
            h.output.b.fill(0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (c, e) = (random_obs(&mut rng), random_obs(&mut rng));
        assert_eq!(m.p_answer(&[7], &[9], &c, &[&e]).unwrap(), 0.5);
        assert_eq!(m.p_evidence(&[7], &[9], &[&e]).unwrap(), 0.5);
        assert_eq!(m.p_impossible(&[7], &[9], &c, &[&e]).unwrap(), 0.5);
    }

    #[test]
    fn duplicate_candidates_score_equally() {
        let m = tiny_model(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = random_obs(&mut rng);
        let e = random_obs(&mut rng);
        let copy = c.clone();
        assert_eq!(m.p_answer(&[7], &[9], &c, &[&e]).unwrap(), m.p_answer(&[7], &[9], &copy, &[&e]).unwrap());
    }

    #[test]
    fn swapping_an_observation_changes_scores() {
        let m = tiny_model(5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (c, e1, e2, e3) = (random_obs(&mut rng), random_obs(&mut rng), random_obs(&mut rng), random_obs(&mut rng));
        assert_ne!(m.p_evidence(&[7], &[9], &[&e1, &e2]).unwrap(), m.p_evidence(&[7], &[9], &[&e1, &e3]).unwrap());
        assert_ne!(m.p_answer(&[7], &[9], &c, &[&e1, &e2]).unwrap(), m.p_answer(&[7], &[9], &c, &[&e1, &e3]).unwrap());
        assert_ne!(
            m.p_impossible(&[7], &[9], &c, &[&e1, &e2]).unwrap(),
            m.p_impossible(&[7], &[9], &c, &[&e1, &e3]).unwrap()
        );
    }

    #[test]
    fn shape_validation() {
        let m = tiny_model(7);
        m.validate_shapes().unwrap();
        let mut bad = m.clone();
        bad.heads.answer.output = Linear::zeros(3, 1);
        assert!(bad.validate_shapes().is_err());
    }
}
