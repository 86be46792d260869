//! Input construction and the transformer encoder.

mod input;
mod model;
pub mod nn;
mod vocab;

pub use input::{
    build_answer_input, build_evidence_input, mlm_mask, mma_base_input, EncodedRecord, FeatureMode, InputError,
    InputSequence, MlmTarget, ObservationInput, Segment, Slot, SubSegment, BASE_SEGMENT_A, BASE_SEGMENT_B,
};
pub use model::{
    Attention, EmbeddingTables, EncodeError, EncoderCache, EncoderConfig, EncoderLayer, EncoderParams, Encoding,
    MlmCache, MlmHead,
};
pub use vocab::{Vocab, CLS_ID, DEFAULT_VOCAB_CAP, MASK_ID, PAD_ID, SEP_ID, UNK_ID};
