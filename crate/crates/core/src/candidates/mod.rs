//! Questions, M-best candidate lists, gold annotations, and the
//! condition-gated views that meta-answerers see.

mod condition;
mod gold;
mod record;
mod token;

pub use condition::{apply_condition, Condition, ConditionView};
pub use gold::{
    is_answerable, parse_gold_record, read_gold_jsonl, AnswerSpan, GoldAnnotationSet, GoldError, GoldErrorKind,
    Matcher, ANNOTATORS,
};
pub use record::{
    candidate_order, parse_mbest_record, read_mbest_jsonl, MBestRecord, Observation, ReadError, RecordError,
    RecordErrorKind,
};
pub(crate) use record::read_lines;
pub use token::{detokenize, normalized, tokenize, Token, CLS, MASK, PAD, RESERVED, SEP, UNK};
