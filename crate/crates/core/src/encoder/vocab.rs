use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::candidates::{Token, RESERVED};

pub const PAD_ID: u32 = 0;
pub const CLS_ID: u32 = 1;
pub const SEP_ID: u32 = 2;
pub const MASK_ID: u32 = 3;
pub const UNK_ID: u32 = 4;

/// Default cap on vocabulary size, reserved entries included.
pub const DEFAULT_VOCAB_CAP: usize = 8192;

/// Token-to-id table. Ids 0..5 are the reserved entries in [`RESERVED`]
/// order; the rest are training-data tokens by descending frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Counts normalized forms; frequency ties are broken lexicographically
    /// so the result does not depend on input order.
    pub fn build<'a, I: IntoIterator<Item = &'a Token>>(tokens: I, cap: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            *counts.entry(t.norm()).or_default() += 1;
        }
        let mut ranked: Vec<(&str, usize)> =
            counts.into_iter().filter(|(t, _)| !RESERVED.contains(t)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let room = cap.saturating_sub(RESERVED.len());
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().take(room).map(|(t, _)| t.to_string()))
            .collect::<Vec<_>>();
        Vocab::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &Token) -> u32 {
        self.index.get(token.norm()).copied().unwrap_or(UNK_ID)
    }

    pub fn ids(&self, tokens: &[Token]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < RESERVED.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::tokenize;

    #[test]
    fn reserved_first_then_by_frequency() {
        let toks = tokenize("b a b c b a");
        let v = Vocab::build(&toks, 100);
        assert_eq!(v.token(MASK_ID), Some("[MASK]"));
        assert_eq!(v.token(5), Some("b"));
        assert_eq!(v.token(6), Some("a"));
        assert_eq!(v.token(7), Some("c"));
        assert_eq!(v.id(&tokenize("zzz")[0]), UNK_ID);
        assert_eq!(v.id(&tokenize("B")[0]), 5);
    }

    #[test]
    fn cap_counts_reserved_entries() {
        let toks = tokenize("a b c d e f");
        assert_eq!(Vocab::build(&toks, 7).len(), 7);
    }

    #[test]
    fn serializes_as_token_list() {
        let v = Vocab::build(&tokenize("x y"), 10);
        let s = serde_json::to_string(&v).unwrap();
        assert!(s.starts_with("[\"[PAD]\""));
        assert_eq!(serde_json::from_str::<Vocab>(&s).unwrap(), v);
    }
}
