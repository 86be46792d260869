use std::fmt;

use serde::{Deserialize, Serialize};

/// Reserved vocabulary entries. The tokenizer never produces these from
/// natural text because brackets split into their own tokens.
pub const PAD: &str = "[PAD]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
pub const UNK: &str = "[UNK]";
pub const RESERVED: [&str; 5] = [PAD, CLS, SEP, MASK, UNK];

/// A single word or punctuation mark. `norm` is the lowercased form used
/// for vocabulary lookup and surface matching.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    text: String,
    norm: String,
}

impl Token {
    /// Returns `None` for empty text or text containing whitespace.
    pub fn new(text: impl Into<String>) -> Option<Self> {
        let text = text.into();
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            return None;
        }
        let norm = text.to_lowercase();
        Some(Token { text, norm })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn norm(&self) -> &str {
        &self.norm
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Splits on whitespace, and emits every punctuation character as its own
/// token.
pub fn tokenize(s: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in s.chars() {
        if c.is_whitespace() {
            flush(&mut word, &mut out);
        } else if is_punct(c) {
            flush(&mut word, &mut out);
            out.push(Token::new(c.to_string()).expect("punctuation is a valid token"));
        } else {
            word.push(c);
        }
    }
    flush(&mut word, &mut out);
    out
}

fn flush(word: &mut String, out: &mut Vec<Token>) {
    if !word.is_empty() {
        out.push(Token::new(std::mem::take(word)).expect("word has no whitespace"));
    }
}

pub fn detokenize(tokens: &[Token]) -> String {
    let mut s = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(t.text());
    }
    s
}

/// Lowercased token strings, in order.
pub fn normalized(tokens: &[Token]) -> Vec<&str> {
    tokens.iter().map(Token::norm).collect()
}
