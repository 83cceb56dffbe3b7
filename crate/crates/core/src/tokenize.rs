//! Tokenizers shared by corpus statistics and lexical diversity.
//!
//! The default segmentation is whitespace splitting after trim. Both the
//! stats and diversity paths take the tokenizer as a parameter so a model
//! tokenizer can be plugged in without touching the metrics.

/// Splits text into tokens. Implementations must be deterministic.
pub trait Tokenizer: Send + Sync {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str>;

    fn count(&self, text: &str) -> usize {
        self.tokenize(text).len()
    }
}

/// Whitespace segmentation. Consecutive whitespace collapses, so the
/// token stream never contains empty strings.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        text.split_whitespace().collect()
    }
}
