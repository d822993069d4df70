use std::collections::HashMap;

use crate::text::analyze;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
/// Leading sequence token (`<s>`).
pub const CLS_ID: u32 = 2;
/// Separator token (`</s>`).
pub const SEP_ID: u32 = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Word-level vocabulary over the shared analyzer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Most frequent words first, ties alphabetical; at most `max_size`
    /// entries including the four special tokens.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, max_size: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for token in analyze(text) {
                *counts.entry(token).or_default() += 1;
            }
        }
        let mut words: Vec<(String, usize)> = counts.into_iter().collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let budget = max_size.saturating_sub(SPECIALS.len());
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().take(budget).map(|(w, _)| w))
            .collect();
        Self::from_tokens(tokens)
    }

    /// Restores a vocabulary saved with [`Vocab::tokens`].
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab { tokens, index }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        analyze(text).iter().map(|t| self.id(t)).collect()
    }
}
