use serde::{Deserialize, Serialize};

use super::{generate, GeneratedClaim, GenerationTrace};
use crate::data::{ClaimId, Document};

/// Negation removals used to flip a negated title into a refuted claim.
/// Every rule keeps a prefix of the matched phrase, so case is preserved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegationRule {
    DoesNot,
    DoNot,
    IsNot,
    AreNot,
    Cannot,
}

pub const NEGATION_RULES: [NegationRule; 5] = [
    NegationRule::DoesNot,
    NegationRule::DoNot,
    NegationRule::IsNot,
    NegationRule::AreNot,
    NegationRule::Cannot,
];

impl NegationRule {
    pub fn pattern(self) -> &'static str {
        match self {
            NegationRule::DoesNot => "does not",
            NegationRule::DoNot => "do not",
            NegationRule::IsNot => "is not",
            NegationRule::AreNot => "are not",
            NegationRule::Cannot => "cannot",
        }
    }

    pub fn replacement(self) -> &'static str {
        match self {
            NegationRule::DoesNot => "does",
            NegationRule::DoNot => "do",
            NegationRule::IsNot => "is",
            NegationRule::AreNot => "are",
            NegationRule::Cannot => "can",
        }
    }

    /// Byte offset of the first whole-word, case-insensitive match.
    fn find(self, text: &str) -> Option<usize> {
        let lower = text.to_ascii_lowercase();
        let pattern = self.pattern();
        let bytes = lower.as_bytes();
        let boundary = |i: Option<&u8>| i.is_none_or(|b| !b.is_ascii_alphanumeric());
        lower.match_indices(pattern).map(|(i, _)| i).find(|&i| {
            boundary(i.checked_sub(1).and_then(|j| bytes.get(j)))
                && boundary(bytes.get(i + pattern.len()))
        })
    }

    /// Rewrites the first occurrence; `None` when the pattern is absent.
    pub fn apply(self, text: &str) -> Option<String> {
        let start = self.find(text)?;
        let keep = self.replacement().len();
        let end = start + self.pattern().len();
        Some(format!("{}{}", &text[..start + keep], &text[end..]))
    }
}

/// The rule matching earliest in `title`, with the rewritten text.
pub fn negation_rewrite(title: &str) -> Option<(NegationRule, String)> {
    NEGATION_RULES
        .into_iter()
        .filter_map(|rule| rule.find(title).map(|at| (at, rule)))
        .min_by_key(|&(at, _)| at)
        .and_then(|(_, rule)| rule.apply(title).map(|text| (rule, text)))
}

const FINDING_VERBS: &[&str] = &[
    "increase",
    "increases",
    "increased",
    "decrease",
    "decreases",
    "decreased",
    "improve",
    "improves",
    "improved",
    "reduce",
    "reduces",
    "reduced",
    "enhance",
    "enhances",
    "inhibit",
    "inhibits",
    "prevent",
    "prevents",
    "promote",
    "promotes",
    "cause",
    "causes",
    "induce",
    "induces",
    "predict",
    "predicts",
    "protect",
    "protects",
    "suppress",
    "suppresses",
    "mediate",
    "mediates",
    "regulate",
    "regulates",
    "alter",
    "alters",
    "affect",
    "affects",
    "lower",
    "lowers",
    "raise",
    "raises",
    "impair",
    "impairs",
    "attenuate",
    "attenuates",
    "accelerate",
    "accelerates",
    "delay",
    "delays",
    "worsen",
    "worsens",
    "elevate",
    "elevates",
    "extend",
    "extends",
    "shorten",
    "shortens",
    "block",
    "blocks",
    "activate",
    "activates",
    "restore",
    "restores",
    "modulate",
    "modulates",
    "correlates",
    "contributes",
    "leads",
    "results",
    "cannot",
];

fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Declarative-title heuristic: no question mark, at least four words, and
/// a finding verb ("reduces", "is associated with", "does (not) improve", ...).
pub fn is_claim_like(title: &str) -> bool {
    if title.contains('?') {
        return false;
    }
    let words = words(title);
    if words.len() < 4 {
        return false;
    }
    words.iter().enumerate().any(|(i, w)| {
        let next = words.get(i + 1).map(String::as_str);
        FINDING_VERBS.contains(&w.as_str())
            || (matches!(w.as_str(), "is" | "are" | "was" | "were")
                && matches!(next, Some("associated" | "linked" | "not")))
            || (matches!(w.as_str(), "does" | "do") && next.is_some())
    })
}

/// The title as a SUPPORTS claim about its own abstract, plus a REFUTES
/// variant when the title is negated. Rationales are left absent.
pub fn title_to_claims(document: &Document, next_id: &mut ClaimId) -> Vec<GeneratedClaim> {
    let title = document.title.trim();
    if document.is_degenerate() || !is_claim_like(title) {
        return Vec::new();
    }
    let mut out = vec![generate(
        GenerationTrace::Title {
            doc_id: document.doc_id,
            title: title.to_string(),
            negation: None,
        },
        next_id,
    )];
    if let Some((rule, _)) = negation_rewrite(title) {
        out.push(generate(
            GenerationTrace::Title {
                doc_id: document.doc_id,
                title: title.to_string(),
                negation: Some(rule),
            },
            next_id,
        ));
    }
    out
}
