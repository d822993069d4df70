//! Text analysis shared by the BM25 index and the verifier vocabulary.

/// Identifies the analyzer below in persisted artifacts.
pub const ANALYZER_VERSION: &str = "lower-alnum-v1";

/// Lowercases and splits on every non-alphanumeric character.
/// No stemming and no stopword removal.
pub fn analyze(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_and_lowercases() {
        assert_eq!(
            analyze("IL-6 levels rose (p<0.05)."),
            vec!["il", "6", "levels", "rose", "p", "0", "05"]
        );
        assert!(analyze(" -- ").is_empty());
    }
}
