use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Corpus, DocId};
use crate::text::{analyze, ANALYZER_VERSION};
use crate::{Error, Result};

const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        let params = Bm25Params { k1, b };
        params.check()?;
        Ok(params)
    }

    fn check(&self) -> Result<()> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "k1 must be >= 0, got {}",
                self.k1
            )));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidInput(format!(
                "b must be in [0, 1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

/// Term frequency of one term in one document.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc_id: DocId,
    pub tf: u32,
}

/// BM25 statistics over title + abstract text.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    version: u32,
    params: Bm25Params,
    analyzer_version: String,
    num_docs: usize,
    avg_doc_length: f64,
    doc_lengths: BTreeMap<DocId, u32>,
    /// Per term, postings sorted by `doc_id`.
    #[serde(with = "posting_lists")]
    postings: BTreeMap<String, Vec<Posting>>,
}

/// Postings serialize as `[[doc_id, tf], ...]` to keep index files compact.
mod posting_lists {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<String, Vec<Posting>>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        let pairs: BTreeMap<&str, Vec<(DocId, u32)>> = map
            .iter()
            .map(|(t, ps)| (t.as_str(), ps.iter().map(|p| (p.doc_id, p.tf)).collect()))
            .collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<BTreeMap<String, Vec<Posting>>, D::Error> {
        let pairs: BTreeMap<String, Vec<(DocId, u32)>> = BTreeMap::deserialize(d)?;
        Ok(pairs
            .into_iter()
            .map(|(t, ps)| {
                (
                    t,
                    ps.into_iter()
                        .map(|(doc_id, tf)| Posting { doc_id, tf })
                        .collect(),
                )
            })
            .collect())
    }
}

impl InvertedIndex {
    /// Indexes the title followed by every abstract sentence of each document.
    pub fn build(corpus: &Corpus, params: Bm25Params) -> Result<Self> {
        params.check()?;
        if corpus.is_empty() {
            return Err(Error::InvalidInput("cannot index an empty corpus".into()));
        }
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        // Corpus iterates in ascending doc_id, so every posting list comes out sorted.
        for doc in corpus.iter() {
            let tokens = analyze(&doc.full_text());
            doc_lengths.insert(doc.doc_id, tokens.len() as u32);
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for token in tokens {
                *counts.entry(token).or_default() += 1;
            }
            for (term, tf) in counts {
                postings.entry(term).or_default().push(Posting {
                    doc_id: doc.doc_id,
                    tf,
                });
            }
        }
        let total: u64 = doc_lengths.values().map(|&l| u64::from(l)).sum();
        let num_docs = doc_lengths.len();
        Ok(InvertedIndex {
            version: INDEX_FORMAT_VERSION,
            params,
            analyzer_version: ANALYZER_VERSION.to_string(),
            num_docs,
            avg_doc_length: total as f64 / num_docs as f64,
            doc_lengths,
            postings,
        })
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, doc_id: DocId) -> Option<u32> {
        self.doc_lengths.get(&doc_id).copied()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = DocId> + '_ {
        self.doc_lengths.keys().copied()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn term_frequency(&self, term: &str, doc_id: DocId) -> u32 {
        let list = self.postings(term);
        list.binary_search_by_key(&doc_id, |p| p.doc_id)
            .map_or(0, |i| list[i].tf)
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`; never negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.num_docs as f64;
        let df = self.document_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Contribution of one term with frequency `tf` in `doc_id`.
    pub(crate) fn term_score(&self, idf: f64, tf: u32, doc_len: u32) -> f64 {
        if tf == 0 {
            return 0.0;
        }
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let ratio = if self.avg_doc_length > 0.0 {
            f64::from(doc_len) / self.avg_doc_length
        } else {
            1.0
        };
        idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * ratio))
    }

    /// BM25 score of `doc_id` against the distinct terms of `query`.
    pub fn score<S: AsRef<str>>(&self, query: &[S], doc_id: DocId) -> Result<f64> {
        let doc_len = self
            .doc_length(doc_id)
            .ok_or_else(|| Error::InvalidInput(format!("doc {doc_id} is not indexed")))?;
        let terms: BTreeSet<&str> = query.iter().map(AsRef::as_ref).collect();
        let mut total = 0.0;
        for term in terms {
            let tf = self.term_frequency(term, doc_id);
            if tf > 0 {
                total += self.term_score(self.idf(term), tf, doc_len);
            }
        }
        Ok(total)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json =
            serde_json::to_string(self).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let index: InvertedIndex =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e))?;
        index.check_consistency().map_err(Error::Validation)?;
        Ok(index)
    }

    fn check_consistency(&self) -> std::result::Result<(), String> {
        if self.version != INDEX_FORMAT_VERSION {
            return Err(format!("unsupported index version {}", self.version));
        }
        if self.analyzer_version != ANALYZER_VERSION {
            return Err(format!(
                "index built with analyzer {}, expected {ANALYZER_VERSION}",
                self.analyzer_version
            ));
        }
        self.params.check().map_err(|e| e.to_string())?;
        if self.num_docs != self.doc_lengths.len() {
            return Err("num_docs disagrees with doc_lengths".into());
        }
        let total: u64 = self.doc_lengths.values().map(|&l| u64::from(l)).sum();
        if self.num_docs > 0 && self.avg_doc_length != total as f64 / self.num_docs as f64 {
            return Err("avg_doc_length disagrees with doc_lengths".into());
        }
        for (term, list) in &self.postings {
            if list.windows(2).any(|w| w[0].doc_id >= w[1].doc_id) {
                return Err(format!("postings for {term:?} are not sorted by doc_id"));
            }
            if let Some(p) = list
                .iter()
                .find(|p| !self.doc_lengths.contains_key(&p.doc_id))
            {
                return Err(format!(
                    "posting for {term:?} references unknown doc {}",
                    p.doc_id
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Document;

    fn corpus(texts: &[&str]) -> Corpus {
        Corpus::new(texts.iter().enumerate().map(|(i, t)| Document {
            doc_id: i as DocId,
            title: String::new(),
            sentences: vec![t.to_string()],
        }))
        .unwrap()
    }

    #[test]
    fn single_doc_counts() {
        let index = InvertedIndex::build(&corpus(&["a b a"]), Bm25Params::default()).unwrap();
        assert_eq!(index.postings("a"), &[Posting { doc_id: 0, tf: 2 }]);
        assert_eq!(index.postings("b"), &[Posting { doc_id: 0, tf: 1 }]);
        assert_eq!(index.avg_doc_length(), 3.0);
    }

    #[test]
    fn identical_docs_share_length() {
        let index = InvertedIndex::build(&corpus(&["x y", "x y"]), Bm25Params::default()).unwrap();
        assert_eq!(index.doc_length(0), index.doc_length(1));
        assert_eq!(index.avg_doc_length(), 2.0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(InvertedIndex::build(&Corpus::default(), Bm25Params::default()).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(Bm25Params::new(-0.1, 0.5).is_err());
        assert!(Bm25Params::new(1.2, 1.5).is_err());
        assert!(Bm25Params::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn hand_evaluated_score() {
        // N=2, df=1, tf=1, len=avglen: idf = ln 2 and the tf part is 2.2 / 2.2.
        let index =
            InvertedIndex::build(&corpus(&["foo bar", "baz qux"]), Bm25Params::default()).unwrap();
        let score = index.score(&["foo"], 0).unwrap();
        assert!((score - std::f64::consts::LN_2).abs() < 1e-12, "{score}");
        assert_eq!(index.score(&["nothing"], 0).unwrap(), 0.0);
        assert!(index.score(&["foo"], 9).is_err());
    }

    #[test]
    fn repeated_query_terms_count_once() {
        let index =
            InvertedIndex::build(&corpus(&["foo bar", "baz qux"]), Bm25Params::default()).unwrap();
        assert_eq!(
            index.score(&["foo", "foo"], 0).unwrap(),
            index.score(&["foo"], 0).unwrap()
        );
    }

    #[test]
    fn score_is_monotone_in_tf() {
        let mut previous = 0.0;
        for tf in 1..=10 {
            let mut text = vec!["q"; tf];
            text.extend(vec!["pad"; 10 - tf]);
            let joined = text.join(" ");
            let index = InvertedIndex::build(
                &corpus(&[&joined, "other words here"]),
                Bm25Params::default(),
            )
            .unwrap();
            let score = index.score(&["q"], 0).unwrap();
            assert!(score >= previous, "tf={tf}: {score} < {previous}");
            previous = score;
        }
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        let index =
            InvertedIndex::build(&corpus(&["a b c", "b c d e"]), Bm25Params::default()).unwrap();
        index.save(&path).unwrap();
        assert_eq!(InvertedIndex::load(&path).unwrap(), index);
    }

    #[test]
    fn tampered_index_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        let index = InvertedIndex::build(&corpus(&["a b c"]), Bm25Params::default()).unwrap();
        index.save(&path).unwrap();
        let text = fs::read_to_string(&path)
            .unwrap()
            .replace("\"num_docs\":1", "\"num_docs\":2");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            InvertedIndex::load(&path),
            Err(Error::Validation(_))
        ));
    }
}
