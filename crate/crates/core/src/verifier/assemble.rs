use super::vocab::{Vocab, CLS_ID, SEP_ID};
use crate::data::Document;
use crate::{Error, Result};

/// Encoder input for one (claim, abstract) pair.
///
/// Layout: `<s> claim </s> title </s> s_1 </s>_1 ... s_n' </s>_n'`.
/// Global attention is on `<s>`, every claim token and every separator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AssembledInput {
    pub token_ids: Vec<u32>,
    pub cls_position: usize,
    pub claim_len: usize,
    /// Position of the separator closing each retained sentence.
    pub sentence_marker_positions: Vec<usize>,
    pub global_attention: Vec<bool>,
    /// Trailing sentences were dropped to respect the length limit.
    pub truncated: bool,
}

impl AssembledInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn num_sentences(&self) -> usize {
        self.sentence_marker_positions.len()
    }

    pub fn global_count(&self) -> usize {
        self.global_attention.iter().filter(|&&g| g).count()
    }
}

/// Builds the encoder sequence. Whole trailing sentences are dropped when the
/// sequence would exceed `max_length`; the claim and title are always kept.
pub fn assemble_input(
    claim: &str,
    document: &Document,
    vocab: &Vocab,
    max_length: usize,
) -> Result<AssembledInput> {
    if document.is_degenerate() {
        return Err(Error::InvalidInput(format!(
            "doc {} has an empty abstract",
            document.doc_id
        )));
    }
    let claim_ids = vocab.encode(claim);
    let title_ids = vocab.encode(&document.title);
    let head_len = claim_ids.len() + title_ids.len() + 3;
    if head_len > max_length {
        return Err(Error::InvalidInput(format!(
            "claim and title of doc {} need {head_len} tokens, limit is {max_length}",
            document.doc_id
        )));
    }

    let mut token_ids = Vec::with_capacity(max_length.min(512));
    let mut global = Vec::with_capacity(token_ids.capacity());
    token_ids.push(CLS_ID);
    global.push(true);
    token_ids.extend_from_slice(&claim_ids);
    global.extend(std::iter::repeat_n(true, claim_ids.len()));
    token_ids.push(SEP_ID);
    global.push(true);
    token_ids.extend_from_slice(&title_ids);
    global.extend(std::iter::repeat_n(false, title_ids.len()));
    token_ids.push(SEP_ID);
    global.push(true);

    let mut markers = Vec::with_capacity(document.sentences.len());
    let mut truncated = false;
    for sentence in &document.sentences {
        let ids = vocab.encode(sentence);
        if token_ids.len() + ids.len() + 1 > max_length {
            truncated = true;
            break;
        }
        global.extend(std::iter::repeat_n(false, ids.len()));
        token_ids.extend(ids);
        markers.push(token_ids.len());
        token_ids.push(SEP_ID);
        global.push(true);
    }

    Ok(AssembledInput {
        token_ids,
        cls_position: 0,
        claim_len: claim_ids.len(),
        sentence_marker_positions: markers,
        global_attention: global,
        truncated,
    })
}
