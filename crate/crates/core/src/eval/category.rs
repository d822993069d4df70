use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{score, MetricResult, ScoringOptions, Variant};
use crate::data::{Claim, ClaimId, DocId, Label, Prediction};
use crate::{Error, Result};

/// Which modeling capabilities a (claim, abstract) pair needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryAnnotation {
    pub claim_id: ClaimId,
    pub doc_id: DocId,
    pub context: bool,
    pub background: bool,
    pub numerical: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Context,
    Background,
    Numerical,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Context, Category::Background, Category::Numerical];

    fn of(self, a: &CategoryAnnotation) -> bool {
        match self {
            Category::Context => a.context,
            Category::Background => a.background,
            Category::Numerical => a.numerical,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Context => "Context",
            Category::Background => "Background",
            Category::Numerical => "Numerical",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub size: usize,
    pub result: MetricResult,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryBucket {
    pub category: Category,
    pub value: bool,
    #[serde(flatten)]
    pub bucket: Bucket,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryBreakdown {
    pub variant: Variant,
    /// Yes then no for each category, in `Category::ALL` order.
    pub buckets: Vec<CategoryBucket>,
    /// Every annotated pair.
    pub annotated: Bucket,
    /// Scored pairs (gold evidence or predicted non-NEI) with no annotation.
    pub remainder: Bucket,
}

impl CategoryBreakdown {
    pub fn bucket(&self, category: Category, value: bool) -> &Bucket {
        &self
            .buckets
            .iter()
            .find(|b| b.category == category && b.value == value)
            .expect("every category has both buckets")
            .bucket
    }
}

fn restricted(
    variant: Variant,
    preds: &[Prediction],
    gold: &[Claim],
    keep: &BTreeSet<(ClaimId, DocId)>,
    opts: &ScoringOptions,
) -> MetricResult {
    let preds: Vec<Prediction> = preds
        .iter()
        .filter(|p| keep.contains(&(p.claim_id, p.doc_id)))
        .cloned()
        .collect();
    let gold: Vec<Claim> = gold
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.evidence.retain(|&d, _| keep.contains(&(c.id, d)));
            c
        })
        .collect();
    score(variant, &preds, &gold, opts)
}

/// Scores `variant` separately on the yes and no side of each category.
///
/// Every annotated pair must be a gold evidence or cited pair. Pairs that are
/// scored (gold evidence or predicted non-NEI) but not annotated go to the
/// remainder bucket.
pub fn by_category(
    preds: &[Prediction],
    gold: &[Claim],
    annotations: &[CategoryAnnotation],
    variant: Variant,
    opts: &ScoringOptions,
) -> Result<CategoryBreakdown> {
    let claims: BTreeMap<ClaimId, &Claim> = gold.iter().map(|c| (c.id, c)).collect();
    let mut annotated = BTreeSet::new();
    for a in annotations {
        let known = claims.get(&a.claim_id).is_some_and(|c| {
            c.evidence.contains_key(&a.doc_id) || c.cited_doc_ids.contains(&a.doc_id)
        });
        if !known {
            return Err(Error::Validation(format!(
                "annotated pair ({}, {}) is not in the gold set",
                a.claim_id, a.doc_id
            )));
        }
        if !annotated.insert((a.claim_id, a.doc_id)) {
            return Err(Error::Validation(format!(
                "pair ({}, {}) annotated twice",
                a.claim_id, a.doc_id
            )));
        }
    }

    let scored: BTreeSet<(ClaimId, DocId)> = gold
        .iter()
        .flat_map(|c| c.evidence.keys().map(move |&d| (c.id, d)))
        .chain(
            preds
                .iter()
                .filter(|p| p.label != Label::Nei)
                .map(|p| (p.claim_id, p.doc_id)),
        )
        .collect();
    let leftover: BTreeSet<_> = scored.difference(&annotated).copied().collect();

    let bucket = |keep: &BTreeSet<(ClaimId, DocId)>| Bucket {
        size: keep.len(),
        result: restricted(variant, preds, gold, keep, opts),
    };
    let mut buckets = Vec::new();
    for category in Category::ALL {
        for value in [true, false] {
            let keep: BTreeSet<_> = annotations
                .iter()
                .filter(|a| category.of(a) == value)
                .map(|a| (a.claim_id, a.doc_id))
                .collect();
            buckets.push(CategoryBucket {
                category,
                value,
                bucket: bucket(&keep),
            });
        }
    }
    Ok(CategoryBreakdown {
        variant,
        buckets,
        annotated: bucket(&annotated),
        remainder: bucket(&leftover),
    })
}
