use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{score_all, CategoryBreakdown, MetricResult, ScoringOptions};
use crate::data::{Claim, ClaimId, DocEvidence, DocId, EvidenceLabel, Prediction, Provenance};
use crate::{Error, Result};

const FORMAT: &str = "sciverify-eval";
const VERSION: u32 = 1;

/// Half-up rounding to `decimals` places. A tiny nudge absorbs binary
/// representation error so that e.g. 0.15 rounds to 0.2.
pub fn round_half_up(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    let scaled = x * scale;
    (scaled + 0.5 + 1e-9 * scaled.abs().max(1.0)).floor() / scale
}

fn percent(x: f64) -> String {
    format!("{:.1}", round_half_up(x * 100.0, 1))
}

/// Gold and predicted state of one scored or cited pair, enough to rescore
/// a report without the original inputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub claim_id: ClaimId,
    pub doc_id: DocId,
    pub gold_label: Option<EvidenceLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_rationales: Option<Vec<BTreeSet<usize>>>,
    pub predicted_label: Option<EvidenceLabel>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub predicted_sentences: BTreeSet<usize>,
}

/// Self-contained evaluation result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub options: ScoringOptions,
    /// One entry per variant, in table order.
    pub results: Vec<MetricResult>,
    pub pairs: Vec<PairRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Tsv,
    MarkdownTable,
}

impl EvalReport {
    pub fn build(preds: &[Prediction], gold: &[Claim], opts: ScoringOptions) -> Self {
        let mut pairs: BTreeMap<(ClaimId, DocId), PairRecord> = BTreeMap::new();
        let blank = |claim_id, doc_id| PairRecord {
            claim_id,
            doc_id,
            gold_label: None,
            gold_rationales: None,
            predicted_label: None,
            predicted_sentences: BTreeSet::new(),
        };
        for claim in gold {
            for &doc in &claim.cited_doc_ids {
                pairs.insert((claim.id, doc), blank(claim.id, doc));
            }
            for (&doc, ev) in &claim.evidence {
                let record = pairs
                    .entry((claim.id, doc))
                    .or_insert_with(|| blank(claim.id, doc));
                record.gold_label = Some(ev.label);
                record.gold_rationales = ev.rationales.clone();
            }
        }
        for p in preds {
            let Some(label) = p.label.evidence() else {
                continue;
            };
            let record = pairs
                .entry((p.claim_id, p.doc_id))
                .or_insert_with(|| blank(p.claim_id, p.doc_id));
            record.predicted_label = Some(label);
            record.predicted_sentences = p.rationale.clone();
        }
        EvalReport {
            format: FORMAT.into(),
            version: VERSION,
            options: opts,
            results: score_all(preds, gold, &opts),
            pairs: pairs.into_values().collect(),
        }
    }

    /// Gold claims as recorded in the report (claim text is not kept).
    pub fn gold_claims(&self) -> Vec<Claim> {
        let mut claims: BTreeMap<ClaimId, Claim> = BTreeMap::new();
        for r in &self.pairs {
            let is_gold = r.gold_label.is_some();
            let claim = claims.entry(r.claim_id).or_insert_with(|| Claim {
                id: r.claim_id,
                text: String::new(),
                evidence: BTreeMap::new(),
                cited_doc_ids: Vec::new(),
                provenance: Provenance::Human,
            });
            if let Some(label) = r.gold_label {
                claim.evidence.insert(
                    r.doc_id,
                    DocEvidence {
                        label,
                        rationales: r.gold_rationales.clone(),
                    },
                );
            }
            if is_gold || r.predicted_label.is_none() {
                claim.cited_doc_ids.push(r.doc_id);
            }
        }
        claims.into_values().collect()
    }

    pub fn predictions(&self) -> Vec<Prediction> {
        self.pairs
            .iter()
            .filter_map(|r| {
                r.predicted_label.map(|label| Prediction {
                    claim_id: r.claim_id,
                    doc_id: r.doc_id,
                    label: label.into(),
                    rationale: r.predicted_sentences.clone(),
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: EvalReport =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        if report.format != FORMAT || report.version != VERSION {
            return Err(Error::parse(path, 1, "not an evaluation report"));
        }
        Ok(report)
    }

    /// Renders the overall results. `row` names the single table row.
    pub fn render(&self, format: ReportFormat, row: &str) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Tsv => {
                let mut out = String::from(
                    "variant\tprecision\trecall\tf1\ttrue_positive\tpredicted\tgold\n",
                );
                for r in &self.results {
                    let name = serde_json::to_value(r.variant).expect("variant");
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        name.as_str().unwrap_or_default(),
                        percent(r.precision),
                        percent(r.recall),
                        percent(r.f1),
                        r.counts.true_positive,
                        r.counts.predicted,
                        r.counts.gold
                    );
                }
                out
            }
            ReportFormat::MarkdownTable => {
                let mut out = String::from("| |");
                for r in &self.results {
                    let _ = write!(out, " {} | | |", r.variant.title());
                }
                out.push_str("\n|---|");
                out.push_str(&"---:|".repeat(3 * self.results.len()));
                out.push_str("\n| |");
                out.push_str(&" P | R | F1 |".repeat(self.results.len()));
                let _ = write!(out, "\n| {row} |");
                for r in &self.results {
                    let _ = write!(
                        out,
                        " {} | {} | {} |",
                        percent(r.precision),
                        percent(r.recall),
                        percent(r.f1)
                    );
                }
                out.push('\n');
                out
            }
        }
    }
}

impl CategoryBreakdown {
    pub fn render(&self, format: ReportFormat) -> String {
        let mut rows: Vec<(String, String, &super::Bucket)> = self
            .buckets
            .iter()
            .map(|b| {
                let value = if b.value { "yes" } else { "no" };
                (b.category.to_string(), value.to_string(), &b.bucket)
            })
            .collect();
        rows.push(("All annotated".into(), String::new(), &self.annotated));
        rows.push(("Unannotated".into(), String::new(), &self.remainder));
        match format {
            ReportFormat::Json => {
                serde_json::to_string_pretty(self).expect("breakdown serializes") + "\n"
            }
            ReportFormat::Tsv => {
                let mut out = String::from("category\tvalue\tpairs\tprecision\trecall\tf1\n");
                for (c, v, b) in rows {
                    let r = &b.result;
                    let _ = writeln!(
                        out,
                        "{c}\t{v}\t{}\t{}\t{}\t{}",
                        b.size,
                        percent(r.precision),
                        percent(r.recall),
                        percent(r.f1)
                    );
                }
                out
            }
            ReportFormat::MarkdownTable => {
                let mut out = format!(
                    "| Category | Value | Pairs | {0} P | {0} R | {0} F1 |\n|---|---|---:|---:|---:|---:|\n",
                    self.variant.title()
                );
                for (c, v, b) in rows {
                    let r = &b.result;
                    let _ = writeln!(
                        out,
                        "| {c} | {v} | {} | {} | {} | {} |",
                        b.size,
                        percent(r.precision),
                        percent(r.recall),
                        percent(r.f1)
                    );
                }
                out
            }
        }
    }
}
