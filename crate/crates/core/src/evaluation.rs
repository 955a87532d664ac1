//! Top-4 ROUGE-L scoring, paired approximate-randomisation tests and the
//! structural and length analyses of selected sentences.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, SectionClass};
use crate::model::{Model, ModelError};
use crate::rouge;

/// Number of ranked sentences scored per document.
pub const TOP_K: usize = 4;

/// Default number of randomisation rounds.
pub const DEFAULT_ITERATIONS: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("score lists differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no scores to compare")]
    Empty,
    #[error("no document has highlights to score against")]
    NothingToScore,
    #[error("{0} selections for {1} documents")]
    SelectionCount(usize, usize),
    #[error("score file: {0}")]
    Csv(#[from] csv::Error),
    #[error("document '{0}' is missing from the other score file")]
    Unpaired(String),
}

/// How documents are grouped for per-group means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    /// First ASJC code of the document, `none` when absent.
    Asjc,
}

impl GroupBy {
    pub fn key(self, doc: &Document) -> String {
        match self {
            GroupBy::Asjc => doc.asjc_codes.first().cloned().unwrap_or_else(|| "none".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentScore {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDocument {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub per_document: Vec<DocumentScore>,
    pub mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_means: Option<BTreeMap<String, f64>>,
    /// Fraction of selected sentences per section class; all classes present.
    pub section_distribution: BTreeMap<String, f64>,
    pub avg_selected_length: f64,
    pub skipped: Vec<SkippedDocument>,
}

/// ROUGE-L F of the selected sentences (document order) against the
/// highlights; `None` when the document has no highlights.
pub fn selection_score(doc: &Document, selected: &[usize]) -> Option<f64> {
    if doc.highlights.is_empty() {
        return None;
    }
    let mut idx = selected.to_vec();
    idx.sort_unstable();
    let candidate: Vec<&[crate::corpus::Token]> = idx.iter().map(|&i| doc.sentences[i].tokens.as_slice()).collect();
    Some(rouge::rouge_l_summary(&candidate, &doc.highlight_tokens()).map(|s| s.f1).unwrap_or(0.0))
}

/// Normalised histogram of the section classes of all selected sentences.
pub fn section_distribution(docs: &[Document], selections: &[Vec<usize>]) -> BTreeMap<String, f64> {
    let mut counts = [0usize; 7];
    for (d, sel) in docs.iter().zip(selections) {
        for &i in sel {
            counts[d.sentences[i].section.one_hot_index()] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    SectionClass::ALL
        .iter()
        .map(|c| {
            let n = counts[c.one_hot_index()];
            (c.name().to_string(), if total == 0 { 0.0 } else { n as f64 / total as f64 })
        })
        .collect()
}

/// Mean token count over all selected sentences (0 when nothing is selected).
pub fn average_selected_length(docs: &[Document], selections: &[Vec<usize>]) -> f64 {
    let lengths: Vec<usize> =
        docs.iter().zip(selections).flat_map(|(d, sel)| sel.iter().map(move |&i| d.sentences[i].tokens.len())).collect();
    if lengths.is_empty() {
        0.0
    } else {
        lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
    }
}

/// Aggregates precomputed selections. Documents without highlights are
/// reported as skipped and excluded from every statistic.
pub fn evaluate_selections(docs: &[Document], selections: &[Vec<usize>], group_by: Option<GroupBy>) -> Result<EvalResult, EvalError> {
    if docs.len() != selections.len() {
        return Err(EvalError::SelectionCount(selections.len(), docs.len()));
    }
    let mut per_document = Vec::new();
    let mut skipped = Vec::new();
    let mut kept_docs = Vec::new();
    let mut kept_sel = Vec::new();
    let mut groups: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (d, sel) in docs.iter().zip(selections) {
        match selection_score(d, sel) {
            Some(score) => {
                per_document.push(DocumentScore { id: d.id.clone(), score });
                if let Some(g) = group_by {
                    let e = groups.entry(g.key(d)).or_insert((0.0, 0));
                    e.0 += score;
                    e.1 += 1;
                }
                kept_docs.push(d.clone());
                kept_sel.push(sel.clone());
            }
            None => skipped.push(SkippedDocument { id: d.id.clone(), reason: "document has no highlights".into() }),
        }
    }
    if per_document.is_empty() {
        return Err(EvalError::NothingToScore);
    }
    let mean = per_document.iter().map(|s| s.score).sum::<f64>() / per_document.len() as f64;
    Ok(EvalResult {
        mean,
        per_document,
        group_means: group_by.map(|_| groups.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()),
        section_distribution: section_distribution(&kept_docs, &kept_sel),
        avg_selected_length: average_selected_length(&kept_docs, &kept_sel),
        skipped,
    })
}

/// Top-`TOP_K` selections of `model` for each document, in parallel.
pub fn model_selections(model: &Model, docs: &[Document]) -> Result<Vec<Vec<usize>>, EvalError> {
    Ok(docs
        .par_iter()
        .map(|d| model.summarize(d, TOP_K).map(|(sel, _)| sel))
        .collect::<Result<Vec<_>, ModelError>>()?)
}

/// Scores the model's top-4 sentences of every document against its highlights.
pub fn rouge_l_f_at_4(model: &Model, docs: &[Document], group_by: Option<GroupBy>) -> Result<EvalResult, EvalError> {
    let scorable: Vec<Document> = docs.iter().filter(|d| !d.sentences.is_empty()).cloned().collect();
    let selections = model_selections(model, &scorable)?;
    let mut result = evaluate_selections(&scorable, &selections, group_by)?;
    for d in docs.iter().filter(|d| d.sentences.is_empty()) {
        result.skipped.push(SkippedDocument { id: d.id.clone(), reason: "document has no sentences".into() });
    }
    Ok(result)
}

/// Section distribution of the model's top-4 sentences over all documents.
pub fn structural_report(model: &Model, docs: &[Document]) -> Result<BTreeMap<String, f64>, EvalError> {
    Ok(section_distribution(docs, &model_selections(model, docs)?))
}

/// Mean length of the model's top-4 sentences over all documents.
pub fn length_report(model: &Model, docs: &[Document]) -> Result<f64, EvalError> {
    Ok(average_selected_length(docs, &model_selections(model, docs)?))
}

/// Paired two-sided approximate randomisation test on the absolute
/// difference of means. Each round swaps every pair independently with
/// probability 1/2; `p = (rounds at least as extreme + 1) / (rounds + 1)`.
pub fn approx_randomization(a: &[f64], b: &[f64], iterations: usize, seed: u64) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let observed = (diffs.iter().sum::<f64>() / n).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..iterations {
        let total: f64 = diffs.iter().map(|&d| if rng.gen_bool(0.5) { -d } else { d }).sum();
        if (total / n).abs() >= observed {
            extreme += 1;
        }
    }
    Ok((extreme + 1) as f64 / (iterations + 1) as f64)
}

/// Writes `id,score` rows with a header.
pub fn write_scores<W: Write>(out: W, scores: &[DocumentScore]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    for s in scores {
        w.serialize(s)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_scores<R: Read>(input: R) -> Result<Vec<DocumentScore>, EvalError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<DocumentScore>, _>>()?)
}

/// Aligns `other` to the order of `reference` by document id.
pub fn pair_scores(reference: &[DocumentScore], other: &[DocumentScore]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    let index: BTreeMap<&str, f64> = other.iter().map(|s| (s.id.as_str(), s.score)).collect();
    if index.len() != reference.len() {
        let known: std::collections::BTreeSet<&str> = reference.iter().map(|s| s.id.as_str()).collect();
        if let Some(extra) = other.iter().find(|s| !known.contains(s.id.as_str())) {
            return Err(EvalError::Unpaired(extra.id.clone()));
        }
    }
    let mut a = Vec::with_capacity(reference.len());
    let mut b = Vec::with_capacity(reference.len());
    for s in reference {
        let o = index.get(s.id.as_str()).ok_or_else(|| EvalError::Unpaired(s.id.clone()))?;
        a.push(s.score);
        b.push(*o);
    }
    Ok((a, b))
}
