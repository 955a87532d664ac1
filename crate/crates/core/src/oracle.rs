//! Greedy oracle labelling.
//!
//! Sentences are added one at a time, each time picking the unselected
//! sentence that maximises the configured ROUGE score of the selection
//! against the document's highlights.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Token};
use crate::rouge::{self, RougeError, RougeScore, SummaryLcsMode};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("document \"{0}\" has no highlights")]
    EmptyHighlights(String),
    #[error("document \"{0}\" has no sentences")]
    EmptyDocument(String),
    #[error("document \"{id}\": {source}")]
    Rouge {
        id: String,
        #[source]
        source: RougeError,
    },
    #[error("no documents to label")]
    NoDocuments,
    #[error("all {0} documents failed to label")]
    AllFailed(usize),
    #[error("label line {line}: {message}")]
    LabelFormat { line: usize, message: String },
    #[error("no labels for document \"{0}\"")]
    MissingLabels(String),
    #[error("document \"{id}\": {labels} labels for {sentences} sentences")]
    LabelLength { id: String, labels: usize, sentences: usize },
}

/// Score the greedy search maximises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMetric {
    #[default]
    RougeLF,
    RougeLR,
    Rouge2R,
}

impl std::str::FromStr for OracleMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rouge-l-f" => Ok(OracleMetric::RougeLF),
            "rouge-l-r" => Ok(OracleMetric::RougeLR),
            "rouge-2-r" => Ok(OracleMetric::Rouge2R),
            _ => Err(format!("unknown metric {s:?} (expected rouge-l-f, rouge-l-r or rouge-2-r)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub cap: usize,
    pub stop_on_no_gain: bool,
    pub metric: OracleMetric,
    pub lcs_mode: SummaryLcsMode,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { cap: 10, stop_on_no_gain: false, metric: OracleMetric::RougeLF, lcs_mode: SummaryLcsMode::Union }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    /// Metric value of the selection after adding `index`.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDocument {
    pub doc: Document,
    pub labels: Vec<u8>,
    pub trace: Vec<TraceStep>,
}

impl LabeledDocument {
    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    /// The first `k` greedy selections.
    pub fn top_selections(&self, k: usize) -> Vec<usize> {
        self.trace.iter().take(k).map(|t| t.index).collect()
    }
}

fn metric_value(score: RougeScore, metric: OracleMetric) -> f64 {
    match metric {
        OracleMetric::RougeLF => score.f1,
        OracleMetric::RougeLR | OracleMetric::Rouge2R => score.recall,
    }
}

/// Scores a candidate selection of sentence indices (any order).
trait SelectionScorer {
    fn score_with(&mut self, selected: &[usize], extra: usize) -> Result<RougeScore, RougeError>;
    fn commit(&mut self, _index: usize) {}
}

/// Direct scoring through the public ROUGE functions, selection in document order.
struct DirectScorer<'a> {
    sentences: Vec<&'a [Token]>,
    highlights: Vec<&'a [Token]>,
    config: OracleConfig,
}

impl SelectionScorer for DirectScorer<'_> {
    fn score_with(&mut self, selected: &[usize], extra: usize) -> Result<RougeScore, RougeError> {
        let mut idx: Vec<usize> = selected.iter().copied().chain(std::iter::once(extra)).collect();
        idx.sort_unstable();
        let cand: Vec<&[Token]> = idx.iter().map(|&i| self.sentences[i]).collect();
        match self.config.metric {
            OracleMetric::Rouge2R => rouge::rouge_n_summary(&cand, &self.highlights, 2),
            _ => rouge::rouge_l_summary_with(&cand, &self.highlights, self.config.lcs_mode),
        }
    }
}

/// Incremental union-LCS scorer.
///
/// LCS coverage of every (sentence, highlight) pair is computed once; scoring
/// a selection then only ORs coverage bitsets and clips hit counts. It yields
/// exactly the hit counts of [`rouge::rouge_l_summary`].
struct UnionLcsScorer {
    ref_tokens: Vec<Vec<u32>>,
    ref_len: usize,
    sent_len: Vec<usize>,
    /// `cover[s][r]`: bitset over positions of highlight `r` covered by sentence `s`.
    cover: Vec<Vec<Vec<u64>>>,
    sent_counts: Vec<Vec<(u32, u32)>>,
    selected_cover: Vec<Vec<u64>>,
    selected_counts: Vec<u32>,
    selected_len: usize,
    union_counts: Vec<u32>,
    touched: Vec<u32>,
}

impl UnionLcsScorer {
    fn new(sentences: &[&[Token]], highlights: &[&[Token]]) -> Self {
        fn intern<'t>(vocab: &mut HashMap<&'t Token, u32>, toks: &'t [Token]) -> Vec<u32> {
            toks.iter()
                .map(|t| {
                    let next = vocab.len() as u32;
                    *vocab.entry(t).or_insert(next)
                })
                .collect()
        }
        let mut vocab: HashMap<&Token, u32> = HashMap::new();
        let ref_tokens: Vec<Vec<u32>> = highlights.iter().map(|h| intern(&mut vocab, h)).collect();
        let sent_tokens: Vec<Vec<u32>> = sentences.iter().map(|s| intern(&mut vocab, s)).collect();
        let vocab_size = vocab.len();

        let words = |len: usize| len.div_ceil(64);
        let cover = sent_tokens
            .iter()
            .map(|s| {
                ref_tokens
                    .iter()
                    .map(|r| {
                        let mut bits = vec![0u64; words(r.len())];
                        for p in rouge::lcs_reference_positions(r, s) {
                            bits[p / 64] |= 1 << (p % 64);
                        }
                        bits
                    })
                    .collect()
            })
            .collect();
        let sent_counts = sent_tokens
            .iter()
            .map(|s| {
                let mut counts: Vec<(u32, u32)> = Vec::new();
                let mut sorted = s.clone();
                sorted.sort_unstable();
                for t in sorted {
                    match counts.last_mut() {
                        Some((last, c)) if *last == t => *c += 1,
                        _ => counts.push((t, 1)),
                    }
                }
                counts
            })
            .collect();
        UnionLcsScorer {
            ref_len: ref_tokens.iter().map(Vec::len).sum(),
            selected_cover: ref_tokens.iter().map(|r| vec![0u64; words(r.len())]).collect(),
            ref_tokens,
            sent_len: sent_tokens.iter().map(Vec::len).collect(),
            cover,
            sent_counts,
            selected_counts: vec![0; vocab_size],
            selected_len: 0,
            union_counts: vec![0; vocab_size],
            touched: Vec::new(),
        }
    }
}

impl SelectionScorer for UnionLcsScorer {
    fn score_with(&mut self, _selected: &[usize], extra: usize) -> Result<RougeScore, RougeError> {
        for (r, ref_tokens) in self.ref_tokens.iter().enumerate() {
            let sel = &self.selected_cover[r];
            let add = &self.cover[extra][r];
            for (w, (a, b)) in sel.iter().zip(add).enumerate() {
                let mut bits = a | b;
                while bits != 0 {
                    let p = w * 64 + bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    let t = ref_tokens[p];
                    if self.union_counts[t as usize] == 0 {
                        self.touched.push(t);
                    }
                    self.union_counts[t as usize] += 1;
                }
            }
        }
        for &(t, c) in &self.sent_counts[extra] {
            self.selected_counts[t as usize] += c;
        }
        let mut hits = 0usize;
        for &t in &self.touched {
            hits += self.union_counts[t as usize].min(self.selected_counts[t as usize]) as usize;
            self.union_counts[t as usize] = 0;
        }
        self.touched.clear();
        for &(t, c) in &self.sent_counts[extra] {
            self.selected_counts[t as usize] -= c;
        }
        Ok(RougeScore::from_counts(hits, self.selected_len + self.sent_len[extra], self.ref_len))
    }

    fn commit(&mut self, index: usize) {
        for (sel, add) in self.selected_cover.iter_mut().zip(&self.cover[index]) {
            for (a, b) in sel.iter_mut().zip(add) {
                *a |= b;
            }
        }
        for &(t, c) in &self.sent_counts[index] {
            self.selected_counts[t as usize] += c;
        }
        self.selected_len += self.sent_len[index];
    }
}

fn run_greedy(
    n: usize,
    scorer: &mut dyn SelectionScorer,
    config: &OracleConfig,
) -> Result<(Vec<u8>, Vec<TraceStep>), RougeError> {
    let mut labels = vec![0u8; n];
    let mut selected: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut current = 0.0f64;
    while selected.len() < config.cap.min(n) {
        let mut best: Option<(usize, f64)> = None;
        for s in (0..n).filter(|&s| labels[s] == 0) {
            let value = metric_value(scorer.score_with(&selected, s)?, config.metric);
            // Strict comparison keeps the lowest index on ties.
            if best.is_none_or(|(_, b)| value > b) {
                best = Some((s, value));
            }
        }
        let Some((index, score)) = best else { break };
        if config.stop_on_no_gain && score <= current {
            break;
        }
        labels[index] = 1;
        selected.push(index);
        scorer.commit(index);
        trace.push(TraceStep { index, score });
        current = score;
    }
    Ok((labels, trace))
}

pub fn greedy_label(doc: &Document, config: &OracleConfig) -> Result<LabeledDocument, OracleError> {
    if doc.sentences.is_empty() {
        return Err(OracleError::EmptyDocument(doc.id.clone()));
    }
    if doc.highlights.is_empty() {
        return Err(OracleError::EmptyHighlights(doc.id.clone()));
    }
    let sentences = doc.sentence_tokens();
    let highlights = doc.highlight_tokens();
    let fast = config.metric != OracleMetric::Rouge2R && config.lcs_mode == SummaryLcsMode::Union;
    let result = if fast {
        run_greedy(sentences.len(), &mut UnionLcsScorer::new(&sentences, &highlights), config)
    } else {
        run_greedy(sentences.len(), &mut DirectScorer { sentences: sentences.clone(), highlights, config: *config }, config)
    };
    let (labels, trace) = result.map_err(|source| OracleError::Rouge { id: doc.id.clone(), source })?;
    Ok(LabeledDocument { doc: doc.clone(), labels, trace })
}

/// Greedy labelling through the direct ROUGE functions only; slow, used to
/// cross-check the incremental scorer.
pub fn greedy_label_direct(doc: &Document, config: &OracleConfig) -> Result<LabeledDocument, OracleError> {
    if doc.sentences.is_empty() {
        return Err(OracleError::EmptyDocument(doc.id.clone()));
    }
    if doc.highlights.is_empty() {
        return Err(OracleError::EmptyHighlights(doc.id.clone()));
    }
    let mut scorer = DirectScorer { sentences: doc.sentence_tokens(), highlights: doc.highlight_tokens(), config: *config };
    let (labels, trace) = run_greedy(doc.sentences.len(), &mut scorer, config)
        .map_err(|source| OracleError::Rouge { id: doc.id.clone(), source })?;
    Ok(LabeledDocument { doc: doc.clone(), labels, trace })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedDocument {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LabelingOutcome {
    pub labeled: Vec<LabeledDocument>,
    pub skipped: Vec<SkippedDocument>,
}

/// Labels every document, keeping input order. Failing documents are
/// reported in `skipped`; it is an error only when none succeed.
pub fn label_corpus(docs: &[Document], config: &OracleConfig) -> Result<LabelingOutcome, OracleError> {
    if docs.is_empty() {
        return Err(OracleError::NoDocuments);
    }
    let results: Vec<Result<LabeledDocument, OracleError>> = docs.par_iter().map(|d| greedy_label(d, config)).collect();
    let mut labeled = Vec::new();
    let mut skipped = Vec::new();
    for (doc, r) in docs.iter().zip(results) {
        match r {
            Ok(l) => labeled.push(l),
            Err(e) => skipped.push(SkippedDocument { id: doc.id.clone(), reason: e.to_string() }),
        }
    }
    if labeled.is_empty() {
        return Err(OracleError::AllFailed(docs.len()));
    }
    Ok(LabelingOutcome { labeled, skipped })
}

/// One line of the label JSONL output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub labels: Vec<u8>,
    pub trace: Vec<(usize, f64)>,
}

impl From<&LabeledDocument> for LabelRecord {
    fn from(l: &LabeledDocument) -> Self {
        LabelRecord {
            id: l.doc.id.clone(),
            labels: l.labels.clone(),
            trace: l.trace.iter().map(|t| (t.index, t.score)).collect(),
        }
    }
}

pub fn write_labels<W: Write>(mut out: W, labeled: &[LabeledDocument]) -> std::io::Result<()> {
    for l in labeled {
        let line = serde_json::to_string(&LabelRecord::from(l)).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_labels<R: BufRead>(input: R) -> Result<Vec<LabelRecord>, OracleError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| OracleError::LabelFormat { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LabelRecord = serde_json::from_str(&line)
            .map_err(|e| OracleError::LabelFormat { line: i + 1, message: e.to_string() })?;
        if record.labels.iter().any(|&y| y > 1) {
            return Err(OracleError::LabelFormat { line: i + 1, message: "labels must be 0 or 1".into() });
        }
        records.push(record);
    }
    Ok(records)
}

/// Pairs documents with label records by id. Every document needs labels.
pub fn attach_labels(docs: &[Document], records: &[LabelRecord]) -> Result<Vec<LabeledDocument>, OracleError> {
    let by_id: HashMap<&str, &LabelRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
    docs.iter()
        .map(|doc| {
            let r = by_id.get(doc.id.as_str()).ok_or_else(|| OracleError::MissingLabels(doc.id.clone()))?;
            if r.labels.len() != doc.sentences.len() {
                return Err(OracleError::LabelLength {
                    id: doc.id.clone(),
                    labels: r.labels.len(),
                    sentences: doc.sentences.len(),
                });
            }
            Ok(LabeledDocument {
                doc: doc.clone(),
                labels: r.labels.clone(),
                trace: r.trace.iter().map(|&(index, score)| TraceStep { index, score }).collect(),
            })
        })
        .collect()
}
