use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{detokenize, tokenize, CorpusError, Document, Gazetteer, Sentence};

/// One JSONL line of the corpus format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default, rename = "abstract")]
    pub abstract_text: String,
    #[serde(default)]
    pub key_phrases: Vec<String>,
    #[serde(default)]
    pub asjc: Vec<String>,
    #[serde(default)]
    pub highlights: Vec<String>,
    pub sections: Vec<SectionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionRecord {
    #[serde(default)]
    pub title: String,
    pub sentences: Vec<String>,
}

const REQUIRED_FIELDS: [&str; 2] = ["id", "sections"];

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Reject documents without any sentence (training and labelling corpora).
    pub require_sentences: bool,
    pub gazetteer: Gazetteer,
}

impl LoadOptions {
    pub fn training() -> Self {
        LoadOptions { require_sentences: true, gazetteer: Gazetteer::default() }
    }
}

pub fn load_corpus(path: &Path, options: &LoadOptions) -> Result<Vec<Document>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text, options)
}

/// Parses JSONL text. Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_corpus(text: &str, options: &LoadOptions) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(raw)
            .map_err(|e| CorpusError::Parse { line, message: e.to_string() })?;
        let object = value
            .as_object()
            .ok_or_else(|| CorpusError::Parse { line, message: "expected a JSON object".into() })?;
        for field in REQUIRED_FIELDS {
            if !object.contains_key(field) {
                return Err(CorpusError::MissingField { line, field: field.into() });
            }
        }
        let record: DocumentRecord = serde_json::from_value(value)
            .map_err(|e| CorpusError::Parse { line, message: e.to_string() })?;
        let doc = record_to_document(record, &options.gazetteer);
        if doc.id.is_empty() {
            return Err(CorpusError::EmptyId { line });
        }
        if options.require_sentences && doc.sentences.is_empty() {
            return Err(CorpusError::EmptySentences { line, id: doc.id });
        }
        if let Some(&first_line) = seen.get(&doc.id) {
            return Err(CorpusError::DuplicateId { id: doc.id, line, first_line });
        }
        seen.insert(doc.id.clone(), line);
        docs.push(doc);
    }
    Ok(docs)
}

fn non_empty_token_lists(texts: &[String]) -> Vec<Vec<super::Token>> {
    texts.iter().map(|t| tokenize(t)).filter(|t| !t.is_empty()).collect()
}

fn record_to_document(record: DocumentRecord, gazetteer: &Gazetteer) -> Document {
    let mut sentences = Vec::new();
    for section in &record.sections {
        let class = gazetteer.classify(&section.title);
        for text in &section.sentences {
            let tokens = tokenize(text);
            // Punctuation-only sentences carry nothing to score or encode.
            if tokens.is_empty() {
                continue;
            }
            sentences.push(Sentence {
                index: sentences.len(),
                tokens,
                section: class,
                raw_section_title: section.title.clone(),
            });
        }
    }
    Document {
        id: record.id,
        title_tokens: tokenize(&record.title),
        abstract_tokens: tokenize(&record.abstract_text),
        key_phrases: non_empty_token_lists(&record.key_phrases),
        sentences,
        highlights: non_empty_token_lists(&record.highlights),
        asjc_codes: record.asjc,
    }
}

/// Converts a document back to the line format. Consecutive sentences with the
/// same raw section title are grouped into one section.
pub fn document_to_record(doc: &Document) -> DocumentRecord {
    let mut sections: Vec<SectionRecord> = Vec::new();
    for s in &doc.sentences {
        let text = detokenize(&s.tokens);
        match sections.last_mut() {
            Some(last) if last.title == s.raw_section_title => last.sentences.push(text),
            _ => sections.push(SectionRecord { title: s.raw_section_title.clone(), sentences: vec![text] }),
        }
    }
    DocumentRecord {
        id: doc.id.clone(),
        title: detokenize(&doc.title_tokens),
        abstract_text: detokenize(&doc.abstract_tokens),
        key_phrases: doc.key_phrases.iter().map(|k| detokenize(k)).collect(),
        asjc: doc.asjc_codes.clone(),
        highlights: doc.highlights.iter().map(|h| detokenize(h)).collect(),
        sections,
    }
}

pub fn write_corpus<W: Write>(mut out: W, docs: &[Document]) -> std::io::Result<()> {
    for doc in docs {
        let line = serde_json::to_string(&document_to_record(doc)).map_err(std::io::Error::other)?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}
