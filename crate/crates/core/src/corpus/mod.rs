//! Document model, deterministic preprocessing and corpus I/O.
//!
//! Documents arrive as JSONL, one object per line, with raw strings that are
//! tokenized on load:
//!
//! ```text
//! {"id": "d1", "title": "...", "abstract": "...", "key_phrases": ["..."],
//!  "asjc": ["1303"], "highlights": ["..."],
//!  "sections": [{"title": "Introduction", "sentences": ["...", "..."]}]}
//! ```

mod io;
mod section;
mod stats;
mod tokenize;

use serde::{Deserialize, Serialize};

pub use io::{document_to_record, load_corpus, parse_corpus, write_corpus, DocumentRecord, LoadOptions, SectionRecord};
pub use section::{classify_section, Gazetteer, SectionClass};
pub use stats::{corpus_stats, CorpusStats};
pub use tokenize::{detokenize, is_numeral, tokenize, Token};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: missing required field \"{field}\"")]
    MissingField { line: usize, field: String },
    #[error("line {line}: duplicate document id \"{id}\" (first seen on line {first_line})")]
    DuplicateId { id: String, line: usize, first_line: usize },
    #[error("line {line}: document \"{id}\" has empty sentences")]
    EmptySentences { line: usize, id: String },
    #[error("line {line}: empty document id")]
    EmptyId { line: usize },
    #[error("gazetteer line {line}: {message}")]
    Gazetteer { line: usize, message: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("document {doc}: {labels} labels for {sentences} sentences")]
    LabelMismatch { doc: usize, labels: usize, sentences: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub tokens: Vec<Token>,
    pub section: SectionClass,
    pub raw_section_title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title_tokens: Vec<Token>,
    pub abstract_tokens: Vec<Token>,
    pub key_phrases: Vec<Vec<Token>>,
    pub sentences: Vec<Sentence>,
    pub highlights: Vec<Vec<Token>>,
    pub asjc_codes: Vec<String>,
}

impl Document {
    pub fn sentence_tokens(&self) -> Vec<&[Token]> {
        self.sentences.iter().map(|s| s.tokens.as_slice()).collect()
    }

    pub fn highlight_tokens(&self) -> Vec<&[Token]> {
        self.highlights.iter().map(Vec::as_slice).collect()
    }

    /// Returns a copy with sentences reordered by `order` and reindexed.
    ///
    /// `order[i]` is the original index of the sentence placed at position i.
    pub fn reordered(&self, order: &[usize]) -> Document {
        let sentences = order
            .iter()
            .enumerate()
            .map(|(new_index, &old)| Sentence { index: new_index, ..self.sentences[old].clone() })
            .collect();
        Document { sentences, ..self.clone() }
    }
}
