use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Sentence, Token};

/// Width of the assembled sentence-feature vector.
pub const SENTENCE_FEATURE_DIM: usize = 12;

/// Count features are multiplied by this before projection.
pub const COUNT_SCALE: f64 = 1.0 / 100.0;

/// Hand-engineered per-sentence side information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceFeatures {
    pub n_numbers: usize,
    pub length: usize,
    pub section_onehot: [f64; 7],
    pub title_overlap: f64,
    pub keyphrase_overlap: usize,
    pub abstract_overlap: usize,
}

impl SentenceFeatures {
    /// Fixed order: numbers, length, seven section indicators, title,
    /// key-phrase and abstract overlap. Counts are scaled by [`COUNT_SCALE`].
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(SENTENCE_FEATURE_DIM);
        v.push(self.n_numbers as f64 * COUNT_SCALE);
        v.push(self.length as f64 * COUNT_SCALE);
        v.extend_from_slice(&self.section_onehot);
        v.push(self.title_overlap);
        v.push(self.keyphrase_overlap as f64 * COUNT_SCALE);
        v.push(self.abstract_overlap as f64 * COUNT_SCALE);
        v
    }
}

fn token_set(tokens: &[Token]) -> HashSet<&str> {
    tokens.iter().map(Token::text).collect()
}

pub fn sentence_features(sentence: &Sentence, doc: &Document) -> SentenceFeatures {
    let title = token_set(&doc.title_tokens);
    let abstract_set = token_set(&doc.abstract_tokens);
    let phrases: HashSet<&str> = doc.key_phrases.iter().flatten().map(Token::text).collect();
    let own = token_set(&sentence.tokens);
    let title_overlap =
        if own.is_empty() { 0.0 } else { own.iter().filter(|t| title.contains(*t)).count() as f64 / own.len() as f64 };
    SentenceFeatures {
        n_numbers: sentence.tokens.iter().filter(|t| t.is_numeric()).count(),
        length: sentence.tokens.len(),
        section_onehot: sentence.section.one_hot(),
        title_overlap,
        keyphrase_overlap: sentence.tokens.iter().filter(|t| phrases.contains(t.text())).count(),
        abstract_overlap: sentence.tokens.iter().filter(|t| abstract_set.contains(t.text())).count(),
    }
}

/// Document-level vectors used to initialise the sentence-level recurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentFeatures {
    pub asjc_vec: Vec<f64>,
    pub title_vec: Vec<f64>,
    pub abstract_vec: Vec<f64>,
}
