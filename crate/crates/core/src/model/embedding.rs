use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::ModelError;
use crate::corpus::{Document, Token};
use crate::numerics::{Lookup, ParamId};

/// Ordered set of strings with a reverse index. Row `i` of an embedding
/// table belongs to `tokens()[i]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Duplicate entries are rejected.
    pub fn new(tokens: Vec<String>) -> Result<Self, ModelError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(ModelError::Config(format!("duplicate vocabulary entry '{t}'")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Every token a model reads (titles, abstracts, key phrases, sentences), sorted.
    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Self {
        let mut set = BTreeSet::new();
        for d in docs {
            let all = d
                .title_tokens
                .iter()
                .chain(&d.abstract_tokens)
                .chain(d.key_phrases.iter().flatten())
                .chain(d.sentences.iter().flat_map(|s| &s.tokens));
            set.extend(all.map(|t| t.text().to_string()));
        }
        Vocabulary::new(set.into_iter().collect()).expect("set entries are unique")
    }

    /// Sorted set of ASJC codes across `docs`.
    pub fn asjc_from_documents<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Self {
        let set: BTreeSet<String> = docs.into_iter().flat_map(|d| d.asjc_codes.iter().cloned()).collect();
        Vocabulary::new(set.into_iter().collect()).expect("set entries are unique")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Deterministic pseudo-random vector for `token`, uniform in `(-scale, scale)`.
/// Depends only on `(seed, token, dim)`.
pub fn oov_vector(seed: u64, token: &str, dim: usize, scale: f64) -> Vec<f64> {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(token.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
    (0..dim).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// A vocabulary bound to a `[|V|, dim]` parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub vocab: Vocabulary,
    pub param: ParamId,
    pub dim: usize,
    pub oov_seed: u64,
    pub oov_scale: f64,
}

impl EmbeddingTable {
    /// Lookup rows for `tokens`; unknown tokens get their deterministic random vector.
    pub fn rows(&self, tokens: &[Token]) -> Vec<Lookup> {
        tokens
            .iter()
            .map(|t| match self.vocab.get(t.text()) {
                Some(i) => Lookup::Row(i),
                None => Lookup::Fixed(oov_vector(self.oov_seed, t.text(), self.dim, self.oov_scale)),
            })
            .collect()
    }

    /// Lookup rows for the known entries of `keys`; unknown keys are skipped.
    pub fn known_rows(&self, keys: &[String]) -> Vec<Lookup> {
        keys.iter().filter_map(|k| self.vocab.get(k)).map(Lookup::Row).collect()
    }
}

/// Pretrained vectors read from a whitespace-separated text file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PretrainedVectors {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl PretrainedVectors {
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Parses `token v1 ... vd` lines. Every line must carry exactly `dim`
/// values and no token may repeat.
pub fn parse_pretrained<R: BufRead>(input: R, dim: usize) -> Result<PretrainedVectors, ModelError> {
    let mut vectors = HashMap::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| ModelError::Embeddings { line: line_no, message: e.to_string() })?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ModelError::Embeddings { line: line_no, message: format!("bad value for '{token}': {e}") })?;
        if values.len() != dim {
            return Err(ModelError::Embeddings {
                line: line_no,
                message: format!("'{token}' has {} values, expected {dim}", values.len()),
            });
        }
        if vectors.insert(token.to_string(), values).is_some() {
            return Err(ModelError::Embeddings { line: line_no, message: format!("duplicate token '{token}'") });
        }
    }
    Ok(PretrainedVectors { dim, vectors })
}

pub fn load_pretrained(path: &Path, dim: usize) -> Result<PretrainedVectors, ModelError> {
    let file = std::fs::File::open(path).map_err(|source| ModelError::Io { path: path.to_path_buf(), source })?;
    parse_pretrained(std::io::BufReader::new(file), dim)
}
