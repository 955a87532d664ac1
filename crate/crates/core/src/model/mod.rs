//! Sentence encoders, feature fusion, the bidirectional sentence extractor
//! and the independent per-sentence baseline.

mod embedding;
mod encoders;
mod features;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use embedding::{load_pretrained, oov_vector, parse_pretrained, EmbeddingTable, PretrainedVectors, Vocabulary};
pub use encoders::{encode_cnn, encode_mean, encode_rnn, BiLstmWeights, CnnWeights};
pub use features::{sentence_features, DocumentFeatures, SentenceFeatures, COUNT_SCALE, SENTENCE_FEATURE_DIM};

use crate::corpus::Document;
use crate::numerics::{
    decode_checkpoint, encode_checkpoint, lstm_sequence, records_to_store, store_to_records, LstmWeights, NumericsError,
    ParamId, ParamRecord, ParamStore, Tape, Tensor, Var,
};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("sentence has no tokens")]
    EmptySentence,
    #[error("document '{0}' has no sentences")]
    EmptyDocument(String),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("embedding file line {line}: {message}")]
    Embeddings { line: usize, message: String },
    #[error("checkpoint does not match configuration: {0}")]
    CheckpointMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Mean,
    Cnn,
    Rnn,
}

/// `Sequence` runs a bidirectional recurrence over the sentences;
/// `Baseline` classifies every sentence on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Sequence,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    pub encoder_kind: EncoderKind,
    pub architecture: Architecture,
    pub use_sentence_features: bool,
    pub use_document_features: bool,
    pub embed_dim: usize,
    pub encoder_out: usize,
    pub cnn_filters: usize,
    pub cnn_widths: Vec<usize>,
    /// Per direction; the encoder emits twice this.
    pub rnn_hidden: usize,
    pub extractor_hidden: usize,
    pub mlp_hidden: usize,
    pub feature_proj_dim: usize,
    pub feature_proj_layers: usize,
    pub asjc_dim: usize,
    pub trainable_embeddings: bool,
    /// Half-width of the uniform initialisation range.
    pub init_scale: f64,
    pub oov_seed: u64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            encoder_kind: EncoderKind::Cnn,
            architecture: Architecture::Sequence,
            use_sentence_features: true,
            use_document_features: false,
            embed_dim: 100,
            encoder_out: 100,
            cnn_filters: 25,
            cnn_widths: vec![1, 2, 3, 4],
            rnn_hidden: 50,
            extractor_hidden: 128,
            mlp_hidden: 50,
            feature_proj_dim: 16,
            feature_proj_layers: 1,
            asjc_dim: 100,
            trainable_embeddings: true,
            init_scale: 0.1,
            oov_seed: 0,
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("encoder_out", self.encoder_out),
            ("cnn_filters", self.cnn_filters),
            ("rnn_hidden", self.rnn_hidden),
            ("extractor_hidden", self.extractor_hidden),
            ("mlp_hidden", self.mlp_hidden),
            ("feature_proj_dim", self.feature_proj_dim),
            ("feature_proj_layers", self.feature_proj_layers),
            ("asjc_dim", self.asjc_dim),
        ] {
            if v == 0 {
                return err(format!("{name} must be at least 1"));
            }
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return err(format!("init_scale must be positive, got {}", self.init_scale));
        }
        let produced = match self.encoder_kind {
            EncoderKind::Mean => self.embed_dim,
            EncoderKind::Cnn => {
                let mut seen = self.cnn_widths.clone();
                seen.sort_unstable();
                seen.dedup();
                if self.cnn_widths.is_empty() || seen.len() != self.cnn_widths.len() || seen[0] == 0 {
                    return err(format!("cnn_widths must be distinct positive widths, got {:?}", self.cnn_widths));
                }
                self.cnn_filters * self.cnn_widths.len()
            }
            EncoderKind::Rnn => 2 * self.rnn_hidden,
        };
        if produced != self.encoder_out {
            return err(format!("encoder_out is {} but the {:?} encoder produces {produced}", self.encoder_out, self.encoder_kind));
        }
        if self.use_document_features && self.architecture == Architecture::Baseline {
            return err("use_document_features requires the sequence architecture".into());
        }
        Ok(())
    }

    /// Width of one fused sentence vector.
    pub fn sentence_dim(&self) -> usize {
        self.encoder_out + if self.use_sentence_features { self.feature_proj_dim } else { 0 }
    }

    /// Width of the concatenated document-feature vector.
    pub fn document_dim(&self) -> usize {
        self.asjc_dim + 2 * self.embed_dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Words,
    Uniform,
    /// Uniform, plus one on the forget-gate block of width `hidden`.
    LstmBias(usize),
}

struct Slot {
    name: String,
    shape: Vec<usize>,
    init: Init,
    trainable: bool,
}

fn lstm_slots(out: &mut Vec<Slot>, prefix: &str, input: usize, hidden: usize) {
    for dir in ["forward", "backward"] {
        out.push(Slot { name: format!("{prefix}.{dir}.w_ih"), shape: vec![input, 4 * hidden], init: Init::Uniform, trainable: true });
        out.push(Slot { name: format!("{prefix}.{dir}.w_hh"), shape: vec![hidden, 4 * hidden], init: Init::Uniform, trainable: true });
        out.push(Slot { name: format!("{prefix}.{dir}.bias"), shape: vec![4 * hidden], init: Init::LstmBias(hidden), trainable: true });
    }
}

fn dense_slots(out: &mut Vec<Slot>, prefix: &str, input: usize, output: usize) {
    out.push(Slot { name: format!("{prefix}.weight"), shape: vec![input, output], init: Init::Uniform, trainable: true });
    out.push(Slot { name: format!("{prefix}.bias"), shape: vec![output], init: Init::Uniform, trainable: true });
}

const DOC_INIT_MAPS: [&str; 4] = ["h_forward", "c_forward", "h_backward", "c_backward"];

/// Every parameter the configuration needs, in creation order.
fn layout(config: &ExtractorConfig, n_words: usize, n_codes: usize) -> Vec<Slot> {
    let mut out = vec![Slot {
        name: "embedding.words".into(),
        shape: vec![n_words, config.embed_dim],
        init: Init::Words,
        trainable: config.trainable_embeddings,
    }];
    if config.use_document_features {
        out.push(Slot { name: "embedding.asjc".into(), shape: vec![n_codes, config.asjc_dim], init: Init::Uniform, trainable: true });
    }
    match config.encoder_kind {
        EncoderKind::Mean => {}
        EncoderKind::Cnn => {
            for &w in &config.cnn_widths {
                out.push(Slot {
                    name: format!("encoder.cnn.width{w}.weight"),
                    shape: vec![config.cnn_filters, w, config.embed_dim],
                    init: Init::Uniform,
                    trainable: true,
                });
                out.push(Slot { name: format!("encoder.cnn.width{w}.bias"), shape: vec![config.cnn_filters], init: Init::Uniform, trainable: true });
            }
        }
        EncoderKind::Rnn => lstm_slots(&mut out, "encoder.rnn", config.embed_dim, config.rnn_hidden),
    }
    if config.use_sentence_features {
        for k in 0..config.feature_proj_layers {
            let input = if k == 0 { SENTENCE_FEATURE_DIM } else { config.feature_proj_dim };
            dense_slots(&mut out, &format!("features.layer{k}"), input, config.feature_proj_dim);
        }
    }
    let classifier_in = match config.architecture {
        Architecture::Sequence => {
            if config.use_document_features {
                for map in DOC_INIT_MAPS {
                    dense_slots(&mut out, &format!("doc_init.{map}"), config.document_dim(), config.extractor_hidden);
                }
            }
            lstm_slots(&mut out, "extractor", config.sentence_dim(), config.extractor_hidden);
            2 * config.extractor_hidden
        }
        Architecture::Baseline => config.sentence_dim(),
    };
    dense_slots(&mut out, "mlp.hidden", classifier_in, config.mlp_hidden);
    dense_slots(&mut out, "mlp.output", config.mlp_hidden, 2);
    out
}

/// Inverted dropout applied during training.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut dyn RngCore,
}

/// Parameter-free description of a model: configuration, vocabularies and
/// the ids of its parameters inside a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: ExtractorConfig,
    pub words: EmbeddingTable,
    pub asjc: Option<EmbeddingTable>,
    ids: HashMap<String, ParamId>,
}

struct Bound {
    cnn: Option<CnnWeights>,
    rnn: Option<BiLstmWeights>,
    features: Vec<(Var, Var)>,
    doc_init: Option<Vec<(Var, Var)>>,
    extractor: Option<BiLstmWeights>,
    mlp: [Var; 4],
}

impl Network {
    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.ids.get(name).copied()
    }

    fn param(&self, tape: &mut Tape, name: &str) -> Var {
        tape.param(self.ids[name])
    }

    fn lstm(&self, tape: &mut Tape, prefix: &str) -> BiLstmWeights {
        let mut dir = |d: &str| LstmWeights {
            w_ih: self.param(tape, &format!("{prefix}.{d}.w_ih")),
            w_hh: self.param(tape, &format!("{prefix}.{d}.w_hh")),
            bias: self.param(tape, &format!("{prefix}.{d}.bias")),
        };
        BiLstmWeights { forward: dir("forward"), backward: dir("backward") }
    }

    fn dense(&self, tape: &mut Tape, prefix: &str) -> (Var, Var) {
        (self.param(tape, &format!("{prefix}.weight")), self.param(tape, &format!("{prefix}.bias")))
    }

    fn bind(&self, tape: &mut Tape) -> Bound {
        let c = &self.config;
        let cnn = (c.encoder_kind == EncoderKind::Cnn).then(|| CnnWeights {
            banks: c
                .cnn_widths
                .iter()
                .map(|&w| {
                    let (wt, b) = self.dense(tape, &format!("encoder.cnn.width{w}"));
                    (w, wt, b)
                })
                .collect(),
        });
        let rnn = (c.encoder_kind == EncoderKind::Rnn).then(|| self.lstm(tape, "encoder.rnn"));
        let features = if c.use_sentence_features {
            (0..c.feature_proj_layers).map(|k| self.dense(tape, &format!("features.layer{k}"))).collect()
        } else {
            Vec::new()
        };
        let sequence = c.architecture == Architecture::Sequence;
        let doc_init = (sequence && c.use_document_features)
            .then(|| DOC_INIT_MAPS.iter().map(|m| self.dense(tape, &format!("doc_init.{m}"))).collect());
        let extractor = sequence.then(|| self.lstm(tape, "extractor"));
        let (h_w, h_b) = self.dense(tape, "mlp.hidden");
        let (o_w, o_b) = self.dense(tape, "mlp.output");
        Bound { cnn, rnn, features, doc_init, extractor, mlp: [h_w, h_b, o_w, o_b] }
    }

    fn check_document(doc: &Document) -> Result<(), ModelError> {
        if doc.sentences.is_empty() {
            return Err(ModelError::EmptyDocument(doc.id.clone()));
        }
        Ok(())
    }

    /// Fused sentence vectors `[n, sentence_dim]`.
    fn sentence_matrix(&self, tape: &mut Tape, doc: &Document, b: &Bound) -> Result<Var, ModelError> {
        let mut encodings = Vec::with_capacity(doc.sentences.len());
        for s in &doc.sentences {
            let v = match self.config.encoder_kind {
                EncoderKind::Mean => encode_mean(tape, &self.words, &s.tokens)?,
                EncoderKind::Cnn => encode_cnn(tape, &self.words, &s.tokens, b.cnn.as_ref().expect("bound"))?,
                EncoderKind::Rnn => encode_rnn(tape, &self.words, &s.tokens, b.rnn.as_ref().expect("bound"))?,
            };
            encodings.push(v);
        }
        let enc = tape.stack(&encodings)?;
        if b.features.is_empty() {
            return Ok(enc);
        }
        let feats: Vec<f64> = doc.sentences.iter().flat_map(|s| sentence_features(s, doc).to_vector()).collect();
        let mut x = tape.constant(Tensor::matrix(doc.sentences.len(), SENTENCE_FEATURE_DIM, feats)?);
        for &(w, bias) in &b.features {
            let lin = tape.matmul(x, w)?;
            let lin = tape.add(lin, bias)?;
            x = tape.relu(lin);
        }
        Ok(tape.concat(&[enc, x])?)
    }

    /// Concatenated `[asjc, title, abstract]` vector for `doc`.
    pub fn document_vector(&self, tape: &mut Tape, doc: &Document) -> Result<Var, ModelError> {
        let d = self.config.embed_dim;
        let asjc = match &self.asjc {
            Some(table) if !table.known_rows(&doc.asjc_codes).is_empty() => {
                let rows = table.known_rows(&doc.asjc_codes);
                let n = rows.len() as f64;
                let e = tape.lookup(table.param, &rows)?;
                let mean = tape.mean_over_axis(e, 0)?;
                let sum = tape.scale(mean, n);
                tape.l2_normalize(sum)?
            }
            _ => tape.constant(Tensor::zeros(&[self.config.asjc_dim])),
        };
        let mut average = |tokens: &[crate::corpus::Token]| -> Result<Var, ModelError> {
            if tokens.is_empty() {
                Ok(tape.constant(Tensor::zeros(&[d])))
            } else {
                encode_mean(tape, &self.words, tokens)
            }
        };
        let title = average(&doc.title_tokens)?;
        let abs = average(&doc.abstract_tokens)?;
        Ok(tape.concat(&[asjc, title, abs])?)
    }

    fn classify(&self, tape: &mut Tape, z: Var, b: &Bound, dropout: &mut Option<Dropout>) -> Result<Var, ModelError> {
        let [h_w, h_b, o_w, o_b] = b.mlp;
        let h = tape.matmul(z, h_w)?;
        let h = tape.add(h, h_b)?;
        let mut h = tape.relu(h);
        if let Some(d) = dropout.as_mut() {
            h = tape.dropout(h, d.rate, &mut *d.rng)?;
        }
        let logits = tape.matmul(h, o_w)?;
        let logits = tape.add(logits, o_b)?;
        let probs = tape.softmax(logits)?;
        Ok(tape.column(probs, 1)?)
    }

    fn contextualize_bound(&self, tape: &mut Tape, doc: &Document, x: Var, b: &Bound) -> Result<Var, ModelError> {
        let Some(lstm) = &b.extractor else {
            return Ok(x);
        };
        let h = self.config.extractor_hidden;
        let initial = match &b.doc_init {
            Some(maps) => {
                let v = self.document_vector(tape, doc)?;
                let mut states = Vec::with_capacity(4);
                for &(w, bias) in maps {
                    let lin = tape.matmul(v, w)?;
                    let lin = tape.add(lin, bias)?;
                    states.push(tape.tanh(lin));
                }
                states
            }
            None => vec![tape.constant(Tensor::zeros(&[h])); 4],
        };
        let (fwd, _, _) = lstm_sequence(tape, x, initial[0], initial[1], &lstm.forward, false)?;
        let (bwd, _, _) = lstm_sequence(tape, x, initial[2], initial[3], &lstm.backward, true)?;
        let fwd = tape.stack(&fwd)?;
        let bwd = tape.stack(&bwd)?;
        Ok(tape.concat(&[fwd, bwd])?)
    }

    /// Encoded sentences, with projected surface features appended when
    /// enabled: `[n, sentence_dim]`.
    pub fn sentence_vectors(&self, tape: &mut Tape, doc: &Document) -> Result<Var, ModelError> {
        Self::check_document(doc)?;
        let b = self.bind(tape);
        self.sentence_matrix(tape, doc, &b)
    }

    /// Runs the sentence-level extractor over `x` (`[n, sentence_dim]`).
    /// The baseline architecture returns `x` unchanged.
    pub fn contextualize(&self, tape: &mut Tape, doc: &Document, x: Var) -> Result<Var, ModelError> {
        let b = self.bind(tape);
        self.contextualize_bound(tape, doc, x, &b)
    }

    /// Positive-class probabilities for the rows of `z`, without dropout.
    pub fn classify_rows(&self, tape: &mut Tape, z: Var) -> Result<Var, ModelError> {
        let b = self.bind(tape);
        self.classify(tape, z, &b, &mut None)
    }

    /// Positive-class probability per sentence, as a `[n]` node.
    pub fn forward(&self, tape: &mut Tape, doc: &Document, mut dropout: Option<Dropout>) -> Result<Var, ModelError> {
        Self::check_document(doc)?;
        let b = self.bind(tape);
        let mut x = self.sentence_matrix(tape, doc, &b)?;
        if let Some(d) = dropout.as_mut() {
            x = tape.dropout(x, d.rate, &mut *d.rng)?;
        }
        let z = self.contextualize_bound(tape, doc, x, &b)?;
        self.classify(tape, z, &b, &mut dropout)
    }
}

/// A network together with its parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub net: Network,
    pub store: ParamStore,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointPayload {
    config: ExtractorConfig,
    vocabulary: Vec<String>,
    asjc_codes: Vec<String>,
    params: Vec<ParamRecord>,
}

fn build_network(config: &ExtractorConfig, words: Vocabulary, asjc: Vocabulary, store: &ParamStore) -> Network {
    let ids: HashMap<String, ParamId> = store.iter().map(|(id, name, _)| (name.to_string(), id)).collect();
    let words = EmbeddingTable {
        vocab: words,
        param: ids["embedding.words"],
        dim: config.embed_dim,
        oov_seed: config.oov_seed,
        oov_scale: config.init_scale,
    };
    let asjc = config.use_document_features.then(|| EmbeddingTable {
        vocab: asjc,
        param: ids["embedding.asjc"],
        dim: config.asjc_dim,
        oov_seed: config.oov_seed,
        oov_scale: config.init_scale,
    });
    Network { config: config.clone(), words, asjc, ids }
}

impl Model {
    /// Freshly initialised model. Word rows come from `pretrained` when the
    /// token is present there, otherwise from the token's deterministic
    /// random vector; every other parameter is drawn from `seed`.
    pub fn new(
        config: ExtractorConfig,
        words: Vocabulary,
        asjc: Vocabulary,
        pretrained: Option<&PretrainedVectors>,
        seed: u64,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if let Some(p) = pretrained {
            if p.dim != config.embed_dim {
                return Err(ModelError::Config(format!("pretrained vectors have dimension {}, embed_dim is {}", p.dim, config.embed_dim)));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = config.init_scale;
        let mut store = ParamStore::new();
        for slot in layout(&config, words.len(), asjc.len()) {
            let n: usize = slot.shape.iter().product();
            let data = match slot.init {
                Init::Words => words
                    .tokens()
                    .iter()
                    .flat_map(|t| match pretrained.and_then(|p| p.get(t)) {
                        Some(v) => v.to_vec(),
                        None => oov_vector(config.oov_seed, t, config.embed_dim, scale),
                    })
                    .collect(),
                Init::Uniform => (0..n).map(|_| rng.gen_range(-scale..scale)).collect(),
                Init::LstmBias(h) => {
                    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
                    v[h..2 * h].iter_mut().for_each(|x| *x += 1.0);
                    v
                }
            };
            store.add(slot.name, Tensor::new(slot.shape, data)?.with_requires_grad(slot.trainable))?;
        }
        let net = build_network(&config, words, asjc, &store);
        Ok(Model { net, store })
    }

    /// Model whose vocabularies cover `docs`.
    pub fn for_documents(
        config: ExtractorConfig,
        docs: &[Document],
        pretrained: Option<&PretrainedVectors>,
        seed: u64,
    ) -> Result<Self, ModelError> {
        Model::new(config, Vocabulary::from_documents(docs), Vocabulary::asjc_from_documents(docs), pretrained, seed)
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.net.config
    }

    /// Positive-class probability for every sentence of `doc`, without dropout.
    pub fn predict(&self, doc: &Document) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new(&self.store);
        let p = self.net.forward(&mut tape, doc, None)?;
        Ok(tape.data(p).to_vec())
    }

    /// Indices of the `k` most probable sentences, in document order.
    pub fn summarize(&self, doc: &Document, k: usize) -> Result<(Vec<usize>, Vec<f64>), ModelError> {
        let p = self.predict(doc)?;
        Ok((rank_top_k(&p, k), p))
    }

    pub fn document_features(&self, doc: &Document) -> Result<DocumentFeatures, ModelError> {
        let mut tape = Tape::new(&self.store);
        let v = self.net.document_vector(&mut tape, doc)?;
        let data = tape.data(v);
        let (a, d) = (self.net.config.asjc_dim, self.net.config.embed_dim);
        Ok(DocumentFeatures {
            asjc_vec: data[..a].to_vec(),
            title_vec: data[a..a + d].to_vec(),
            abstract_vec: data[a + d..].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let payload = CheckpointPayload {
            config: self.net.config.clone(),
            vocabulary: self.net.words.vocab.tokens().to_vec(),
            asjc_codes: self.net.asjc.as_ref().map(|t| t.vocab.tokens().to_vec()).unwrap_or_default(),
            params: store_to_records(&self.store),
        };
        Ok(encode_checkpoint(&payload)?)
    }

    /// Restores a checkpoint. When `expected` is given, the checkpoint's
    /// parameters must fit that configuration.
    pub fn from_bytes(bytes: &[u8], expected: Option<&ExtractorConfig>) -> Result<Self, ModelError> {
        let payload: CheckpointPayload = decode_checkpoint(bytes)?;
        let config = expected.unwrap_or(&payload.config).clone();
        config.validate()?;
        let words = Vocabulary::new(payload.vocabulary)?;
        let asjc = Vocabulary::new(payload.asjc_codes)?;
        let slots = layout(&config, words.len(), asjc.len());
        let found: HashMap<&str, &ParamRecord> = payload.params.iter().map(|r| (r.name.as_str(), r)).collect();
        for slot in &slots {
            match found.get(slot.name.as_str()) {
                None => return Err(ModelError::CheckpointMismatch(format!("parameter '{}' is missing", slot.name))),
                Some(r) if r.shape != slot.shape => {
                    return Err(ModelError::CheckpointMismatch(format!(
                        "parameter '{}' has shape {:?}, expected {:?}",
                        slot.name, r.shape, slot.shape
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some(extra) = payload.params.iter().find(|r| !slots.iter().any(|s| s.name == r.name)) {
            return Err(ModelError::CheckpointMismatch(format!("unexpected parameter '{}' with shape {:?}", extra.name, extra.shape)));
        }
        let store = records_to_store(payload.params)?;
        let net = build_network(&config, words, asjc, &store);
        Ok(Model { net, store })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()?).map_err(|source| ModelError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path, expected: Option<&ExtractorConfig>) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|source| ModelError::Io { path: path.to_path_buf(), source })?;
        Model::from_bytes(&bytes, expected)
    }
}

/// The `k` highest probabilities (all indices when fewer than `k`), ties to
/// the lower index, returned in ascending index order.
pub fn rank_top_k(probabilities: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probabilities.len()).collect();
    order.sort_by(|&a, &b| probabilities[b].total_cmp(&probabilities[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}
