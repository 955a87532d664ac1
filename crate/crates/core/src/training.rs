//! Weighted log-likelihood objective, the batch/epoch driver, early stopping
//! and the sentence-shuffle ablation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evaluation;
use crate::model::{Dropout, ExtractorConfig, Model, ModelError, PretrainedVectors};
use crate::numerics::{weighted_nll_value, Gradients, NumericsError, OptimizerState, ParamStore, Tape};
use crate::oracle::LabeledDocument;
use crate::synthetic::shuffle_sentences;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("class {0} never occurs in the training labels; class weights are undefined")]
    MissingClass(u8),
    #[error("{probabilities} probabilities for {labels} labels")]
    LengthMismatch { probabilities: usize, labels: usize },
    #[error("document '{id}' has {labels} labels for {sentences} sentences")]
    LabelMismatch { id: String, labels: usize, sentences: usize },
    #[error("training diverged: loss {loss} in epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },
}

/// `PositiveRatio` weights positives by `w1 = N1/N0`; `InverseFrequency`
/// uses `w1 = N0/N1`, which up-weights the minority class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    PositiveRatio,
    InverseFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dropout: f64,
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub weight_mode: WeightMode,
    pub shuffle_train_sentences: bool,
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            dropout: 0.25,
            clip_norm: 1.0,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            weight_mode: WeightMode::PositiveRatio,
            shuffle_train_sentences: false,
            batch_size: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let err = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return err(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return err(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return err("max_epochs and batch_size must be at least 1".into());
        }
        if self.patience >= self.max_epochs {
            return err(format!("patience ({}) must be smaller than max_epochs ({})", self.patience, self.max_epochs));
        }
        Ok(())
    }
}

/// `(w0, w1)` from the label counts of a whole split.
pub fn class_weights(labels: &[u8], mode: WeightMode) -> Result<(f64, f64), TrainError> {
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = labels.len() - n1;
    if n0 == 0 {
        return Err(TrainError::MissingClass(0));
    }
    if n1 == 0 {
        return Err(TrainError::MissingClass(1));
    }
    let (n0, n1) = (n0 as f64, n1 as f64);
    Ok(match mode {
        WeightMode::PositiveRatio => (1.0, n1 / n0),
        WeightMode::InverseFrequency => (1.0, n0 / n1),
    })
}

/// `-Σ w(y_i) ln p(y_i)` with natural log and probabilities clamped to
/// `[1e-12, 1 - 1e-12]`.
pub fn doc_loss(probabilities: &[f64], labels: &[u8], w0: f64, w1: f64) -> Result<f64, TrainError> {
    if probabilities.len() != labels.len() {
        return Err(TrainError::LengthMismatch { probabilities: probabilities.len(), labels: labels.len() });
    }
    Ok(weighted_nll_value(probabilities, labels, w0, w1))
}

/// Stops once the monitored loss has failed to strictly decrease for
/// `patience` consecutive observations.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_best: usize,
    seen: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::INFINITY, best_epoch: 0, since_best: 0, seen: 0 }
    }

    /// Records one epoch's loss; returns true when it is a new best.
    pub fn observe(&mut self, loss: f64) -> bool {
        self.seen += 1;
        if loss < self.best {
            self.best = loss;
            self.best_epoch = self.seen;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    /// 1-based epoch of the lowest loss so far (0 before any observation).
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub validation_rouge_l_f_at_4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub class_weights: (f64, f64),
    pub train_config: TrainConfig,
    pub model_config: ExtractorConfig,
    pub checkpoint_path: Option<String>,
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Model,
    pub report: TrainReport,
}

fn check_labels(docs: &[LabeledDocument]) -> Result<(), TrainError> {
    for d in docs {
        if d.labels.len() != d.doc.sentences.len() {
            return Err(TrainError::LabelMismatch { id: d.doc.id.clone(), labels: d.labels.len(), sentences: d.doc.sentences.len() });
        }
        if d.doc.sentences.is_empty() {
            return Err(ModelError::EmptyDocument(d.doc.id.clone()).into());
        }
    }
    Ok(())
}

/// Loss and gradients of one document.
fn document_step(
    model: &Model,
    doc: &LabeledDocument,
    weights: (f64, f64),
    dropout: f64,
    dropout_seed: u64,
) -> Result<(f64, Gradients), TrainError> {
    let mut tape = Tape::new(&model.store);
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let drop = (dropout > 0.0).then_some(Dropout { rate: dropout, rng: &mut rng });
    let p = model.net.forward(&mut tape, &doc.doc, drop)?;
    let loss = tape.weighted_nll(p, &doc.labels, weights.0, weights.1)?;
    let value = tape.scalar(loss);
    Ok((value, tape.backward(loss)?))
}

/// Mean per-document loss and mean top-4 ROUGE-L F over `docs`, without dropout.
pub fn validate_model(model: &Model, docs: &[LabeledDocument], weights: (f64, f64)) -> Result<(f64, f64), TrainError> {
    let per_doc: Vec<(f64, Option<f64>)> = docs
        .par_iter()
        .map(|d| {
            let p = model.predict(&d.doc)?;
            let loss = doc_loss(&p, &d.labels, weights.0, weights.1)?;
            let selected = crate::model::rank_top_k(&p, evaluation::TOP_K);
            Ok((loss, evaluation::selection_score(&d.doc, &selected)))
        })
        .collect::<Result<_, TrainError>>()?;
    let loss = per_doc.iter().map(|(l, _)| l).sum::<f64>() / docs.len() as f64;
    let scores: Vec<f64> = per_doc.iter().filter_map(|(_, s)| *s).collect();
    let rouge = if scores.is_empty() { 0.0 } else { scores.iter().sum::<f64>() / scores.len() as f64 };
    Ok((loss, rouge))
}

/// Trains a freshly initialised model whose vocabulary covers the training split.
pub fn train(
    train_docs: &[LabeledDocument],
    val_docs: &[LabeledDocument],
    model_config: &ExtractorConfig,
    config: &TrainConfig,
    pretrained: Option<&PretrainedVectors>,
) -> Result<TrainOutcome, TrainError> {
    let docs: Vec<_> = train_docs.iter().map(|d| d.doc.clone()).collect();
    let model = Model::for_documents(model_config.clone(), &docs, pretrained, config.seed)?;
    train_model(model, train_docs, val_docs, config)
}

/// Trains `model` in place of its current parameters.
///
/// Per batch the per-document gradients may be computed in parallel; they
/// are summed in batch order, divided by the batch size, clipped and applied.
/// All randomness (document order, sentence shuffles, dropout masks) comes
/// from one driver stream seeded by `config.seed`.
pub fn train_model(
    mut model: Model,
    train_docs: &[LabeledDocument],
    val_docs: &[LabeledDocument],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_docs.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    if val_docs.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    check_labels(train_docs)?;
    check_labels(val_docs)?;
    let all_labels: Vec<u8> = train_docs.iter().flat_map(|d| d.labels.iter().copied()).collect();
    let weights = class_weights(&all_labels, config.weight_mode)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let shuffled: Vec<LabeledDocument>;
    let train_docs = if config.shuffle_train_sentences {
        shuffled = train_docs.iter().map(|d| shuffle_sentences(&mut rng, d)).collect();
        &shuffled[..]
    } else {
        train_docs
    };

    let mut optimizer = OptimizerState::new(&model.store, config.learning_rate, config.clip_norm);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_store: Option<ParamStore> = None;
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..train_docs.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let seeds: Vec<u64> = batch.iter().map(|_| rng.gen()).collect();
            let results: Vec<(f64, Gradients)> = batch
                .par_iter()
                .zip(seeds.par_iter())
                .map(|(&i, &seed)| document_step(&model, &train_docs[i], weights, config.dropout, seed))
                .collect::<Result<_, _>>()?;
            let mut grads = Gradients::empty(model.store.len());
            let mut batch_loss = 0.0;
            for (loss, g) in &results {
                batch_loss += loss;
                grads.add_assign(g);
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::Divergence { epoch, batch: b + 1, loss: batch_loss });
            }
            total += batch_loss;
            grads.scale(1.0 / batch.len() as f64);
            model.store.accumulate(&grads);
            optimizer.clip_and_step(&mut model.store)?;
        }
        let train_loss = total / train_docs.len() as f64;
        let (validation_loss, rouge) = validate_model(&model, val_docs, weights)?;
        if !validation_loss.is_finite() {
            return Err(TrainError::Divergence { epoch, batch: 0, loss: validation_loss });
        }
        epochs.push(EpochRecord { epoch, train_loss, validation_loss, validation_rouge_l_f_at_4: rouge });
        if stopper.observe(validation_loss) {
            best_store = Some(model.store.clone());
        }
        if stopper.should_stop() {
            break;
        }
    }

    let stopped_early = epochs.len() < config.max_epochs;
    if let Some(best) = best_store {
        model.store = best;
    }
    model.store.zero_grads();
    let report = TrainReport {
        epochs,
        best_epoch: stopper.best_epoch(),
        stopped_early,
        class_weights: weights,
        train_config: config.clone(),
        model_config: model.config().clone(),
        checkpoint_path: None,
    };
    Ok(TrainOutcome { model, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, EncoderKind};
    use crate::synthetic::{marker_corpus, SyntheticSpec};

    #[test]
    fn class_weight_examples() {
        let mut labels = vec![0u8; 90];
        labels.extend([1u8; 10]);
        let (w0, w1) = class_weights(&labels, WeightMode::PositiveRatio).unwrap();
        assert_eq!(w0, 1.0);
        assert!((w1 - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(class_weights(&labels, WeightMode::InverseFrequency).unwrap(), (1.0, 9.0));
        for mode in [WeightMode::PositiveRatio, WeightMode::InverseFrequency] {
            assert_eq!(class_weights(&[0, 1, 1, 0], mode).unwrap(), (1.0, 1.0));
        }
        assert!(matches!(class_weights(&[0, 0], WeightMode::PositiveRatio), Err(TrainError::MissingClass(1))));
        assert!(matches!(class_weights(&[1], WeightMode::PositiveRatio), Err(TrainError::MissingClass(0))));
    }

    #[test]
    fn doc_loss_examples() {
        let l = doc_loss(&[0.5, 0.5, 0.5], &[1, 0, 0], 1.0, 0.5).unwrap();
        assert!((l - 2.5 * std::f64::consts::LN_2).abs() < 1e-12);
        let l = doc_loss(&[0.25], &[1], 1.0, 1.0).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        let l = doc_loss(&[1.0 - 1e-15, 1e-15], &[1, 0], 3.0, 7.0).unwrap();
        assert!(l < 1e-10);
        assert!(matches!(doc_loss(&[0.5], &[1, 0], 1.0, 1.0), Err(TrainError::LengthMismatch { .. })));
    }

    #[test]
    fn unit_weights_match_cross_entropy() {
        let p = [0.1f64, 0.7, 0.45, 0.99];
        let y = [0u8, 1, 1, 0];
        let ce: f64 = p.iter().zip(&y).map(|(&p, &y)| if y == 1 { -p.ln() } else { -(1.0 - p).ln() }).sum();
        assert!((doc_loss(&p, &y, 1.0, 1.0).unwrap() - ce).abs() < 1e-12);
    }

    #[test]
    fn early_stopping_example() {
        let mut s = EarlyStopping::new(5);
        let mut stopped_after = None;
        for (i, loss) in [3.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 1.0].iter().enumerate() {
            s.observe(*loss);
            if s.should_stop() {
                stopped_after = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped_after, Some(7));
        assert_eq!(s.best_epoch(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { patience: 50, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { dropout: 1.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
    }

    fn small_model_config() -> ExtractorConfig {
        ExtractorConfig {
            encoder_kind: EncoderKind::Mean,
            architecture: Architecture::Sequence,
            embed_dim: 16,
            encoder_out: 16,
            extractor_hidden: 16,
            mlp_hidden: 16,
            ..ExtractorConfig::default()
        }
    }

    fn corpus(seed: u64, n: usize) -> Vec<LabeledDocument> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        marker_corpus(&mut rng, n, 10, 2, &SyntheticSpec::default())
    }

    /// Label = the sentence itself contains the marker token.
    fn separable(n: usize) -> Vec<LabeledDocument> {
        corpus(0, n)
            .into_iter()
            .map(|mut d| {
                d.labels = d.doc.sentences.iter().map(|s| s.tokens.iter().any(|t| t.text() == crate::synthetic::MARKER) as u8).collect();
                d
            })
            .collect()
    }

    #[test]
    fn separable_corpus_training_loss_decreases() {
        let docs = separable(20);
        let config = TrainConfig { learning_rate: 1e-3, max_epochs: 6, seed: 0, ..TrainConfig::default() };
        let out = train(&docs, &docs, &small_model_config(), &config, None).unwrap();
        let losses: Vec<f64> = out.report.epochs.iter().map(|e| e.train_loss).collect();
        for w in losses[..5].windows(2) {
            assert!(w[1] < w[0], "{losses:?}");
        }
    }

    #[test]
    fn training_is_bit_reproducible_and_keeps_best() {
        let docs = corpus(1, 12);
        let (tr, va) = docs.split_at(8);
        let config = TrainConfig { learning_rate: 1e-3, max_epochs: 4, patience: 2, shuffle_train_sentences: true, ..TrainConfig::default() };
        let a = train(tr, va, &small_model_config(), &config, None).unwrap();
        let b = train(tr, va, &small_model_config(), &config, None).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.model.to_bytes().unwrap(), b.model.to_bytes().unwrap());
        let best = &a.report.epochs[a.report.best_epoch - 1];
        assert!(a.report.epochs[..a.report.best_epoch].iter().all(|e| e.validation_loss >= best.validation_loss));
        let (val_loss, _) = validate_model(&a.model, va, a.report.class_weights).unwrap();
        assert_eq!(val_loss, best.validation_loss);
    }

    #[test]
    fn zero_learning_rate_and_frozen_embeddings_leave_parameters() {
        let docs = corpus(2, 6);
        let frozen = ExtractorConfig { trainable_embeddings: false, ..small_model_config() };
        let before = Model::for_documents(frozen.clone(), &docs.iter().map(|d| d.doc.clone()).collect::<Vec<_>>(), None, 0).unwrap();
        let config = TrainConfig { max_epochs: 2, patience: 1, learning_rate: 1e-3, ..TrainConfig::default() };
        let out = train_model(before.clone(), &docs, &docs, &config).unwrap();
        let emb = before.net.words.param;
        assert_eq!(out.model.store.get(emb).data(), before.store.get(emb).data());
        assert_ne!(out.model.store, before.store);

        let config = TrainConfig { learning_rate: 0.0, max_epochs: 2, patience: 1, ..TrainConfig::default() };
        let out = train_model(before.clone(), &docs, &docs, &config).unwrap();
        for ((_, _, a), (_, _, b)) in out.model.store.iter().zip(before.store.iter()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn empty_splits_and_missing_classes_are_errors() {
        let docs = corpus(3, 2);
        assert!(matches!(train(&[], &docs, &small_model_config(), &TrainConfig::default(), None), Err(TrainError::EmptySplit(_))));
        assert!(matches!(train(&docs, &[], &small_model_config(), &TrainConfig::default(), None), Err(TrainError::EmptySplit(_))));
        let mut negatives = docs.clone();
        negatives.iter_mut().for_each(|d| d.labels.iter_mut().for_each(|y| *y = 0));
        assert!(matches!(train(&negatives, &docs, &small_model_config(), &TrainConfig::default(), None), Err(TrainError::MissingClass(1))));
    }

    #[test]
    fn divergence_is_reported() {
        let docs = corpus(4, 4);
        let mut model = Model::for_documents(small_model_config(), &docs.iter().map(|d| d.doc.clone()).collect::<Vec<_>>(), None, 0).unwrap();
        let id = model.net.param_id("mlp.output.bias").unwrap();
        model.store.get_mut(id).data_mut()[0] = f64::NAN;
        let err = train_model(model, &docs, &docs, &TrainConfig { max_epochs: 2, patience: 1, ..TrainConfig::default() });
        assert!(matches!(err, Err(TrainError::Divergence { .. })), "{:?}", err.err());
    }
}
