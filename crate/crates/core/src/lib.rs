//! Extractive summarisation of scientific articles as sequence tagging.
//!
//! The crate covers the whole pipeline:
//!
//! - [`corpus`]: document model, tokenizer, section gazetteer, JSONL I/O.
//! - [`rouge`]: ROUGE-N and sentence/summary-level ROUGE-L.
//! - [`oracle`]: greedy oracle labels against author highlights.
//! - [`numerics`]: tensors with reverse-mode gradients, Adam, gradient checks.
//! - [`model`]: MEAN/CNN/RNN sentence encoders, sentence and document
//!   features, the bi-directional LSTM extractor and the independent baseline.
//! - [`training`]: weighted NLL objective and the training loop.
//! - [`evaluation`]: rouge-l-f@4, approximate randomisation, structural reports.
//! - [`cli`]: the `extsum` command line.

pub mod cli;
pub mod corpus;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod rouge;
pub mod synthetic;
pub mod training;
