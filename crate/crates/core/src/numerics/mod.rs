//! Dense tensors, a reverse-mode tape, Adam with global-norm clipping,
//! finite-difference gradient checks and the checkpoint container.

mod checkpoint;
mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, records_to_store, store_to_records, ParamRecord, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, grad_check_smooth, GradCheckReport};
pub use optim::{clip_global_norm, global_norm, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{lstm_cell, lstm_sequence, Lookup, LstmWeights, Tape, Var, PROB_CLAMP};
pub(crate) use tape::weighted_nll_value;
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("parameter '{0}' has no gradient")]
    MissingGrad(String),
    #[error("function is not deterministic: two evaluations gave {first} and {second}")]
    NonDeterministic { first: f64, second: f64 },
    #[error("duplicate parameter '{0}'")]
    DuplicateParam(String),
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint checksum mismatch: header says {expected}, body hashes to {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(String),
}

#[cfg(test)]
mod tests;
