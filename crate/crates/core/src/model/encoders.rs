use super::embedding::EmbeddingTable;
use super::ModelError;
use crate::corpus::Token;
use crate::numerics::{lstm_sequence, LstmWeights, Tape, Tensor, Var};

/// One filter bank per width: weights `[filters, width, d]`, bias `[filters]`.
#[derive(Debug, Clone)]
pub struct CnnWeights {
    pub banks: Vec<(usize, Var, Var)>,
}

#[derive(Debug, Clone, Copy)]
pub struct BiLstmWeights {
    pub forward: LstmWeights,
    pub backward: LstmWeights,
}

fn embed(tape: &mut Tape, table: &EmbeddingTable, tokens: &[Token]) -> Result<Var, ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::EmptySentence);
    }
    Ok(tape.lookup(table.param, &table.rows(tokens))?)
}

/// Mean of the token embeddings.
pub fn encode_mean(tape: &mut Tape, table: &EmbeddingTable, tokens: &[Token]) -> Result<Var, ModelError> {
    let e = embed(tape, table, tokens)?;
    Ok(tape.mean_over_axis(e, 0)?)
}

/// Per width: valid convolution, relu, max over time; banks concatenated.
/// Sentences shorter than a width are right-padded with zero rows.
pub fn encode_cnn(tape: &mut Tape, table: &EmbeddingTable, tokens: &[Token], w: &CnnWeights) -> Result<Var, ModelError> {
    let e = embed(tape, table, tokens)?;
    let mut pooled = Vec::with_capacity(w.banks.len());
    for &(width, filters, bias) in &w.banks {
        let x = tape.pad_rows(e, width)?;
        let c = tape.conv1d(x, filters, bias)?;
        let r = tape.relu(c);
        pooled.push(tape.max_over_time(r)?);
    }
    Ok(tape.concat(&pooled)?)
}

/// Final forward state concatenated with the final backward state.
pub fn encode_rnn(tape: &mut Tape, table: &EmbeddingTable, tokens: &[Token], w: &BiLstmWeights) -> Result<Var, ModelError> {
    let e = embed(tape, table, tokens)?;
    let hidden = tape.shape(w.forward.w_hh)[0];
    let zero = tape.constant(Tensor::zeros(&[hidden]));
    let (_, h_fwd, _) = lstm_sequence(tape, e, zero, zero, &w.forward, false)?;
    let (_, h_bwd, _) = lstm_sequence(tape, e, zero, zero, &w.backward, true)?;
    Ok(tape.concat(&[h_fwd, h_bwd])?)
}
