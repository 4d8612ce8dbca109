//! Masked negative log-likelihood over a token sequence.

use crate::error::{Error, Result};

/// Per-token loss weights: 1 on response tokens, 0 on prompt and image tokens.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LossMask {
    weights: Vec<bool>,
}

impl LossMask {
    pub fn new(weights: Vec<bool>) -> Self {
        Self { weights }
    }

    /// `prompt_len` zero weights followed by `response_len` ones.
    pub fn response(prompt_len: usize, response_len: usize) -> Self {
        let mut weights = vec![false; prompt_len];
        weights.resize(prompt_len + response_len, true);
        Self { weights }
    }

    pub fn weights(&self) -> &[bool] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn concat(&self, other: &LossMask) -> LossMask {
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        Self { weights }
    }
}

/// `-Σ w_l ln p_l`, where `p_l` is the probability of the correct next token.
pub fn sequence_nll(token_probs: &[f64], mask: &LossMask) -> Result<f64> {
    if token_probs.len() != mask.len() {
        return Err(Error::LengthMismatch(token_probs.len(), mask.len()));
    }
    let mut loss = 0.0;
    for (&p, &w) in token_probs.iter().zip(&mask.weights) {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidProbability(p));
        }
        if w {
            loss -= p.ln();
        }
    }
    Ok(loss)
}
