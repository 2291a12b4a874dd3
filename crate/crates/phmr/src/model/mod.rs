//! The two trainable models: the personality-aware multiple-choice reasoner
//! ([`prm::PrmModel`]) and the four-dimension personality predictor
//! ([`predictor::PredictorModel`]). Both share the same embedding/attention
//! vocabulary of parts; neither shares weights with the other.

pub mod predictor;
pub mod prm;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::encode::TokenGrid;
use crate::error::{Error, Result};

/// Width/head/dropout settings shared by both models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Shared model width for every modality after projection.
    pub d: usize,
    /// Attention heads per block.
    pub h: usize,
    /// Raw per-frame visual width (2D block + 3D block); 0 = take it from
    /// the corpus at preparation time.
    pub d_raw: usize,
    /// Subword vocabulary size (embedding rows); 0 = take the trained
    /// vocabulary's size.
    pub n_vocab: usize,
    /// Attention-weight and pooled-feature dropout probability.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 24,
            h: 4,
            d_raw: 0,
            n_vocab: 0,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.h == 0 || self.d % self.h != 0 {
            return Err(Error::Config(format!(
                "model width {} must be a positive multiple of head count {}",
                self.d, self.h
            )));
        }
        if self.n_vocab < 2 {
            return Err(Error::Config("vocabulary too small".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0,1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Embed a token grid as one flat `(rows*l) x d` sequence: word embedding
/// plus (optionally) the 2-way past/future segment embedding per token and
/// the per-row speaker-tag embedding added to real tokens.
pub(crate) fn embed_grid(
    tape: &mut Tape,
    table: NodeId,
    seg_table: Option<NodeId>,
    grid: &TokenGrid,
    with_speakers: bool,
) -> NodeId {
    let ids: Vec<usize> = grid.ids.iter().map(|&i| i as usize).collect();
    let mut x = tape.gather(table, &ids);
    if let Some(seg) = seg_table {
        let segs = tape.gather(seg, &grid.token_segments());
        x = tape.add(x, segs);
    }
    if with_speakers && grid.speaker.iter().any(|&s| s != 0) {
        // speaker id 0 is the pad row, so pad positions add exact zeros
        let spk = tape.gather(table, &grid.token_speakers());
        x = tape.add(x, spk);
    }
    x
}

/// Embed one row of a grid (an option or a person query) as `l x d`.
pub(crate) fn embed_row(tape: &mut Tape, table: NodeId, grid: &TokenGrid, row: usize) -> NodeId {
    let ids: Vec<usize> = grid.row_ids(row).iter().map(|&i| i as usize).collect();
    tape.gather(table, &ids)
}

/// Video frames as a constant `n_frames x d_raw` leaf, or None when the
/// episode has no usable frames.
pub(crate) fn video_leaf(tape: &mut Tape, video: &crate::encode::VideoBlock) -> Option<NodeId> {
    if video.n_frames == 0 {
        return None;
    }
    let arr = Array2::from_shape_vec((video.n_frames, video.d_raw), video.frames.clone())
        .expect("video block shape");
    Some(tape.leaf(arr))
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Lowest index of the maximal value (deterministic argmax tie-break).
pub fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let ok = ModelConfig {
            d: 8,
            h: 2,
            d_raw: 3,
            n_vocab: 10,
            dropout: 0.1,
        };
        ok.validate().unwrap();
        let mut bad = ok.clone();
        bad.d = 9;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.dropout = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.n_vocab = 1;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_lowest(&[0.25, 0.25, 0.25, 0.25]), 0);
        assert_eq!(argmax_lowest(&[0.1, 0.4, 0.4, 0.1]), 1);
        assert_eq!(argmax_lowest(&[0.0, 0.1, 0.9, 0.0]), 2);
    }
}
