//! The personality-aware reasoner.
//!
//! Pipeline per episode: personality phrases are self-attended and
//! concatenated with their raw embeddings into an enhanced context `P_C`
//! (raw copy last). Each enabled modality sequence (dialogue, video,
//! behaviors — past and future merged, past first) is personality-enhanced
//! by cross-attending into `P_C`, then each answer option queries that
//! enhanced sequence, is mean-pooled over its real tokens, and scored by a
//! per-modality linear head. The four-way answer distribution is the
//! softmax of the sum of the enabled modality score vectors.
//!
//! Determinism contracts kept here:
//! - per-option computation never mixes options, and the final softmax sums
//!   its denominator in value order, so permuting options permutes outputs
//!   bit-exactly;
//! - with personality disabled the `P` blocks are skipped entirely, making
//!   outputs bitwise independent of profile contents;
//! - an all-masked context falls back to the raw option embeddings
//!   (`X_A = A`), so empty timelines stay well-defined.

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{softmax_sorted, NodeId, Tape};
use crate::encode::EncodedEpisode;
use crate::error::{Error, Result};
use crate::nn::{
    embedding_init, AttentionBlock, DropoutState, Linear, LrGroup, ParamStore,
};

use super::{argmax_lowest, embed_grid, embed_row, video_leaf, ModelConfig};

/// Which inputs the reasoner may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityMask {
    pub use_d: bool,
    pub use_v: bool,
    pub use_b: bool,
    pub use_p: bool,
}

impl ModalityMask {
    pub const FULL: ModalityMask = ModalityMask {
        use_d: true,
        use_v: true,
        use_b: true,
        use_p: true,
    };

    pub fn validate(&self) -> Result<()> {
        if !(self.use_d || self.use_v || self.use_b) {
            return Err(Error::Config(
                "at least one of dialogue/video/behavior must be enabled".into(),
            ));
        }
        Ok(())
    }

    /// Short tag for run directories and reports, e.g. "DVB+P" or "D-P".
    pub fn label(&self) -> String {
        let mut s = String::new();
        if self.use_d {
            s.push('D');
        }
        if self.use_v {
            s.push('V');
        }
        if self.use_b {
            s.push('B');
        }
        s.push(if self.use_p { '+' } else { '-' });
        s.push('P');
        s
    }
}

struct ModalityPath {
    p_attn: AttentionBlock,
    a_attn: AttentionBlock,
    score: Linear,
}

impl ModalityPath {
    fn register(store: &mut ParamStore, prefix: &str, cfg: &ModelConfig, rng: &mut ChaCha20Rng) -> Self {
        ModalityPath {
            p_attn: AttentionBlock::register(store, &format!("{prefix}.p_attn"), cfg.d, cfg.h, rng),
            a_attn: AttentionBlock::register(store, &format!("{prefix}.a_attn"), cfg.d, cfg.h, rng),
            score: Linear::register_zeroed(store, &format!("{prefix}.score"), cfg.d, 1, LrGroup::FusionLinear),
        }
    }

    fn bind(store: &ParamStore, prefix: &str, cfg: &ModelConfig) -> Result<Self> {
        Ok(ModalityPath {
            p_attn: AttentionBlock::bind(store, &format!("{prefix}.p_attn"), cfg.d, cfg.h)?,
            a_attn: AttentionBlock::bind(store, &format!("{prefix}.a_attn"), cfg.d, cfg.h)?,
            score: Linear::bind(store, &format!("{prefix}.score"))?,
        })
    }
}

/// Parameter handles of the reasoner; weights live in the [`ParamStore`].
pub struct PrmModel {
    pub cfg: ModelConfig,
    embed: usize,
    seg: usize,
    video_proj: Linear,
    p_self: AttentionBlock,
    dial: ModalityPath,
    video: ModalityPath,
    behav: ModalityPath,
}

/// Output of one forward pass.
pub struct PrmForward {
    /// `1 x 4` logit node, usable as input to the loss.
    pub logits: NodeId,
    /// Softmax probabilities (value-order-stable summation).
    pub probs: [f64; 4],
    /// Argmax with lowest-index tie-break.
    pub predicted: usize,
}

impl PrmModel {
    /// Register fresh parameters. Score heads start at zero so an untrained
    /// model answers uniformly; everything else is Xavier-initialized from
    /// `rng`.
    pub fn register(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha20Rng) -> Result<Self> {
        cfg.validate()?;
        let embed = store.register_full(
            "embed",
            embedding_init(rng, cfg.n_vocab, cfg.d),
            LrGroup::Rest,
            true,
        );
        let seg = store.register("segment", embedding_init(rng, 2, cfg.d), LrGroup::Rest);
        // the video projection trains with the fusion group by default;
        // the trainer may move it to the slow group via config
        let video_proj =
            Linear::register(store, "video_proj", cfg.d_raw, cfg.d, LrGroup::FusionLinear, rng);
        let p_self = AttentionBlock::register(store, "p_self", cfg.d, cfg.h, rng);
        Ok(PrmModel {
            cfg: cfg.clone(),
            embed,
            seg,
            video_proj,
            p_self,
            dial: ModalityPath::register(store, "dial", cfg, rng),
            video: ModalityPath::register(store, "video", cfg, rng),
            behav: ModalityPath::register(store, "behav", cfg, rng),
        })
    }

    /// Re-attach to a store loaded from a checkpoint, validating shapes.
    pub fn bind(store: &ParamStore, cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let embed = store.index("embed")?;
        let shape = store.get(embed).value.raw_dim();
        if shape[0] != cfg.n_vocab || shape[1] != cfg.d {
            return Err(Error::Checkpoint(format!(
                "embedding shape {}x{} does not match config {}x{}",
                shape[0], shape[1], cfg.n_vocab, cfg.d
            )));
        }
        let video_proj = Linear::bind(store, "video_proj")?;
        let proj_shape = store.get(video_proj.w).value.raw_dim();
        if proj_shape[0] != cfg.d_raw || proj_shape[1] != cfg.d {
            return Err(Error::Checkpoint(format!(
                "video projection shape {}x{} does not match config {}x{}",
                proj_shape[0], proj_shape[1], cfg.d_raw, cfg.d
            )));
        }
        Ok(PrmModel {
            cfg: cfg.clone(),
            embed,
            seg: store.index("segment")?,
            video_proj,
            p_self: AttentionBlock::bind(store, "p_self", cfg.d, cfg.h)?,
            dial: ModalityPath::bind(store, "dial", cfg)?,
            video: ModalityPath::bind(store, "video", cfg)?,
            behav: ModalityPath::bind(store, "behav", cfg)?,
        })
    }

    /// Names of the fast-group parameters: the per-modality score heads plus
    /// the raw-feature video projection.
    pub fn fusion_param_names() -> Vec<String> {
        let mut names: Vec<String> = ["dial", "video", "behav"]
            .iter()
            .flat_map(|m| [format!("{m}.score.w"), format!("{m}.score.b")])
            .collect();
        names.push("video_proj.w".into());
        names.push("video_proj.b".into());
        names
    }

    /// One forward pass; `dropout` should be off for evaluation.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        enc: &EncodedEpisode,
        mask: &ModalityMask,
        dropout: &mut DropoutState,
    ) -> Result<PrmForward> {
        mask.validate()?;
        let table = store.bind(tape, self.embed);
        let seg_table = store.bind(tape, self.seg);

        // Enhanced personality context P_C = [SelfAttn(P); P], raw copy last.
        let p_ctx = if mask.use_p {
            let p_flat = embed_grid(tape, table, None, &enc.phrases, false);
            let p_mask = enc.phrases.mask.clone();
            let enhanced = self
                .p_self
                .apply(tape, store, p_flat, p_flat, &p_mask, dropout);
            let p_c = tape.concat_rows(&[enhanced, p_flat]);
            let mut p_c_mask = p_mask.clone();
            p_c_mask.extend_from_slice(&p_mask);
            Some((p_c, p_c_mask))
        } else {
            None
        };

        // Per-modality context sequences at width d.
        let d_seq = if mask.use_d && enc.dialogue.any_real() {
            let x = embed_grid(tape, table, Some(seg_table), &enc.dialogue, true);
            Some((x, enc.dialogue.mask.clone()))
        } else {
            None
        };
        let v_seq = if mask.use_v {
            video_leaf(tape, &enc.video).map(|raw| {
                let projected = self.video_proj.apply(tape, store, raw);
                let segs: Vec<usize> = enc.video.segment.iter().map(|&s| s as usize).collect();
                let seg_emb = tape.gather(seg_table, &segs);
                let x = tape.add(projected, seg_emb);
                (x, enc.video.mask())
            })
        } else {
            None
        };
        let b_seq = if mask.use_b && enc.behaviors.any_real() {
            let x = embed_grid(tape, table, Some(seg_table), &enc.behaviors, false);
            Some((x, enc.behaviors.mask.clone()))
        } else {
            None
        };

        let mut modality_logits: Vec<NodeId> = Vec::new();
        let jobs: [(bool, &Option<(NodeId, Vec<bool>)>, &ModalityPath); 3] = [
            (mask.use_d, &d_seq, &self.dial),
            (mask.use_v, &v_seq, &self.video),
            (mask.use_b, &b_seq, &self.behav),
        ];
        for (enabled, seq, path) in jobs {
            if !enabled {
                continue;
            }
            let context = seq.as_ref().and_then(|(x, m)| {
                if m.iter().any(|&b| b) {
                    Some((*x, m.clone()))
                } else {
                    None
                }
            });
            // personality enhancement of the context sequence
            let enhanced = match (&context, &p_ctx) {
                (Some((x, _)), Some((p_c, p_c_mask))) => {
                    Some(path.p_attn.apply(tape, store, *x, *p_c, p_c_mask, dropout))
                }
                (Some((x, _)), None) => Some(*x),
                (None, _) => None,
            };
            // each option queries the enhanced context independently
            let mut scores = Vec::with_capacity(4);
            for o in 0..4 {
                let a_o = embed_row(tape, table, &enc.options, o);
                let x_a = match (&enhanced, &context) {
                    (Some(x_p), Some((_, ctx_mask))) => {
                        path.a_attn.apply(tape, store, a_o, *x_p, ctx_mask, dropout)
                    }
                    _ => a_o, // all-masked context: X_A = A
                };
                let pooled = tape.masked_mean_rows(x_a, enc.options.row_mask(o));
                let pooled = dropout.apply(tape, pooled);
                scores.push(path.score.apply(tape, store, pooled));
            }
            modality_logits.push(tape.concat_cols(&scores));
        }

        let mut logits = modality_logits[0];
        for &m in &modality_logits[1..] {
            logits = tape.add(logits, m);
        }
        let row: Vec<f64> = tape.value(logits).row(0).to_vec();
        let probs_vec = softmax_sorted(&row);
        let probs = [probs_vec[0], probs_vec[1], probs_vec[2], probs_vec[3]];
        Ok(PrmForward {
            logits,
            probs,
            predicted: argmax_lowest(&probs),
        })
    }

    /// Forward plus cross-entropy against the episode's gold option.
    pub fn loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        enc: &EncodedEpisode,
        mask: &ModalityMask,
        dropout: &mut DropoutState,
    ) -> Result<(NodeId, PrmForward)> {
        let fwd = self.forward(tape, store, enc, mask, dropout)?;
        let loss = tape.softmax_cross_entropy(fwd.logits, enc.gold);
        Ok((loss, fwd))
    }

    /// Evaluation-mode prediction (fresh tape, no dropout).
    pub fn predict(
        &self,
        store: &ParamStore,
        enc: &EncodedEpisode,
        mask: &ModalityMask,
    ) -> Result<PrmForward> {
        let mut tape = Tape::new();
        let mut off = DropoutState::off();
        self.forward(&mut tape, store, enc, mask, &mut off)
    }
}
