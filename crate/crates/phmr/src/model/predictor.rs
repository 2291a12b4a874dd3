//! The personality predictor: estimates a person's four-dimension type from
//! what they say (dialogue) and how they look (video), without any gold
//! profile input.
//!
//! The architecture reuses the reasoner's answer-attention stage with the
//! personality blocks removed: the embedded person tag acts as the query
//! where the reasoner used an answer option, it cross-attends each enabled
//! modality sequence, the attended query is mean-pooled over its real
//! tokens, the per-modality pooled vectors are summed, and four independent
//! sigmoid heads emit one first-pole probability per dimension
//! (E, S, T, J order). Behavior text is excluded by default and available
//! as an ablation input.

use std::collections::BTreeMap;

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::encode::EncodedEpisode;
use crate::error::{Error, Result};
use crate::mbti::{MbtiType, PersonalityProfile, Pole};
use crate::nn::{embedding_init, AttentionBlock, DropoutState, Linear, LrGroup, ParamStore};

use super::{embed_grid, embed_row, sigmoid, video_leaf, ModelConfig};

/// Pole-decision threshold: scores at or above it pick the first pole.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// First-pole probabilities per dimension, ordered E, S, T, J.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionScores(pub [f64; 4]);

impl DimensionScores {
    /// Hard decision at threshold `tau`; a score exactly at the threshold
    /// picks the first pole.
    pub fn threshold(&self, tau: f64) -> MbtiType {
        let poles = self.0.map(|s| if s >= tau { Pole::First } else { Pole::Second });
        MbtiType::from_poles(poles)
    }
}

/// BCE targets for a gold type: 1.0 where the axis takes its first pole.
pub fn first_pole_targets(t: MbtiType) -> [f64; 4] {
    t.poles().map(|p| if p == Pole::First { 1.0 } else { 0.0 })
}

/// Hard type decisions for a set of people, together with the scores they
/// were thresholded from. Serializes `types` in the same flat tag-to-type
/// shape as a gold profile; `scores` ride along as a sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedProfile {
    pub types: BTreeMap<String, MbtiType>,
    pub scores: BTreeMap<String, DimensionScores>,
    pub threshold: f64,
}

impl PredictedProfile {
    /// Every stored type must equal its scores thresholded at `threshold`.
    pub fn validate(&self) -> Result<()> {
        if self.types.len() != self.scores.len() {
            return Err(Error::Config(
                "predicted profile has mismatched type and score sets".into(),
            ));
        }
        for (tag, t) in &self.types {
            let scores = self
                .scores
                .get(tag)
                .ok_or_else(|| Error::UnknownPerson(tag.clone()))?;
            if scores.threshold(self.threshold) != *t {
                return Err(Error::Config(format!(
                    "predicted type for {tag} disagrees with its thresholded scores"
                )));
            }
        }
        Ok(())
    }

    /// The types alone, in the gold-profile map shape.
    pub fn as_profile(&self) -> PersonalityProfile {
        self.types
            .iter()
            .map(|(tag, t)| (tag.clone(), *t))
            .collect()
    }
}

/// Builds a [`PredictedProfile`] by thresholding each person's scores.
pub fn threshold_profile(
    scores: &BTreeMap<String, DimensionScores>,
    tau: f64,
) -> PredictedProfile {
    let types = scores
        .iter()
        .map(|(tag, s)| (tag.clone(), s.threshold(tau)))
        .collect();
    PredictedProfile {
        types,
        scores: scores.clone(),
        threshold: tau,
    }
}

/// Which inputs the predictor consumes. Behaviors default to off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorInputs {
    pub use_d: bool,
    pub use_v: bool,
    pub use_b: bool,
}

impl Default for PredictorInputs {
    fn default() -> Self {
        PredictorInputs {
            use_d: true,
            use_v: true,
            use_b: false,
        }
    }
}

impl PredictorInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.use_d || self.use_v || self.use_b) {
            return Err(Error::Config(
                "the predictor needs at least one input modality".into(),
            ));
        }
        Ok(())
    }
}

/// Row index of a tagged person inside an encoded episode.
pub fn person_row(enc: &EncodedEpisode, tag: &str) -> Result<usize> {
    enc.person_tags
        .iter()
        .position(|t| t == tag)
        .ok_or_else(|| Error::UnknownPerson(tag.to_string()))
}

pub struct PredictorForward {
    /// `1 x 4` pre-sigmoid logits.
    pub logits: NodeId,
    pub scores: DimensionScores,
}

/// Parameter handles of the predictor; weights live in the [`ParamStore`].
pub struct PredictorModel {
    pub cfg: ModelConfig,
    embed: usize,
    seg: usize,
    video_proj: Linear,
    dial_attn: AttentionBlock,
    video_attn: AttentionBlock,
    behav_attn: AttentionBlock,
    heads: Linear,
}

impl PredictorModel {
    pub fn register(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha20Rng) -> Result<Self> {
        cfg.validate()?;
        let embed = store.register_full(
            "embed",
            embedding_init(rng, cfg.n_vocab, cfg.d),
            LrGroup::Rest,
            true,
        );
        let seg = store.register("segment", embedding_init(rng, 2, cfg.d), LrGroup::Rest);
        let video_proj =
            Linear::register(store, "video_proj", cfg.d_raw, cfg.d, LrGroup::FusionLinear, rng);
        Ok(PredictorModel {
            cfg: cfg.clone(),
            embed,
            seg,
            video_proj,
            dial_attn: AttentionBlock::register(store, "dial.pq_attn", cfg.d, cfg.h, rng),
            video_attn: AttentionBlock::register(store, "video.pq_attn", cfg.d, cfg.h, rng),
            behav_attn: AttentionBlock::register(store, "behav.pq_attn", cfg.d, cfg.h, rng),
            // zero heads: an untrained predictor scores 0.5 on every axis
            heads: Linear::register_zeroed(store, "heads", cfg.d, 4, LrGroup::FusionLinear),
        })
    }

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
        Ok(PredictorModel {
            cfg: cfg.clone(),
            embed,
            seg: store.index("segment")?,
            video_proj: Linear::bind(store, "video_proj")?,
            dial_attn: AttentionBlock::bind(store, "dial.pq_attn", cfg.d, cfg.h)?,
            video_attn: AttentionBlock::bind(store, "video.pq_attn", cfg.d, cfg.h)?,
            behav_attn: AttentionBlock::bind(store, "behav.pq_attn", cfg.d, cfg.h)?,
            heads: Linear::bind(store, "heads")?,
        })
    }

    /// Score one tagged person of an encoded episode.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        enc: &EncodedEpisode,
        row: usize,
        inputs: &PredictorInputs,
        dropout: &mut DropoutState,
    ) -> Result<PredictorForward> {
        inputs.validate()?;
        if row >= enc.person_queries.rows {
            return Err(Error::UnknownPerson(format!("person row {row}")));
        }
        let table = store.bind(tape, self.embed);
        let seg_table = store.bind(tape, self.seg);
        let q = embed_row(tape, table, &enc.person_queries, row);
        let q_mask = enc.person_queries.row_mask(row);

        let d_seq = if inputs.use_d && enc.dialogue.any_real() {
            let x = embed_grid(tape, table, Some(seg_table), &enc.dialogue, true);
            Some((x, enc.dialogue.mask.clone()))
        } else {
            None
        };
        let v_seq = if inputs.use_v {
            video_leaf(tape, &enc.video).map(|raw| {
                let projected = self.video_proj.apply(tape, store, raw);
                let segs: Vec<usize> = enc.video.segment.iter().map(|&s| s as usize).collect();
                let seg_emb = tape.gather(seg_table, &segs);
                (tape.add(projected, seg_emb), enc.video.mask())
            })
        } else {
            None
        };
        let b_seq = if inputs.use_b && enc.behaviors.any_real() {
            let x = embed_grid(tape, table, Some(seg_table), &enc.behaviors, false);
            Some((x, enc.behaviors.mask.clone()))
        } else {
            None
        };

        let mut pooled_parts: Vec<NodeId> = Vec::new();
        let jobs: [(bool, &Option<(NodeId, Vec<bool>)>, &AttentionBlock); 3] = [
            (inputs.use_d, &d_seq, &self.dial_attn),
            (inputs.use_v, &v_seq, &self.video_attn),
            (inputs.use_b, &b_seq, &self.behav_attn),
        ];
        for (enabled, seq, attn) in jobs {
            if !enabled {
                continue;
            }
            let attended = match seq {
                Some((x, m)) if m.iter().any(|&b| b) => {
                    attn.apply(tape, store, q, *x, m, dropout)
                }
                _ => q, // empty context: the raw tag embedding stands in
            };
            pooled_parts.push(tape.masked_mean_rows(attended, q_mask));
        }
        let mut pooled = pooled_parts[0];
        for &p in &pooled_parts[1..] {
            pooled = tape.add(pooled, p);
        }
        let pooled = dropout.apply(tape, pooled);
        let logits = self.heads.apply(tape, store, pooled);
        let row_vals = tape.value(logits).row(0).to_owned();
        let scores = DimensionScores([
            sigmoid(row_vals[0]),
            sigmoid(row_vals[1]),
            sigmoid(row_vals[2]),
            sigmoid(row_vals[3]),
        ]);
        Ok(PredictorForward { logits, scores })
    }

    /// Forward plus the four-way independent BCE loss against a gold type.
    pub fn loss(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        enc: &EncodedEpisode,
        row: usize,
        gold: MbtiType,
        inputs: &PredictorInputs,
        dropout: &mut DropoutState,
    ) -> Result<(NodeId, PredictorForward)> {
        let fwd = self.forward(tape, store, enc, row, inputs, dropout)?;
        let loss = tape.bce_with_logits_sum(fwd.logits, &first_pole_targets(gold));
        Ok((loss, fwd))
    }

    /// Evaluation-mode scores for one person (fresh tape, no dropout).
    pub fn predict(
        &self,
        store: &ParamStore,
        enc: &EncodedEpisode,
        row: usize,
        inputs: &PredictorInputs,
    ) -> Result<DimensionScores> {
        let mut tape = Tape::new();
        let mut off = DropoutState::off();
        Ok(self.forward(&mut tape, store, enc, row, inputs, &mut off)?.scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::SpeakerMode;
    use crate::testsupport::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn fresh() -> (ParamStore, PredictorModel, crate::text::vocab::Vocabulary) {
        let vocab = tiny_vocab();
        let cfg = tiny_model_config(&vocab);
        let mut store = ParamStore::new();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let model = PredictorModel::register(&mut store, &cfg, &mut rng).unwrap();
        (store, model, vocab)
    }

    fn randomize_heads(store: &mut ParamStore, seed: u64) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let w = store.index("heads.w").unwrap();
        let shape = store.get(w).value.raw_dim();
        store.get_mut(w).value = crate::nn::xavier(&mut rng, shape[0], shape[1]);
    }

    #[test]
    fn untrained_scores_are_exactly_half() {
        let (store, model, vocab) = fresh();
        let enc = encode_full(&full_episode("e0"), &vocab, SpeakerMode::Additive);
        let s = model
            .predict(&store, &enc, 0, &PredictorInputs::default())
            .unwrap();
        for v in s.0 {
            assert_eq!(v, 0.5);
        }
        // ties pick the first pole of every axis
        assert_eq!(s.threshold(DEFAULT_THRESHOLD).to_string(), "ESTJ");
    }

    #[test]
    fn threshold_examples() {
        let s = DimensionScores([0.9, 0.2, 0.6, 0.4]);
        assert_eq!(s.threshold(0.5).to_string(), "ENTP");
        let zero = DimensionScores([0.0; 4]);
        assert_eq!(zero.threshold(0.5).to_string(), "INFP");
        let all = DimensionScores([1.0; 4]);
        assert_eq!(all.threshold(0.5).to_string(), "ESTJ");
    }

    #[test]
    fn predicted_profile_is_consistent_and_round_trips() {
        let mut scores = BTreeMap::new();
        scores.insert("Person1".to_string(), DimensionScores([0.9, 0.2, 0.6, 0.4]));
        scores.insert("Person2".to_string(), DimensionScores([0.1, 0.8, 0.5, 0.5]));
        let profile = threshold_profile(&scores, DEFAULT_THRESHOLD);
        profile.validate().unwrap();
        assert_eq!(profile.types["Person1"].to_string(), "ENTP");
        assert_eq!(profile.types["Person2"].to_string(), "ISTJ");
        assert_eq!(profile.as_profile().get("Person1").unwrap().to_string(), "ENTP");

        // the types map serializes exactly like a gold profile map
        let json = serde_json::to_value(&profile).unwrap();
        assert_eq!(json["types"]["Person1"], "ENTP");
        let back: PredictedProfile = serde_json::from_value(json).unwrap();
        assert_eq!(back, profile);

        // a tampered type is caught
        let mut bad = profile.clone();
        bad.types.insert("Person1".into(), "INFP".parse().unwrap());
        assert!(bad.validate().is_err());
    }

    #[test]
    fn raising_the_threshold_only_flips_toward_second_poles() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..200 {
            let s = DimensionScores([
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
            ]);
            let lo = s.threshold(0.3);
            let hi = s.threshold(0.7);
            for (a, b) in lo.poles().iter().zip(hi.poles().iter()) {
                // First at high tau implies First at low tau
                assert!(!(*b == Pole::First && *a == Pole::Second));
            }
        }
    }

    #[test]
    fn untrained_loss_is_four_ln_two() {
        let (store, model, vocab) = fresh();
        let enc = encode_full(&full_episode("e0"), &vocab, SpeakerMode::Additive);
        let mut tape = Tape::new();
        let mut off = DropoutState::off();
        let gold = crate::mbti::MbtiType::parse("ESFP").unwrap();
        let (loss, _) = model
            .loss(&mut tape, &store, &enc, 0, gold, &PredictorInputs::default(), &mut off)
            .unwrap();
        let expected = 4.0 * std::f64::consts::LN_2;
        assert!((tape.scalar(loss) - expected).abs() < 1e-12);
    }

    #[test]
    fn heads_are_independent_across_dimensions() {
        let (mut store, model, vocab) = fresh();
        randomize_heads(&mut store, 3);
        let enc = encode_full(&full_episode("e0"), &vocab, SpeakerMode::Additive);
        let inputs = PredictorInputs::default();
        let before = model.predict(&store, &enc, 0, &inputs).unwrap();
        // perturb only the T/F column (index 2)
        let w = store.index("heads.w").unwrap();
        for r in 0..model.cfg.d {
            store.get_mut(w).value[[r, 2]] += 0.37;
        }
        let b = store.index("heads.b").unwrap();
        store.get_mut(b).value[[0, 2]] -= 0.11;
        let after = model.predict(&store, &enc, 0, &inputs).unwrap();
        for axis in [0usize, 1, 3] {
            assert_eq!(
                before.0[axis].to_bits(),
                after.0[axis].to_bits(),
                "axis {axis} moved when only axis 2 was perturbed"
            );
        }
        assert_ne!(before.0[2].to_bits(), after.0[2].to_bits());
    }

    #[test]
    fn behaviors_are_ignored_unless_enabled() {
        let (mut store, model, vocab) = fresh();
        randomize_heads(&mut store, 4);
        let base = full_episode("e0");
        let mut altered = base.clone();
        for b in &mut altered.behaviors {
            b.text = "zz yy xx ww".into();
        }
        let enc_a = encode_full(&base, &vocab, SpeakerMode::Additive);
        let enc_b = encode_full(&altered, &vocab, SpeakerMode::Additive);
        let default_inputs = PredictorInputs::default();
        let a = model.predict(&store, &enc_a, 0, &default_inputs).unwrap();
        let b = model.predict(&store, &enc_b, 0, &default_inputs).unwrap();
        for (x, y) in a.0.iter().zip(b.0.iter()) {
            assert_eq!(x.to_bits(), y.to_bits(), "behavior text leaked into default inputs");
        }
        let with_b = PredictorInputs {
            use_b: true,
            ..PredictorInputs::default()
        };
        let a2 = model.predict(&store, &enc_a, 0, &with_b).unwrap();
        let b2 = model.predict(&store, &enc_b, 0, &with_b).unwrap();
        assert!(a2.0.iter().zip(b2.0.iter()).any(|(x, y)| x != y));
    }

    #[test]
    fn person_rows_resolve_by_tag() {
        let (_, _, vocab) = fresh();
        let enc = encode_full(&full_episode("e0"), &vocab, SpeakerMode::Additive);
        assert_eq!(person_row(&enc, "Person1").unwrap(), 0);
        assert_eq!(person_row(&enc, "Person2").unwrap(), 1);
        assert!(matches!(
            person_row(&enc, "Person9"),
            Err(Error::UnknownPerson(_))
        ));
    }

    #[test]
    fn different_people_get_different_scores() {
        let (mut store, model, vocab) = fresh();
        randomize_heads(&mut store, 8);
        let enc = encode_full(&full_episode("e0"), &vocab, SpeakerMode::Additive);
        let inputs = PredictorInputs::default();
        let p1 = model.predict(&store, &enc, 0, &inputs).unwrap();
        let p2 = model.predict(&store, &enc, 1, &inputs).unwrap();
        assert!(p1.0.iter().zip(p2.0.iter()).any(|(a, b)| a != b));
    }

    #[test]
    fn reordering_utterances_within_a_segment_is_harmless() {
        // the dialogue is a set per segment: no positional encoding, so
        // swapping the two past utterances only reassociates float sums
        let (mut store, model, vocab) = fresh();
        randomize_heads(&mut store, 5);
        let base = full_episode("e0");
        let mut swapped = base.clone();
        swapped.utterances.swap(0, 1);
        let enc_a = encode_full(&base, &vocab, SpeakerMode::Additive);
        let enc_b = encode_full(&swapped, &vocab, SpeakerMode::Additive);
        let inputs = PredictorInputs::default();
        let a = model.predict(&store, &enc_a, 0, &inputs).unwrap();
        let b = model.predict(&store, &enc_b, 0, &inputs).unwrap();
        for (x, y) in a.0.iter().zip(b.0.iter()) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }

    #[test]
    fn gradients_match_finite_differences_on_sampled_params() {
        let (store, model, vocab) = fresh();
        let enc = encode_full(&full_episode("e0"), &vocab, SpeakerMode::Additive);
        let inputs = PredictorInputs {
            use_b: true,
            ..PredictorInputs::default()
        };
        let gold = crate::mbti::MbtiType::parse("ENTP").unwrap();

        let loss_value = |store: &ParamStore| -> f64 {
            let mut tape = Tape::new();
            let mut off = DropoutState::off();
            let (loss, _) = model
                .loss(&mut tape, store, &enc, 1, gold, &inputs, &mut off)
                .unwrap();
            tape.scalar(loss)
        };

        let mut tape = Tape::new();
        let mut off = DropoutState::off();
        let (loss, _) = model
            .loss(&mut tape, &store, &enc, 1, gold, &inputs, &mut off)
            .unwrap();
        let grads = tape.backward(loss);
        let mut store = store;
        store.zero_grads();
        store.accumulate_scaled(&tape, &grads, 1.0);

        let h = 1e-5;
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for name in [
            "embed",
            "segment",
            "video_proj.w",
            "dial.pq_attn.q.w",
            "video.pq_attn.v.w",
            "behav.pq_attn.ln.g",
            "heads.w",
            "heads.b",
        ] {
            let idx = store.index(name).unwrap();
            let (rows, cols) = {
                let v = &store.get(idx).value;
                (v.nrows(), v.ncols())
            };
            for _ in 0..3 {
                let r = rng.random_range(0..rows);
                let c = rng.random_range(0..cols);
                if name == "embed" && r == 0 {
                    continue;
                }
                let orig = store.get(idx).value[[r, c]];
                store.get_mut(idx).value[[r, c]] = orig + h;
                let up = loss_value(&store);
                store.get_mut(idx).value[[r, c]] = orig - h;
                let down = loss_value(&store);
                store.get_mut(idx).value[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = store.get(idx).grad[[r, c]];
                let denom = 1.0f64.max(numeric.abs());
                assert!(
                    ((analytic - numeric) / denom).abs() < 1e-4,
                    "{name}[{r},{c}]: analytic {analytic} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn training_separates_two_types() {
        // two fabricated people with opposite types and distinctive
        // dialogue must become separable within a few dozen steps
        let (mut store, model, vocab) = fresh();
        let mut e = full_episode("e0");
        e.utterances[0].text = "hello hello quietly quietly".into();
        e.utterances[0].speaker = "Person1".into();
        e.utterances[1].text = "loudly loudly again again".into();
        e.utterances[1].speaker = "Person2".into();
        let enc = encode_full(&e, &vocab, SpeakerMode::Additive);
        let inputs = PredictorInputs::default();
        let gold1 = crate::mbti::MbtiType::parse("ESFP").unwrap();
        let gold2 = crate::mbti::MbtiType::parse("INTJ").unwrap();
        for _ in 0..60 {
            store.zero_grads();
            let mut tape = Tape::new();
            let mut off = DropoutState::off();
            let (l1, _) = model
                .loss(&mut tape, &store, &enc, 0, gold1, &inputs, &mut off)
                .unwrap();
            let (l2, _) = model
                .loss(&mut tape, &store, &enc, 1, gold2, &inputs, &mut off)
                .unwrap();
            let both = tape.add(l1, l2);
            let grads = tape.backward(both);
            store.accumulate_scaled(&tape, &grads, 0.5);
            store.adam_step(5e-2, 5e-3, 1.0);
        }
        let s1 = model.predict(&store, &enc, 0, &inputs).unwrap();
        let s2 = model.predict(&store, &enc, 1, &inputs).unwrap();
        assert_eq!(s1.threshold(0.5).to_string(), "ESFP");
        assert_eq!(s2.threshold(0.5).to_string(), "INTJ");
    }
}
