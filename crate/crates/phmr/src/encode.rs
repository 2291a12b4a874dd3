//! Episode encoding: text to padded subword-id grids with masks, past/future
//! segment tags, speaker conditioning, and the visual-feature block.
//!
//! The embedding lookup itself lives with the models (the table is a
//! trainable parameter); this module produces everything the lookup needs.
//! Past and future items of each modality are concatenated along the
//! sequence axis, past first, and each row remembers which side it came
//! from so the models can add a learned 2-way segment embedding.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{ClipEpisode, RawVisualRecord, TrisectedInputs};
use crate::error::{Error, Result};
use crate::mbti::{personality_phrase, PersonalityProfile};
use crate::text::vocab::Vocabulary;

/// How dialogue encodes who is speaking.
///
/// `Additive` stores one speaker-tag subword id per utterance row; models
/// add that tag's embedding to every real token of the row, so a single
/// attention layer can match a person query against the speaker's own
/// words. `Prepend` splices the tag tokens in front of the utterance text
/// instead, and `None` drops speaker identity entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakerMode {
    None,
    Prepend,
    Additive,
}

/// Sequence-length budget per item of each modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Tokens per utterance.
    pub l_d: usize,
    /// Tokens per answer option.
    pub l_a: usize,
    /// Tokens per behavior description.
    pub l_b: usize,
    /// Tokens per personality phrase / person query.
    pub l_p: usize,
    pub speaker_mode: SpeakerMode,
    /// Replace person tags with episode-local aliases everywhere in the
    /// model input (dialogue, behaviors, options, phrases, queries). With a
    /// recurring cast, corpus-global tags let a model memorize tag-to-answer
    /// shortcuts instead of reading the personality input; aliasing removes
    /// cross-episode identity while keeping within-episode coreference.
    /// External outputs (profiles, reports) always use the real tags.
    #[serde(default)]
    pub alias_tags: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            l_d: 24,
            l_a: 24,
            l_b: 24,
            l_p: 4,
            speaker_mode: SpeakerMode::None,
            alias_tags: false,
        }
    }
}

/// The n-th episode-local person alias: `persona`, `personb`, ...,
/// `personz`, `personaa`, ... Aliases stay letter-only so they can never
/// collide with the digit-suffixed tags of the synthetic corpus.
pub fn person_alias(mut i: usize) -> String {
    let mut letters = Vec::new();
    loop {
        letters.push(b'a' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    letters.reverse();
    format!("person{}", std::str::from_utf8(&letters).unwrap())
}

/// `rows x l` grid of subword ids with a parallel mask (true = real token),
/// a per-row past/future flag, and a per-row speaker-tag id (0 when absent).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenGrid {
    pub rows: usize,
    pub l: usize,
    pub ids: Vec<u32>,
    pub mask: Vec<bool>,
    /// 0 = past (or timeless), 1 = future; one entry per row.
    pub segment: Vec<u8>,
    /// One speaker-tag subword id per row; 0 where not applicable.
    pub speaker: Vec<u32>,
}

impl TokenGrid {
    pub fn empty(l: usize) -> Self {
        TokenGrid {
            rows: 0,
            l,
            ..TokenGrid::default()
        }
    }

    pub fn push_row(&mut self, mut ids: Vec<u32>, segment: u8, speaker: u32) {
        ids.truncate(self.l);
        let real = ids.len();
        ids.resize(self.l, crate::text::vocab::PAD_ID);
        self.ids.extend_from_slice(&ids);
        self.mask
            .extend((0..self.l).map(|i| i < real));
        self.segment.push(segment);
        self.speaker.push(speaker);
        self.rows += 1;
    }

    /// Total token slots (rows * l).
    pub fn len_flat(&self) -> usize {
        self.rows * self.l
    }

    pub fn row_ids(&self, r: usize) -> &[u32] {
        &self.ids[r * self.l..(r + 1) * self.l]
    }

    pub fn row_mask(&self, r: usize) -> &[bool] {
        &self.mask[r * self.l..(r + 1) * self.l]
    }

    /// Per-token segment flags (row flag repeated over the row).
    pub fn token_segments(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len_flat());
        for &s in &self.segment {
            out.extend(std::iter::repeat_n(s as usize, self.l));
        }
        out
    }

    /// Per-token speaker ids, zeroed at pad positions so an embedding add
    /// contributes nothing there.
    pub fn token_speakers(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len_flat());
        for r in 0..self.rows {
            for c in 0..self.l {
                out.push(if self.mask[r * self.l + c] {
                    self.speaker[r] as usize
                } else {
                    0
                });
            }
        }
        out
    }

    pub fn any_real(&self) -> bool {
        self.mask.iter().any(|&m| m)
    }
}

/// Projected-input view of one episode's video frames (still at raw width;
/// the trainable projection to model width happens inside the models).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VideoBlock {
    /// Row-major `n_frames x d_raw`, past frames first.
    pub frames: Vec<f64>,
    pub d_raw: usize,
    pub n_frames: usize,
    /// 0 = past, 1 = future; one entry per frame.
    pub segment: Vec<u8>,
}

impl VideoBlock {
    pub fn mask(&self) -> Vec<bool> {
        vec![true; self.n_frames]
    }
}

/// Everything the models consume for one episode: id grids for dialogue,
/// behaviors, options and personality phrases, plus the video block.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedEpisode {
    pub id: String,
    pub dialogue: TokenGrid,
    pub behaviors: TokenGrid,
    pub options: TokenGrid,
    /// Personality phrases (tag + type code), one row per character, rows
    /// sorted by tag.
    pub phrases: TokenGrid,
    /// Tag-only queries aligned with `phrases` rows — no type information.
    pub person_queries: TokenGrid,
    /// Tags in `phrases` row order.
    pub person_tags: Vec<String>,
    pub video: VideoBlock,
    pub gold: usize,
    pub target_row: usize,
}

/// Tokenize sentences into a fixed-width grid: truncate beyond `l`, pad with
/// the pad id, mask marks real tokens. An empty sentence becomes an all-pad,
/// all-false row.
pub fn encode_sentences(vocab: &Vocabulary, sentences: &[&str], l: usize) -> TokenGrid {
    let mut grid = TokenGrid::empty(l);
    for s in sentences {
        grid.push_row(vocab.encode_text(s), 0, 0);
    }
    grid
}

/// First subword of a person tag, used as the additive speaker id and as
/// the leading prepended token. The synthetic corpus keeps tags frequent
/// enough to stay whole subwords.
fn tag_lead_id(vocab: &Vocabulary, tag: &str) -> u32 {
    let ids = vocab.tokenize_word(&tag.to_lowercase());
    ids.first().copied().unwrap_or(crate::text::vocab::UNK_ID)
}

/// Encode one trisected episode against `profile` (normally the episode's
/// own; stage two passes a predicted profile instead).
pub fn encode_episode(
    episode: &ClipEpisode,
    trisected: &TrisectedInputs,
    vocab: &Vocabulary,
    record: Option<&RawVisualRecord>,
    cfg: &EncoderConfig,
    profile: &PersonalityProfile,
) -> Result<EncodedEpisode> {
    // episode-local aliases, assigned in profile order; both the tag and
    // its lowercased text form resolve to the alias so tags mentioned
    // inside sentences are rewritten too. Tags outside the profile pass
    // through unchanged.
    let mut alias: BTreeMap<String, String> = BTreeMap::new();
    if cfg.alias_tags {
        for (i, (tag, _)) in profile.iter().enumerate() {
            alias.insert(tag.to_string(), person_alias(i));
            alias.insert(tag.to_lowercase(), person_alias(i));
        }
    }
    let name_of = |tag: &str| -> String {
        alias
            .get(tag)
            .cloned()
            .unwrap_or_else(|| tag.to_lowercase())
    };
    let rewrite = |text: &str| -> String {
        if alias.is_empty() {
            return text.to_string();
        }
        text.split_whitespace()
            .map(|w| alias.get(w).map(String::as_str).unwrap_or(w))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut dialogue = TokenGrid::empty(cfg.l_d);
    for (segment, list) in [
        (0u8, &trisected.dialogue_past),
        (1u8, &trisected.dialogue_future),
    ] {
        for u in list {
            let mut ids = vocab.encode_text(&rewrite(&u.text));
            let speaker_name = name_of(&u.speaker);
            let speaker = match cfg.speaker_mode {
                SpeakerMode::None => 0,
                SpeakerMode::Additive => tag_lead_id(vocab, &speaker_name),
                SpeakerMode::Prepend => {
                    let mut with_tag = vocab.tokenize_word(&speaker_name);
                    with_tag.extend_from_slice(&ids);
                    ids = with_tag;
                    0
                }
            };
            dialogue.push_row(ids, segment, speaker);
        }
    }

    let mut behaviors = TokenGrid::empty(cfg.l_b);
    for (segment, list) in [
        (0u8, &trisected.behavior_past),
        (1u8, &trisected.behavior_future),
    ] {
        for b in list {
            behaviors.push_row(vocab.encode_text(&rewrite(&b.text)), segment, 0);
        }
    }

    let option_texts: Vec<String> = episode.options.iter().map(|o| rewrite(o)).collect();
    let option_refs: Vec<&str> = option_texts.iter().map(String::as_str).collect();
    let options = encode_sentences(vocab, &option_refs, cfg.l_a);

    let mut phrases = TokenGrid::empty(cfg.l_p);
    let mut person_queries = TokenGrid::empty(cfg.l_p);
    let mut person_tags = Vec::new();
    let mut target_row = None;
    for (row, (tag, t)) in profile.iter().enumerate() {
        let words = personality_phrase(&name_of(tag), t);
        let mut ids = Vec::new();
        for w in &words {
            ids.extend(vocab.tokenize_word(w));
        }
        phrases.push_row(ids, 0, 0);
        person_queries.push_row(vocab.tokenize_word(&name_of(tag)), 0, 0);
        person_tags.push(tag.to_string());
        if tag == episode.target_person {
            target_row = Some(row);
        }
    }
    let target_row = target_row.ok_or_else(|| Error::UnknownPerson(episode.target_person.clone()))?;
    if phrases.rows == 0 {
        return Err(Error::Episode {
            episode: episode.id.clone(),
            message: "episode profile is empty".into(),
        });
    }

    let video = match record {
        Some(rec) => {
            rec.validate()?;
            if rec.d_raw != episode.visual.d_2d + episode.visual.d_3d {
                return Err(Error::Shape {
                    expected: format!("d_raw {}", episode.visual.d_2d + episode.visual.d_3d),
                    actual: format!("d_raw {}", rec.d_raw),
                });
            }
            let mut frames = Vec::new();
            let mut segment = Vec::new();
            for (&seg, idxs) in [
                (0u8, &trisected.video_past),
                (1u8, &trisected.video_future),
            ]
            .iter()
            .map(|(s, v)| (s, *v))
            {
                for &i in idxs {
                    frames.extend(rec.frame(i).iter().map(|&x| x as f64));
                    segment.push(seg);
                }
            }
            VideoBlock {
                n_frames: segment.len(),
                frames,
                d_raw: rec.d_raw,
                segment,
            }
        }
        None => VideoBlock {
            frames: Vec::new(),
            d_raw: episode.visual.d_2d + episode.visual.d_3d,
            n_frames: 0,
            segment: Vec::new(),
        },
    };

    Ok(EncodedEpisode {
        id: episode.id.clone(),
        dialogue,
        behaviors,
        options,
        phrases,
        person_queries,
        person_tags,
        video,
        gold: episode.gold,
        target_row,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{trisect, Behavior, TimeSpan, Utterance, VisualRef};
    use crate::mbti::MbtiType;

    fn span(a: f64, b: f64) -> TimeSpan {
        TimeSpan::new(a, b).unwrap()
    }

    fn test_vocab() -> Vocabulary {
        let corpus = vec![
            "person1 person2 persona personb hello there before after waves smiles esfp intj quietly loudly",
            "person1 person2 persona personb hello there before after waves smiles esfp intj quietly loudly",
            "person1 person2 persona personb hello there before after waves smiles esfp intj quietly loudly",
        ];
        Vocabulary::build(corpus, 200, 1).unwrap()
    }

    fn test_episode() -> ClipEpisode {
        let mut profile = PersonalityProfile::new();
        profile.insert("Person1", MbtiType::parse("ESFP").unwrap());
        profile.insert("Person2", MbtiType::parse("INTJ").unwrap());
        ClipEpisode {
            id: "e0".into(),
            duration: 30.0,
            visual: VisualRef {
                key: "e0".into(),
                d_2d: 2,
                d_3d: 1,
            },
            utterances: vec![
                Utterance {
                    speaker: "Person1".into(),
                    text: "hello there before".into(),
                    span: span(1.0, 2.0),
                },
                Utterance {
                    speaker: "Person2".into(),
                    text: "before".into(),
                    span: span(3.0, 4.0),
                },
                Utterance {
                    speaker: "Person1".into(),
                    text: "after quietly".into(),
                    span: span(15.0, 16.0),
                },
            ],
            behaviors: vec![Behavior {
                subject: "Person1".into(),
                text: "person1 waves".into(),
                span: span(2.0, 3.0),
            }],
            profile,
            present_span: span(10.0, 12.0),
            options: vec![
                "person1 smiles".into(),
                "person1 waves loudly".into(),
                "person2 smiles".into(),
                "person2 waves there quietly".into(),
            ],
            gold: 1,
            target_person: "Person1".into(),
        }
    }

    fn record() -> RawVisualRecord {
        RawVisualRecord {
            features: (0..15).map(|i| i as f32).collect(),
            d_raw: 3,
            timestamps: vec![0.0, 5.0, 11.0, 14.0, 20.0],
        }
    }

    fn encode_with(mode: SpeakerMode) -> EncodedEpisode {
        let e = test_episode();
        let rec = record();
        let tri = trisect(&e, &rec.timestamps);
        let cfg = EncoderConfig {
            l_d: 6,
            l_a: 6,
            l_b: 6,
            l_p: 4,
            speaker_mode: mode,
            alias_tags: false,
        };
        encode_episode(&e, &tri, &test_vocab(), Some(&rec), &cfg, &e.profile).unwrap()
    }

    #[test]
    fn past_first_ordering_and_counts() {
        let enc = encode_with(SpeakerMode::None);
        assert_eq!(enc.dialogue.rows, 3);
        assert_eq!(enc.dialogue.segment, vec![0, 0, 1]);
        assert_eq!(enc.behaviors.rows, 1);
        assert_eq!(enc.options.rows, 4);
        assert_eq!(enc.phrases.rows, 2);
        assert_eq!(enc.person_tags, vec!["Person1", "Person2"]);
        assert_eq!(enc.target_row, 0);
        // frames at 0.0 and 5.0 are past; 14.0 and 20.0 future; 11.0 excluded
        assert_eq!(enc.video.n_frames, 4);
        assert_eq!(enc.video.segment, vec![0, 0, 1, 1]);
        assert_eq!(enc.video.d_raw, 3);
        // first past frame row survives intact, converted to f64
        assert_eq!(&enc.video.frames[0..3], &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn truncation_padding_and_masks() {
        let vocab = test_vocab();
        let grid = encode_sentences(&vocab, &["hello there before after waves smiles", "", "hello"], 3);
        assert_eq!(grid.rows, 3);
        assert_eq!(grid.row_mask(0), &[true, true, true]);
        assert_eq!(grid.row_mask(1), &[false, false, false]);
        assert!(grid.row_ids(1).iter().all(|&id| id == 0));
        assert_eq!(grid.row_mask(2), &[true, false, false]);
    }

    #[test]
    fn speaker_modes_differ_only_in_dialogue() {
        let none = encode_with(SpeakerMode::None);
        let add = encode_with(SpeakerMode::Additive);
        let pre = encode_with(SpeakerMode::Prepend);
        // additive: same ids, nonzero per-row speaker tags
        assert_eq!(none.dialogue.ids, add.dialogue.ids);
        assert!(none.dialogue.speaker.iter().all(|&s| s == 0));
        assert!(add.dialogue.speaker.iter().all(|&s| s != 0));
        assert_ne!(add.dialogue.speaker[0], add.dialogue.speaker[1]);
        assert_eq!(add.dialogue.speaker[0], add.dialogue.speaker[2]);
        // prepend: the first token of each row is the tag token
        let vocab = test_vocab();
        assert_eq!(pre.dialogue.row_ids(0)[0], vocab.id("person1").unwrap());
        assert_eq!(pre.dialogue.row_ids(1)[0], vocab.id("person2").unwrap());
        assert!(pre.dialogue.speaker.iter().all(|&s| s == 0));
        // other grids identical across modes
        assert_eq!(none.options, pre.options);
        assert_eq!(none.phrases, add.phrases);
    }

    #[test]
    fn person_queries_carry_no_type_information() {
        let enc = encode_with(SpeakerMode::None);
        let vocab = test_vocab();
        let esfp = vocab.id("esfp").unwrap();
        let intj = vocab.id("intj").unwrap();
        assert!(enc.phrases.ids.contains(&esfp));
        assert!(enc.phrases.ids.contains(&intj));
        assert!(!enc.person_queries.ids.contains(&esfp));
        assert!(!enc.person_queries.ids.contains(&intj));
        assert_eq!(
            enc.person_queries.row_ids(0)[0],
            vocab.id("person1").unwrap()
        );
    }

    #[test]
    fn token_expansion_helpers() {
        let enc = encode_with(SpeakerMode::Additive);
        let segs = enc.dialogue.token_segments();
        assert_eq!(segs.len(), enc.dialogue.len_flat());
        assert_eq!(segs[0], 0);
        assert_eq!(segs[segs.len() - 1], 1);
        let speakers = enc.dialogue.token_speakers();
        // pad positions carry speaker 0 so embedding adds are no-ops there
        for (i, &m) in enc.dialogue.mask.iter().enumerate() {
            if !m {
                assert_eq!(speakers[i], 0);
            }
        }
    }

    #[test]
    fn missing_video_gives_empty_block() {
        let e = test_episode();
        let tri = trisect(&e, &[]);
        let cfg = EncoderConfig::default();
        let enc = encode_episode(&e, &tri, &test_vocab(), None, &cfg, &e.profile).unwrap();
        assert_eq!(enc.video.n_frames, 0);
        assert_eq!(enc.video.d_raw, 3);
    }

    #[test]
    fn mismatched_raw_width_rejected() {
        let e = test_episode();
        let mut rec = record();
        rec.d_raw = 5;
        rec.features = vec![0.0; 25];
        let tri = trisect(&e, &rec.timestamps);
        let cfg = EncoderConfig::default();
        assert!(encode_episode(&e, &tri, &test_vocab(), Some(&rec), &cfg, &e.profile).is_err());
    }

    #[test]
    fn alias_names_are_letter_only_and_distinct() {
        assert_eq!(person_alias(0), "persona");
        assert_eq!(person_alias(25), "personz");
        assert_eq!(person_alias(26), "personaa");
        assert_eq!(person_alias(27), "personab");
        let names: std::collections::BTreeSet<String> = (0..200).map(person_alias).collect();
        assert_eq!(names.len(), 200);
    }

    #[test]
    fn aliasing_makes_encodings_cast_invariant() {
        // the same scene played by a different cast must encode identically
        let a = test_episode();
        let mut b = test_episode();
        let retext = |s: &str| s.replace("person1", "person7").replace("person2", "person9");
        let retag = |s: &str| s.replace("Person1", "Person7").replace("Person2", "Person9");
        for u in &mut b.utterances {
            u.speaker = retag(&u.speaker);
            u.text = retext(&u.text);
        }
        for beh in &mut b.behaviors {
            beh.subject = retag(&beh.subject);
            beh.text = retext(&beh.text);
        }
        b.options = b.options.iter().map(|o| retext(o)).collect();
        b.target_person = retag(&b.target_person);
        let mut profile = PersonalityProfile::new();
        for (tag, t) in a.profile.iter() {
            profile.insert(&retag(tag), t);
        }
        b.profile = profile;

        let vocab = test_vocab();
        let rec = record();
        let cfg = EncoderConfig {
            l_d: 6,
            l_a: 6,
            l_b: 6,
            l_p: 4,
            speaker_mode: SpeakerMode::Additive,
            alias_tags: true,
        };
        let ea = encode_episode(&a, &trisect(&a, &rec.timestamps), &vocab, Some(&rec), &cfg, &a.profile).unwrap();
        let eb = encode_episode(&b, &trisect(&b, &rec.timestamps), &vocab, Some(&rec), &cfg, &b.profile).unwrap();
        assert_eq!(ea.dialogue, eb.dialogue);
        assert_eq!(ea.behaviors, eb.behaviors);
        assert_eq!(ea.options, eb.options);
        assert_eq!(ea.phrases, eb.phrases);
        assert_eq!(ea.person_queries, eb.person_queries);
        assert_eq!(ea.target_row, eb.target_row);
        // external identity is preserved, model-facing identity is not
        assert_eq!(ea.person_tags, vec!["Person1", "Person2"]);
        assert_eq!(eb.person_tags, vec!["Person7", "Person9"]);
        let real_tag_ids = [vocab.id("person1").unwrap(), vocab.id("person2").unwrap()];
        for grid in [&ea.dialogue, &ea.behaviors, &ea.options, &ea.phrases, &ea.person_queries] {
            for id in &grid.ids {
                assert!(!real_tag_ids.contains(id), "global tag leaked into encoding");
            }
        }
        // additive speaker ids are the alias leads, distinct per person
        let pa = vocab.id("persona").unwrap();
        let pb = vocab.id("personb").unwrap();
        assert_eq!(ea.dialogue.speaker, vec![pa, pb, pa]);
        // queries address people by alias
        assert_eq!(ea.person_queries.row_ids(0)[0], pa);
        assert_eq!(ea.person_queries.row_ids(1)[0], pb);
    }

    #[test]
    fn profile_override_changes_phrases_only() {
        let e = test_episode();
        let rec = record();
        let tri = trisect(&e, &rec.timestamps);
        let cfg = EncoderConfig::default();
        let vocab = test_vocab();
        let base = encode_episode(&e, &tri, &vocab, Some(&rec), &cfg, &e.profile).unwrap();
        let mut alt = PersonalityProfile::new();
        alt.insert("Person1", MbtiType::parse("INTJ").unwrap());
        alt.insert("Person2", MbtiType::parse("INTJ").unwrap());
        let swapped = encode_episode(&e, &tri, &vocab, Some(&rec), &cfg, &alt).unwrap();
        assert_ne!(base.phrases, swapped.phrases);
        assert_eq!(base.dialogue, swapped.dialogue);
        assert_eq!(base.person_queries, swapped.person_queries);
        assert_eq!(base.options, swapped.options);
    }
}
