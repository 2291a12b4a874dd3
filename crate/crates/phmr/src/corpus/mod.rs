//! Clip-episode data model: timeline trisection, dataset splits, statistics.
//!
//! An episode carries everything one reasoning item needs: dialogue
//! utterances, behavior descriptions, a reference to its visual feature
//! record, the personality profile of the characters in the clip, four
//! answer options with a gold index, and the present-moment span around
//! which the timeline is trisected.

pub mod io;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mbti::PersonalityProfile;
use crate::text;

/// A closed interval of clip time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub start: f64,
    pub end: f64,
}

impl TimeSpan {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite()) || start < 0.0 || start > end {
            return Err(Error::Corpus(format!(
                "invalid time span [{start}, {end}]"
            )));
        }
        Ok(TimeSpan { start, end })
    }

    pub fn instant(t: f64) -> Result<Self> {
        TimeSpan::new(t, t)
    }
}

/// One line of dialogue with its speaker tag and time span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: String,
    pub text: String,
    pub span: TimeSpan,
}

/// One annotated behavior description (a declarative sentence).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    pub subject: String,
    pub text: String,
    pub span: TimeSpan,
}

/// Reference to an episode's visual feature record in the binary sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualRef {
    /// Sidecar record key (equals the episode id for generated corpora).
    pub key: String,
    pub d_2d: usize,
    pub d_3d: usize,
}

/// Per-frame raw visual features as stored in the sidecar. Each row holds
/// the 2D-backbone block followed by the 3D-backbone block; the episode's
/// [`VisualRef`] records where the boundary falls.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVisualRecord {
    /// Row-major `n_frames x d_raw`.
    pub features: Vec<f32>,
    pub d_raw: usize,
    /// Non-decreasing, one per frame.
    pub timestamps: Vec<f64>,
}

impl RawVisualRecord {
    pub fn n_frames(&self) -> usize {
        self.timestamps.len()
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        &self.features[i * self.d_raw..(i + 1) * self.d_raw]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.timestamps.len();
        if self.features.len() != n * self.d_raw {
            return Err(Error::Shape {
                expected: format!("{n}x{}", self.d_raw),
                actual: format!("{} values", self.features.len()),
            });
        }
        if self.timestamps.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Corpus("frame timestamps must be non-decreasing".into()));
        }
        Ok(())
    }
}

/// One video clip with all task inputs and the multiple-choice answer set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipEpisode {
    pub id: String,
    /// Clip length in seconds.
    pub duration: f64,
    pub visual: VisualRef,
    pub utterances: Vec<Utterance>,
    pub behaviors: Vec<Behavior>,
    /// Personalities of the characters appearing in this clip.
    pub profile: PersonalityProfile,
    /// Span of the behavior to be predicted.
    pub present_span: TimeSpan,
    /// Exactly four candidate behavior descriptions.
    pub options: Vec<String>,
    /// Index of the correct option, 0..4.
    pub gold: usize,
    pub target_person: String,
}

impl ClipEpisode {
    /// Check every structural invariant. Called on load and after generation.
    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Error::Episode {
            episode: self.id.clone(),
            message,
        };
        if self.options.len() != 4 {
            return Err(fail(format!("expected 4 options, got {}", self.options.len())));
        }
        if self.gold >= 4 {
            return Err(fail(format!("gold index {} out of range", self.gold)));
        }
        if self.options.iter().any(|o| o.trim().is_empty()) {
            return Err(fail("empty option text".into()));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(fail(format!("bad duration {}", self.duration)));
        }
        if self.present_span.start > self.present_span.end
            || self.present_span.start < 0.0
            || self.present_span.end > self.duration
        {
            return Err(fail(format!(
                "present span [{}, {}] outside [0, {}]",
                self.present_span.start, self.present_span.end, self.duration
            )));
        }
        if !self.profile.contains(&self.target_person) {
            return Err(fail(format!(
                "target person {:?} missing from profile",
                self.target_person
            )));
        }
        for u in &self.utterances {
            if u.text.trim().is_empty() {
                return Err(fail(format!("empty utterance text by {}", u.speaker)));
            }
            TimeSpan::new(u.span.start, u.span.end).map_err(|e| fail(e.to_string()))?;
        }
        for b in &self.behaviors {
            if b.text.trim().is_empty() {
                return Err(fail(format!("empty behavior text for {}", b.subject)));
            }
            if b.text.trim_end().ends_with('?') {
                return Err(fail(format!(
                    "behavior must be declarative, got {:?}",
                    b.text
                )));
            }
            TimeSpan::new(b.span.start, b.span.end).map_err(|e| fail(e.to_string()))?;
        }
        Ok(())
    }
}

/// Which side of the present moment an item falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Past,
    Future,
    /// Overlaps the present span; excluded from model inputs.
    Excluded,
}

/// The trisection rule. An item is past iff it ends at or before the present
/// starts, future iff it starts at or after the present ends, and excluded
/// otherwise. Past is checked first, so a zero-width present span cannot
/// double-count a boundary-touching item.
pub fn place(span: TimeSpan, present: TimeSpan) -> Placement {
    if span.end <= present.start {
        Placement::Past
    } else if span.start >= present.end {
        Placement::Future
    } else {
        Placement::Excluded
    }
}

/// Past/future projections of every input modality around the present span.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrisectedInputs {
    pub dialogue_past: Vec<Utterance>,
    pub dialogue_future: Vec<Utterance>,
    pub behavior_past: Vec<Behavior>,
    pub behavior_future: Vec<Behavior>,
    /// Frame indices wholly before the present span (a prefix, since
    /// timestamps are non-decreasing).
    pub video_past: Vec<usize>,
    /// Frame indices wholly after the present span.
    pub video_future: Vec<usize>,
}

/// Partition an episode's items into past and future around `present_span`.
/// Items overlapping the present are dropped from both sides. Frame indices
/// are placed by treating each timestamp as a zero-width span.
pub fn trisect(episode: &ClipEpisode, frame_timestamps: &[f64]) -> TrisectedInputs {
    let present = episode.present_span;
    let mut out = TrisectedInputs::default();
    for u in &episode.utterances {
        match place(u.span, present) {
            Placement::Past => out.dialogue_past.push(u.clone()),
            Placement::Future => out.dialogue_future.push(u.clone()),
            Placement::Excluded => {}
        }
    }
    for b in &episode.behaviors {
        match place(b.span, present) {
            Placement::Past => out.behavior_past.push(b.clone()),
            Placement::Future => out.behavior_future.push(b.clone()),
            Placement::Excluded => {}
        }
    }
    for (i, &t) in frame_timestamps.iter().enumerate() {
        let span = TimeSpan { start: t, end: t };
        match place(span, present) {
            Placement::Past => out.video_past.push(i),
            Placement::Future => out.video_future.push(i),
            Placement::Excluded => {}
        }
    }
    out
}

/// Episode-id lists for the train/validation/test partition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl CorpusSplit {
    pub fn validate_disjoint_cover(&self, all_ids: &[String]) -> Result<()> {
        let mut seen = BTreeSet::new();
        for id in self
            .train
            .iter()
            .chain(self.validation.iter())
            .chain(self.test.iter())
        {
            if !seen.insert(id.clone()) {
                return Err(Error::Corpus(format!("id {id} appears in two splits")));
            }
        }
        let expected: BTreeSet<_> = all_ids.iter().cloned().collect();
        if seen != expected {
            return Err(Error::Corpus("split does not cover the corpus".into()));
        }
        Ok(())
    }
}

/// Integer part sizes proportional to `ratios`, summing to `n`, each within
/// one of its exact share (largest-remainder rounding, ties to earlier parts).
fn proportional_sizes(n: usize, ratios: &[usize]) -> Vec<usize> {
    let total: usize = ratios.iter().sum();
    let mut sizes: Vec<usize> = Vec::with_capacity(ratios.len());
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(ratios.len());
    let mut assigned = 0usize;
    for (i, &r) in ratios.iter().enumerate() {
        let exact = n as f64 * r as f64 / total as f64;
        let floor = exact.floor() as usize;
        sizes.push(floor);
        assigned += floor;
        remainders.push((i, exact - floor as f64));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..(n - assigned) {
        sizes[remainders[k].0] += 1;
    }
    sizes
}

/// Deterministic 3:1:1 split (or any ratio triple) of episode ids.
pub fn split_corpus(
    episodes: &[ClipEpisode],
    ratios: (usize, usize, usize),
    seed: u64,
) -> Result<CorpusSplit> {
    let total_ratio = ratios.0 + ratios.1 + ratios.2;
    if episodes.len() < total_ratio {
        return Err(Error::Corpus(format!(
            "too few episodes: need at least {total_ratio}, got {}",
            episodes.len()
        )));
    }
    let mut ids: Vec<String> = episodes.iter().map(|e| e.id.clone()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let sizes = proportional_sizes(ids.len(), &[ratios.0, ratios.1, ratios.2]);
    let validation_start = sizes[0];
    let test_start = sizes[0] + sizes[1];
    Ok(CorpusSplit {
        train: ids[..validation_start].to_vec(),
        validation: ids[validation_start..test_start].to_vec(),
        test: ids[test_start..].to_vec(),
    })
}

/// Personality-prediction split: clips outside `phmrd_ids` are divided 80/20
/// into train/validation; the clips in `phmrd_ids` form the test set exactly.
pub fn build_mpp_split(
    all_clips: &[ClipEpisode],
    phmrd_ids: &BTreeSet<String>,
    seed: u64,
) -> Result<CorpusSplit> {
    for id in phmrd_ids {
        if !all_clips.iter().any(|e| &e.id == id) {
            return Err(Error::Corpus(format!("phmrd id {id} not in corpus")));
        }
    }
    let mut complement: Vec<String> = all_clips
        .iter()
        .filter(|e| !phmrd_ids.contains(&e.id))
        .map(|e| e.id.clone())
        .collect();
    if complement.is_empty() {
        return Err(Error::Corpus(
            "no clips remain outside the reasoning set to train on".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    complement.shuffle(&mut rng);
    let sizes = proportional_sizes(complement.len(), &[4, 1]);
    let test: Vec<String> = all_clips
        .iter()
        .filter(|e| phmrd_ids.contains(&e.id))
        .map(|e| e.id.clone())
        .collect();
    Ok(CorpusSplit {
        train: complement[..sizes[0]].to_vec(),
        validation: complement[sizes[0]..].to_vec(),
        test,
    })
}

/// Corpus-level averages mirroring the usual dataset statistics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStatistics {
    pub n_episodes: usize,
    pub avg_clip_seconds: f64,
    pub avg_behaviors: f64,
    pub avg_utterances: f64,
    pub avg_related_personalities: f64,
    pub avg_option_tokens: f64,
    pub avg_behavior_tokens: f64,
    pub avg_utterance_tokens: f64,
}

/// Averages over a non-empty corpus. Lengths count whitespace tokens.
pub fn corpus_statistics(episodes: &[ClipEpisode]) -> Result<CorpusStatistics> {
    if episodes.is_empty() {
        return Err(Error::Corpus("cannot compute statistics of an empty corpus".into()));
    }
    let n = episodes.len() as f64;
    let mean = |f: &dyn Fn(&ClipEpisode) -> f64| episodes.iter().map(f).sum::<f64>() / n;
    let mean_tokens = |texts: &[&str]| {
        if texts.is_empty() {
            0.0
        } else {
            texts
                .iter()
                .map(|t| text::whitespace_token_count(t) as f64)
                .sum::<f64>()
                / texts.len() as f64
        }
    };
    let option_texts: Vec<&str> = episodes
        .iter()
        .flat_map(|e| e.options.iter().map(String::as_str))
        .collect();
    let behavior_texts: Vec<&str> = episodes
        .iter()
        .flat_map(|e| e.behaviors.iter().map(|b| b.text.as_str()))
        .collect();
    let utterance_texts: Vec<&str> = episodes
        .iter()
        .flat_map(|e| e.utterances.iter().map(|u| u.text.as_str()))
        .collect();
    Ok(CorpusStatistics {
        n_episodes: episodes.len(),
        avg_clip_seconds: mean(&|e| e.duration),
        avg_behaviors: mean(&|e| e.behaviors.len() as f64),
        avg_utterances: mean(&|e| e.utterances.len() as f64),
        avg_related_personalities: mean(&|e| e.profile.len() as f64),
        avg_option_tokens: mean_tokens(&option_texts),
        avg_behavior_tokens: mean_tokens(&behavior_texts),
        avg_utterance_tokens: mean_tokens(&utterance_texts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mbti::MbtiType;
    use proptest::prelude::*;

    fn span(start: f64, end: f64) -> TimeSpan {
        TimeSpan::new(start, end).unwrap()
    }

    pub(crate) fn tiny_episode(id: &str) -> ClipEpisode {
        let mut profile = PersonalityProfile::new();
        profile.insert("Person1", MbtiType::parse("ESFP").unwrap());
        ClipEpisode {
            id: id.to_string(),
            duration: 30.0,
            visual: VisualRef {
                key: id.to_string(),
                d_2d: 4,
                d_3d: 4,
            },
            utterances: vec![Utterance {
                speaker: "Person1".into(),
                text: "hello there".into(),
                span: span(1.0, 2.0),
            }],
            behaviors: vec![Behavior {
                subject: "Person1".into(),
                text: "Person1 waves at the group".into(),
                span: span(3.0, 4.0),
            }],
            profile,
            present_span: span(10.0, 12.0),
            options: vec![
                "Person1 smiles".into(),
                "Person1 leaves".into(),
                "Person1 waits".into(),
                "Person1 shrugs".into(),
            ],
            gold: 0,
            target_person: "Person1".into(),
        }
    }

    #[test]
    fn placement_rules() {
        let present = span(10.0, 12.0);
        assert_eq!(place(span(3.0, 5.0), present), Placement::Past);
        assert_eq!(place(span(11.0, 11.5), present), Placement::Excluded);
        assert_eq!(place(span(12.0, 14.0), present), Placement::Future);
        // boundary touches
        assert_eq!(place(span(8.0, 10.0), present), Placement::Past);
        assert_eq!(place(span(9.0, 10.5), present), Placement::Excluded);
        assert_eq!(place(span(10.0, 12.0), present), Placement::Excluded);
    }

    #[test]
    fn trisect_example_episode() {
        let mut e = tiny_episode("e1");
        e.utterances = vec![
            Utterance {
                speaker: "Person1".into(),
                text: "before".into(),
                span: span(3.0, 5.0),
            },
            Utterance {
                speaker: "Person1".into(),
                text: "during".into(),
                span: span(11.0, 11.5),
            },
            Utterance {
                speaker: "Person1".into(),
                text: "after".into(),
                span: span(12.0, 14.0),
            },
        ];
        let tri = trisect(&e, &[0.0, 9.0, 11.0, 12.0, 20.0]);
        assert_eq!(tri.dialogue_past.len(), 1);
        assert_eq!(tri.dialogue_future.len(), 1);
        assert_eq!(tri.dialogue_past[0].text, "before");
        assert_eq!(tri.dialogue_future[0].text, "after");
        assert_eq!(tri.video_past, vec![0, 1]);
        assert_eq!(tri.video_future, vec![3, 4]);
    }

    #[test]
    fn validate_catches_bad_gold_and_options() {
        let mut e = tiny_episode("e1");
        e.gold = 4;
        assert!(e.validate().is_err());
        let mut e = tiny_episode("e2");
        e.options.pop();
        assert!(e.validate().is_err());
        let mut e = tiny_episode("e3");
        e.behaviors[0].text = "does he wave?".into();
        assert!(e.validate().is_err());
        let mut e = tiny_episode("e4");
        e.target_person = "Person9".into();
        assert!(e.validate().is_err());
    }

    #[test]
    fn split_100_is_60_20_20() {
        let episodes: Vec<ClipEpisode> =
            (0..100).map(|i| tiny_episode(&format!("e{i}"))).collect();
        let split = split_corpus(&episodes, (3, 1, 1), 7).unwrap();
        assert_eq!(split.train.len(), 60);
        assert_eq!(split.validation.len(), 20);
        assert_eq!(split.test.len(), 20);
        let ids: Vec<String> = episodes.iter().map(|e| e.id.clone()).collect();
        split.validate_disjoint_cover(&ids).unwrap();
    }

    #[test]
    fn split_5_is_3_1_1_and_deterministic() {
        let episodes: Vec<ClipEpisode> = (0..5).map(|i| tiny_episode(&format!("e{i}"))).collect();
        let a = split_corpus(&episodes, (3, 1, 1), 42).unwrap();
        assert_eq!(
            (a.train.len(), a.validation.len(), a.test.len()),
            (3, 1, 1)
        );
        let b = split_corpus(&episodes, (3, 1, 1), 42).unwrap();
        assert_eq!(a, b);
        let c = split_corpus(&episodes, (3, 1, 1), 43).unwrap();
        assert_ne!(a, c); // different seed reshuffles (5! orderings, overwhelmingly distinct)
    }

    #[test]
    fn split_rejects_too_few() {
        let episodes: Vec<ClipEpisode> = (0..4).map(|i| tiny_episode(&format!("e{i}"))).collect();
        assert!(split_corpus(&episodes, (3, 1, 1), 0).is_err());
    }

    #[test]
    fn mpp_split_holds_out_reasoning_ids() {
        let episodes: Vec<ClipEpisode> =
            (0..150).map(|i| tiny_episode(&format!("e{i}"))).collect();
        let phmrd: BTreeSet<String> = (0..50).map(|i| format!("e{i}")).collect();
        let split = build_mpp_split(&episodes, &phmrd, 3).unwrap();
        assert_eq!(split.train.len(), 80);
        assert_eq!(split.validation.len(), 20);
        assert_eq!(split.test.len(), 50);
        let test_set: BTreeSet<String> = split.test.iter().cloned().collect();
        assert_eq!(test_set, phmrd);
        assert!(split.train.iter().all(|id| !phmrd.contains(id)));
        // same regardless of seed for the test part
        let again = build_mpp_split(&episodes, &phmrd, 99).unwrap();
        let test_again: BTreeSet<String> = again.test.iter().cloned().collect();
        assert_eq!(test_again, phmrd);
    }

    #[test]
    fn mpp_split_rejects_empty_complement() {
        let episodes: Vec<ClipEpisode> = (0..5).map(|i| tiny_episode(&format!("e{i}"))).collect();
        let phmrd: BTreeSet<String> = episodes.iter().map(|e| e.id.clone()).collect();
        assert!(build_mpp_split(&episodes, &phmrd, 0).is_err());
    }

    #[test]
    fn statistics_single_clip() {
        let e = tiny_episode("e1");
        let stats = corpus_statistics(std::slice::from_ref(&e)).unwrap();
        assert_eq!(stats.n_episodes, 1);
        assert!((stats.avg_clip_seconds - 30.0).abs() < 1e-12);
        assert!((stats.avg_behaviors - 1.0).abs() < 1e-12);
        assert!((stats.avg_utterances - 1.0).abs() < 1e-12);
        assert!((stats.avg_option_tokens - 2.0).abs() < 1e-12);
        assert!((stats.avg_utterance_tokens - 2.0).abs() < 1e-12);
    }

    #[test]
    fn statistics_invariant_under_duplication() {
        let e = tiny_episode("e1");
        let single = corpus_statistics(std::slice::from_ref(&e)).unwrap();
        let doubled = corpus_statistics(&[e.clone(), e]).unwrap();
        assert!((single.avg_clip_seconds - doubled.avg_clip_seconds).abs() < 1e-12);
        assert!((single.avg_option_tokens - doubled.avg_option_tokens).abs() < 1e-12);
        assert!((single.avg_behaviors - doubled.avg_behaviors).abs() < 1e-12);
    }

    #[test]
    fn statistics_reject_empty() {
        assert!(corpus_statistics(&[]).is_err());
    }

    proptest! {
        /// Partition law: every item lands in exactly one of past/future/excluded,
        /// decided only by span arithmetic.
        #[test]
        fn placement_is_a_partition(
            s in 0.0f64..100.0,
            len in 0.0f64..20.0,
            ps in 0.0f64..100.0,
            plen in 0.0f64..20.0,
        ) {
            let item = span(s, s + len);
            let present = span(ps, ps + plen);
            let p = place(item, present);
            let past = item.end <= present.start;
            let future = item.start >= present.end;
            match p {
                Placement::Past => prop_assert!(past),
                Placement::Future => prop_assert!(future && !past),
                Placement::Excluded => prop_assert!(!past && !future),
            }
        }

        #[test]
        fn proportional_sizes_within_one(n in 5usize..5000) {
            let sizes = proportional_sizes(n, &[3, 1, 1]);
            prop_assert_eq!(sizes.iter().sum::<usize>(), n);
            let exact = [0.6, 0.2, 0.2];
            for (sz, ex) in sizes.iter().zip(exact.iter()) {
                prop_assert!(((*sz as f64) - ex * n as f64).abs() <= 1.0);
            }
        }
    }
}
