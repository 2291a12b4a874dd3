//! Synthetic clip-episode corpora with planted, controllable signal.
//!
//! Every episode is built from coined vocabulary so nothing has to be
//! downloaded: a fixed cast of tagged people carries one type each (poles
//! balanced half/half per axis), utterances are shared-lexicon words of
//! which at most one per utterance is replaced by a word from the speaker's
//! pole lexicon (`personality_signal_strength` is the replacement
//! probability), per-frame visual features are pole-conditioned Gaussian
//! clusters, and the gold option is produced by a declared answer rule.
//! Each pole lexicon's first word is its planted marker and is drawn more
//! often than its siblings, which is what the word-frequency report keys
//! on.
//!
//! Generation is one deterministic stream: a single ChaCha20 generator
//! seeded from the config drives every draw in a fixed order, so equal
//! configs reproduce corpora byte for byte. A [`GoldTraces`] file records
//! each episode's latent choices with enough detail for
//! [`regenerate_gold`] to recompute the gold index and detect tampering.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    Behavior, ClipEpisode, RawVisualRecord, TimeSpan, Utterance, VisualRef,
};
use crate::error::{Error, Result};
use crate::mbti::{Axis, MbtiType, PersonalityProfile, Pole};

/// Index of a pole in the fixed [E, I, S, N, T, F, J, P] order.
pub fn pole_index(axis: Axis, pole: Pole) -> usize {
    axis.index() * 2
        + match pole {
            Pole::First => 0,
            Pole::Second => 1,
        }
}

/// One weighted word list; weights must sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub words: Vec<String>,
    pub weights: Vec<f64>,
}

impl Lexicon {
    pub fn uniform(words: &[&str]) -> Self {
        let n = words.len();
        Lexicon {
            words: words.iter().map(|w| w.to_string()).collect(),
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// First word heavy (the planted marker), the rest uniform.
    pub fn marked(words: &[&str], marker_weight: f64) -> Self {
        let n = words.len();
        let rest = (1.0 - marker_weight) / (n - 1) as f64;
        let mut weights = vec![rest; n];
        weights[0] = marker_weight;
        Lexicon {
            words: words.iter().map(|w| w.to_string()).collect(),
            weights,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.words.is_empty() || self.words.len() != self.weights.len() {
            return Err(Error::Config(
                "lexicon words and weights must be non-empty and equal length".into(),
            ));
        }
        if self.weights.iter().any(|&w| w < 0.0) {
            return Err(Error::Config("lexicon weights must be non-negative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "lexicon weights sum to {total}, expected 1"
            )));
        }
        Ok(())
    }

    /// The planted marker word of this lexicon.
    pub fn marker(&self) -> &str {
        &self.words[0]
    }

    fn sample(&self, rng: &mut ChaCha20Rng) -> &str {
        let mut r = rng.random_range(0.0..1.0);
        for (w, &p) in self.words.iter().zip(&self.weights) {
            if r < p {
                return w;
            }
            r -= p;
        }
        self.words.last().unwrap()
    }
}

/// All word material the generator draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorVocab {
    /// One lexicon per pole in [E, I, S, N, T, F, J, P] order; the first
    /// word of each is its planted marker.
    pub poles: Vec<Lexicon>,
    /// Personality-neutral words everyone uses.
    pub shared: Lexicon,
    /// One reaction word per pole, used only inside answer options.
    pub reactions: Vec<String>,
    /// Scene words for the personality_independent rule.
    pub contexts: Vec<String>,
    /// Verbs for option templates.
    pub option_verbs: Vec<String>,
    /// Verbs for behavior lines.
    pub behavior_verbs: Vec<String>,
}

impl Default for GeneratorVocab {
    fn default() -> Self {
        let m = 0.5;
        GeneratorVocab {
            poles: vec![
                Lexicon::marked(&["zuvani", "brela", "dorfin", "saquo"], m),
                Lexicon::marked(&["mirlow", "quenth", "halvet", "ossia"], m),
                Lexicon::marked(&["tekkin", "varnou", "plimsy", "grotta"], m),
                Lexicon::marked(&["yephra", "clunde", "sivaro", "wexley"], m),
                Lexicon::marked(&["kravel", "untrix", "bolmar", "dessin"], m),
                Lexicon::marked(&["lumeza", "harnix", "ferlo", "pindra"], m),
                Lexicon::marked(&["ordwin", "stavek", "murrin", "calpen"], m),
                Lexicon::marked(&["velping", "snorrel", "tazzle", "quindo"], m),
            ],
            // large enough that no single filler word outranks a planted
            // marker in the frequency report
            shared: Lexicon::uniform(&[
                "the", "and", "then", "well", "okay", "so", "like", "just", "really",
                "maybe", "here", "there", "about", "today", "again", "still", "quite",
                "right", "now", "thing", "stuff", "time", "good", "fine", "over",
                "under", "near", "soon", "often", "rarely", "almost", "pretty",
                "rather", "somewhat", "slowly", "quickly", "later", "early", "around",
                "behind", "beyond", "along", "though", "because", "while", "during",
                "without", "within",
            ]),
            reactions: [
                "sociango", "solivern", "facturn", "dreamell", "logikar", "tendrel",
                "planvok", "driftan",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            contexts: [
                "lanterno", "brickstow", "fernvale", "mopplet", "crandor", "veswick",
                "totleigh", "harbrim",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            option_verbs: ["shows", "gives", "makes", "takes", "turns", "keeps"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            behavior_verbs: ["nods", "waves", "smiles", "frowns", "shrugs", "leans"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl GeneratorVocab {
    pub fn validate(&self) -> Result<()> {
        if self.poles.len() != 8 {
            return Err(Error::Config(format!(
                "expected 8 pole lexicons, got {}",
                self.poles.len()
            )));
        }
        for lex in &self.poles {
            lex.validate()?;
        }
        self.shared.validate()?;
        if self.reactions.len() != 8 {
            return Err(Error::Config("expected 8 reaction words".into()));
        }
        if self.contexts.len() < 4 {
            return Err(Error::Config("need at least 4 context words".into()));
        }
        if self.option_verbs.is_empty() || self.behavior_verbs.is_empty() {
            return Err(Error::Config("verb lists must be non-empty".into()));
        }
        Ok(())
    }
}

/// How the gold option is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerRule {
    /// Gold reaction matches the target's pole on the episode's axis.
    PersonalityDependent,
    /// Gold echoes a scene word planted in the past context.
    PersonalityIndependent,
    /// Gold is the strictly longest option.
    LongestAlways,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_episodes: usize,
    pub cast_size: usize,
    pub vocab: GeneratorVocab,
    /// Mixture weight of the speaker's pole lexicons vs the shared one.
    pub personality_signal_strength: f64,
    pub answer_rule: AnswerRule,
    /// Probability of padding the gold option with extra filler words.
    pub length_bias: f64,
    pub seed: u64,
    pub persons_per_episode: usize,
    pub utterances_per_episode: usize,
    pub behaviors_per_episode: usize,
    pub frames_per_episode: usize,
    pub d_2d: usize,
    pub d_3d: usize,
    /// Scale of the per-pole visual cluster centers.
    pub visual_cluster_separation: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::new(2000, 8, AnswerRule::PersonalityDependent, 41)
    }
}

impl GeneratorConfig {
    pub fn new(n_episodes: usize, cast_size: usize, rule: AnswerRule, seed: u64) -> Self {
        GeneratorConfig {
            n_episodes,
            cast_size,
            vocab: GeneratorVocab::default(),
            personality_signal_strength: 0.8,
            answer_rule: rule,
            length_bias: 0.0,
            seed,
            persons_per_episode: 2,
            utterances_per_episode: 7,
            behaviors_per_episode: 2,
            frames_per_episode: 10,
            d_2d: 6,
            d_3d: 4,
            visual_cluster_separation: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.vocab.validate()?;
        if self.n_episodes == 0 {
            return Err(Error::Config("n_episodes must be positive".into()));
        }
        if self.cast_size < 2 || self.cast_size > 64 {
            return Err(Error::Config("cast_size must be in [2, 64]".into()));
        }
        if !(0.0..=1.0).contains(&self.personality_signal_strength) {
            return Err(Error::Config(format!(
                "signal strength {} outside [0,1]",
                self.personality_signal_strength
            )));
        }
        if !(0.0..=1.0).contains(&self.length_bias) {
            return Err(Error::Config("length_bias outside [0,1]".into()));
        }
        if self.persons_per_episode < 2 || self.persons_per_episode > self.cast_size {
            return Err(Error::Config(
                "persons_per_episode must be in [2, cast_size]".into(),
            ));
        }
        if self.utterances_per_episode < 2 || self.behaviors_per_episode == 0 {
            return Err(Error::Config(
                "need at least 2 utterances and 1 behavior per episode".into(),
            ));
        }
        if self.d_2d + self.d_3d == 0 {
            return Err(Error::Config("visual width must be positive".into()));
        }
        Ok(())
    }
}

/// The latent choices behind one episode's gold option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode_id: String,
    pub rule: AnswerRule,
    pub target: String,
    pub target_type: MbtiType,
    /// Axis the question asks about (personality_dependent only).
    pub question_axis: Option<usize>,
    /// The one word that identifies the gold option: a reaction word, a
    /// context word, or empty for the length rule.
    pub key_word: String,
    pub gold: usize,
}

/// Whole-corpus trace: the cast's latent types plus one record per episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldTraces {
    pub schema: String,
    pub cast: BTreeMap<String, MbtiType>,
    pub episodes: Vec<EpisodeTrace>,
}

pub const TRACE_SCHEMA: &str = "phmr-trace-1";

impl GoldTraces {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let traces: GoldTraces = serde_json::from_reader(std::io::BufReader::new(file))?;
        if traces.schema != TRACE_SCHEMA {
            return Err(Error::Corpus(format!(
                "unknown trace schema {:?}",
                traces.schema
            )));
        }
        Ok(traces)
    }

    pub fn for_episode(&self, id: &str) -> Option<&EpisodeTrace> {
        self.episodes.iter().find(|t| t.episode_id == id)
    }
}

/// A generated corpus: episodes, their visual records, and the gold trace.
pub struct GeneratedCorpus {
    pub episodes: Vec<ClipEpisode>,
    pub records: BTreeMap<String, RawVisualRecord>,
    pub traces: GoldTraces,
}

/// Standard normal via Box-Muller (keeps the dependency set small and the
/// stream portable).
fn normal(rng: &mut ChaCha20Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn pick<'a, T>(rng: &mut ChaCha20Rng, xs: &'a [T]) -> &'a T {
    &xs[rng.random_range(0..xs.len())]
}

/// Personality-neutral text from the shared lexicon.
fn shared_text(
    rng: &mut ChaCha20Rng,
    vocab: &GeneratorVocab,
    min_words: usize,
    max_words: usize,
) -> String {
    let n = rng.random_range(min_words..=max_words);
    let words: Vec<&str> = (0..n).map(|_| vocab.shared.sample(rng)).collect();
    words.join(" ")
}

/// One utterance for a speaker of the given type: shared words, except that
/// with probability `signal` one slot carries a word from the speaker's pole
/// lexicon on a uniformly random axis. Capping each utterance at a single
/// personality-coded word keeps any one episode's evidence about any one
/// axis scarce, while corpus-pooled frequencies stay strong.
fn sample_utterance(
    rng: &mut ChaCha20Rng,
    vocab: &GeneratorVocab,
    t: MbtiType,
    signal: f64,
    min_words: usize,
    max_words: usize,
) -> String {
    let n = rng.random_range(min_words..=max_words);
    let mut words: Vec<String> = (0..n)
        .map(|_| vocab.shared.sample(rng).to_string())
        .collect();
    if rng.random_range(0.0..1.0) < signal {
        let slot = rng.random_range(0..n);
        let axis = Axis::ALL[rng.random_range(0..4)];
        words[slot] = vocab.poles[pole_index(axis, t.pole(axis))]
            .sample(rng)
            .to_string();
    }
    words.join(" ")
}

struct OptionDraft {
    text: String,
    is_gold: bool,
}

/// Generate the full corpus for a config. Single RNG stream, fixed draw
/// order, so equal configs give byte-identical output.
pub fn generate_corpus(cfg: &GeneratorConfig) -> Result<GeneratedCorpus> {
    cfg.validate()?;
    let vocab = &cfg.vocab;
    let signal = cfg.personality_signal_strength;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);

    // latent cast: types are taken from a balanced design (even-parity
    // 4-bit codes first, then their complements) tiled across the cast and
    // shuffled as whole rows. Every prefix keeps each axis within one of a
    // half/half split AND keeps axis pairs decorrelated, so no pole group
    // is accidentally dominated by one pole of another axis — random
    // per-axis assignment can do that, which confounds frequency analyses.
    let tags: Vec<String> = (1..=cfg.cast_size).map(|i| format!("Person{i}")).collect();
    const TYPE_SEQUENCE: [u8; 16] = [
        0b0000, 0b1111, 0b0011, 0b1100, 0b0101, 0b1010, 0b0110, 0b1001,
        0b0001, 0b1110, 0b0010, 0b1101, 0b0100, 0b1011, 0b1000, 0b0111,
    ];
    let mut cast_types: Vec<MbtiType> = (0..cfg.cast_size)
        .map(|i| {
            let bits = TYPE_SEQUENCE[i % 16];
            let poles = std::array::from_fn(|a| {
                if bits >> (3 - a) & 1 == 0 {
                    Pole::First
                } else {
                    Pole::Second
                }
            });
            MbtiType::from_poles(poles)
        })
        .collect();
    cast_types.shuffle(&mut rng);
    let mut cast = BTreeMap::new();
    for (tag, t) in tags.iter().zip(&cast_types) {
        cast.insert(tag.clone(), *t);
    }

    // pole-conditioned visual cluster centers, one per pole
    let d_raw = cfg.d_2d + cfg.d_3d;
    let mut centers_rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);
    let centers: Vec<Vec<f64>> = (0..8)
        .map(|_| {
            (0..d_raw)
                .map(|_| normal(&mut centers_rng) * cfg.visual_cluster_separation)
                .collect()
        })
        .collect();
    let signature = |t: MbtiType| -> Vec<f64> {
        let mut s = vec![0.0; d_raw];
        for axis in Axis::ALL {
            let c = &centers[pole_index(axis, t.pole(axis))];
            for (si, ci) in s.iter_mut().zip(c) {
                *si += ci * 0.25;
            }
        }
        s
    };

    let mut episodes = Vec::with_capacity(cfg.n_episodes);
    let mut records = BTreeMap::new();
    let mut traces = Vec::with_capacity(cfg.n_episodes);

    for e in 0..cfg.n_episodes {
        let id = format!("ep{e:06}");

        // present persons: target first, then distinct others
        let mut present: Vec<&String> = Vec::with_capacity(cfg.persons_per_episode);
        while present.len() < cfg.persons_per_episode {
            let p = pick(&mut rng, &tags);
            if !present.contains(&p) {
                present.push(p);
            }
        }
        let target = present[0].clone();
        let target_type = cast[&target];

        // speakers: target gets every other slot, others rotate
        let n_u = cfg.utterances_per_episode;
        let n_b = cfg.behaviors_per_episode;
        let mut speakers: Vec<&String> = Vec::with_capacity(n_u);
        for i in 0..n_u {
            if i % 2 == 0 {
                speakers.push(&target);
            } else {
                speakers.push(present[1 + (i / 2) % (present.len() - 1)]);
            }
        }
        let mut utterance_texts: Vec<(String, String)> = speakers
            .iter()
            .map(|s| {
                let text = sample_utterance(&mut rng, vocab, cast[*s], signal, 3, 6);
                ((*s).clone(), text)
            })
            .collect();
        let mut behavior_texts: Vec<(String, String)> = (0..n_b)
            .map(|_| {
                let subj = if rng.random_range(0.0..1.0) < 0.6 {
                    target.clone()
                } else {
                    (*pick(&mut rng, &present[1..])).clone()
                };
                let verb = pick(&mut rng, &vocab.behavior_verbs).clone();
                let tail = shared_text(&mut rng, vocab, 1, 2);
                let text = format!("{} {verb} {tail}", subj.to_lowercase());
                (subj, text)
            })
            .collect();

        // the answer rule decides gold and may edit the context
        let filler = |rng: &mut ChaCha20Rng, n: usize| -> String {
            (0..n)
                .map(|_| vocab.shared.sample(rng).to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        let (mut drafts, question_axis, key_word): (Vec<OptionDraft>, Option<usize>, String) =
            match cfg.answer_rule {
                AnswerRule::PersonalityDependent => {
                    let axis = Axis::ALL[rng.random_range(0..4)];
                    let gold_pole = target_type.pole(axis);
                    // distractors: the opposite pole plus two flipped poles
                    // from other axes — no distractor matches the target
                    let mut other_axes: Vec<Axis> =
                        Axis::ALL.iter().copied().filter(|a| *a != axis).collect();
                    let drop = rng.random_range(0..other_axes.len());
                    other_axes.remove(drop);
                    let mut poles = vec![(axis, gold_pole, true), (axis, gold_pole.flip(), false)];
                    for a in other_axes {
                        poles.push((a, target_type.pole(a).flip(), false));
                    }
                    let key = vocab.reactions[pole_index(axis, gold_pole)].clone();
                    let drafts = poles
                        .into_iter()
                        .map(|(a, p, is_gold)| {
                            let verb = pick(&mut rng, &vocab.option_verbs);
                            let extras = rng.random_range(0..=2);
                            let mut text = format!(
                                "{} {verb} {}",
                                target.to_lowercase(),
                                vocab.reactions[pole_index(a, p)]
                            );
                            if extras > 0 {
                                text = format!("{text} {}", filler(&mut rng, extras));
                            }
                            OptionDraft { text, is_gold }
                        })
                        .collect();
                    (drafts, Some(axis.index()), key)
                }
                AnswerRule::PersonalityIndependent => {
                    // plant a scene word into early context, gold echoes it
                    let mut words: Vec<&String> = Vec::new();
                    while words.len() < 4 {
                        let w = pick(&mut rng, &vocab.contexts);
                        if !words.contains(&w) {
                            words.push(w);
                        }
                    }
                    let planted = words[0].clone();
                    utterance_texts[0].1 = format!("{} {planted}", utterance_texts[0].1);
                    behavior_texts[0].1 = format!("{} {planted}", behavior_texts[0].1);
                    let drafts = words
                        .iter()
                        .enumerate()
                        .map(|(i, w)| {
                            let verb = pick(&mut rng, &vocab.option_verbs);
                            let extras = rng.random_range(0..=2);
                            let mut text =
                                format!("{} {verb} {w}", target.to_lowercase());
                            if extras > 0 {
                                text = format!("{text} {}", filler(&mut rng, extras));
                            }
                            OptionDraft {
                                text,
                                is_gold: i == 0,
                            }
                        })
                        .collect();
                    (drafts, None, planted)
                }
                AnswerRule::LongestAlways => {
                    // distinct token lengths; the longest is gold
                    let mut lengths = vec![3usize, 4, 5, 7];
                    for i in (1..lengths.len()).rev() {
                        let j = rng.random_range(0..=i);
                        lengths.swap(i, j);
                    }
                    let max = *lengths.iter().max().unwrap();
                    let drafts = lengths
                        .iter()
                        .map(|&len| {
                            let verb = pick(&mut rng, &vocab.option_verbs);
                            let text = format!(
                                "{} {verb} {}",
                                target.to_lowercase(),
                                filler(&mut rng, len - 2)
                            );
                            OptionDraft {
                                text,
                                is_gold: len == max,
                            }
                        })
                        .collect();
                    (drafts, None, String::new())
                }
            };

        if cfg.length_bias > 0.0
            && cfg.answer_rule != AnswerRule::LongestAlways
            && rng.random_range(0.0..1.0) < cfg.length_bias
        {
            let max_len = drafts
                .iter()
                .map(|d| d.text.split_whitespace().count())
                .max()
                .unwrap();
            for d in &mut drafts {
                if d.is_gold {
                    let have = d.text.split_whitespace().count();
                    let need = max_len + 1 - have.min(max_len);
                    d.text = format!("{} {}", d.text, filler(&mut rng, need + 1));
                }
            }
        }

        // shuffle options so gold position is uniform
        for i in (1..drafts.len()).rev() {
            let j = rng.random_range(0..=i);
            drafts.swap(i, j);
        }
        let gold = drafts.iter().position(|d| d.is_gold).unwrap();
        let options: Vec<String> = drafts.into_iter().map(|d| d.text).collect();

        // timeline: sequential event spans, a present gap at ~70%
        let n_events = n_u + n_b;
        let mut spans = Vec::with_capacity(n_events);
        let mut t = rng.random_range(0.5..2.0);
        for _ in 0..n_events {
            let len = 1.0 + rng.random_range(0.0..1.5);
            spans.push((t, t + len));
            t += len + rng.random_range(0.5..2.0);
        }
        let past_events = ((n_events as f64) * 0.7).floor() as usize;
        let past_events = past_events.clamp(1, n_events - 1);
        let gap_lo = spans[past_events - 1].1;
        let gap_hi = spans[past_events].0;
        // widen the timeline so the present window has room
        let present_len = 1.0 + rng.random_range(0.0..1.0);
        let shift = (present_len + 1.0) - (gap_hi - gap_lo - 0.4);
        if shift > 0.0 {
            for s in spans.iter_mut().skip(past_events) {
                s.0 += shift;
                s.1 += shift;
            }
        }
        let present_start = gap_lo + 0.2;
        let present_window = TimeSpan::new(present_start, present_start + present_len)?;
        let duration = spans.last().unwrap().1 + rng.random_range(1.0..3.0);

        // interleave behaviors among the events: utterances first in time
        // order, behaviors take slots 2 and 5 (wrapping) of the sequence
        let mut utterances = Vec::with_capacity(n_u);
        let mut behaviors = Vec::with_capacity(n_b);
        let behavior_slots: Vec<usize> =
            (0..n_b).map(|k| (2 + 3 * k) % n_events).collect();
        let mut ui = 0;
        let mut bi = 0;
        for (slot, &(s0, s1)) in spans.iter().enumerate() {
            let span = TimeSpan::new(s0, s1)?;
            if behavior_slots.contains(&slot) && bi < n_b {
                let (subject, text) = behavior_texts[bi].clone();
                behaviors.push(Behavior {
                    subject,
                    text,
                    span,
                });
                bi += 1;
            } else if ui < n_u {
                let (speaker, text) = utterance_texts[ui].clone();
                utterances.push(Utterance {
                    speaker,
                    text,
                    span,
                });
                ui += 1;
            } else {
                let (subject, text) = behavior_texts[bi].clone();
                behaviors.push(Behavior {
                    subject,
                    text,
                    span,
                });
                bi += 1;
            }
        }

        // visual frames: cluster around present persons' signatures
        let mut timestamps = Vec::with_capacity(cfg.frames_per_episode);
        let mut features = Vec::with_capacity(cfg.frames_per_episode * d_raw);
        for f in 0..cfg.frames_per_episode {
            let base = duration * (f as f64 + 0.5) / cfg.frames_per_episode as f64;
            let jitter = rng.random_range(-0.3..0.3);
            timestamps.push((base + jitter).clamp(0.0, duration));
            let person = if rng.random_range(0.0..1.0) < 0.6 {
                &target
            } else {
                pick(&mut rng, &present[1..])
            };
            let sig = signature(cast[person]);
            for item in sig.iter().take(d_raw) {
                let v = item * signal + normal(&mut rng) * 0.6;
                features.push(v as f32);
            }
        }

        let mut profile = PersonalityProfile::new();
        for p in &present {
            profile.insert((*p).clone(), cast[p.as_str()]);
        }

        let episode = ClipEpisode {
            id: id.clone(),
            duration,
            visual: VisualRef {
                key: id.clone(),
                d_2d: cfg.d_2d,
                d_3d: cfg.d_3d,
            },
            utterances,
            behaviors,
            profile,
            present_span: present_window,
            options,
            gold,
            target_person: target.clone(),
        };
        episode.validate()?;
        episodes.push(episode);
        records.insert(
            id.clone(),
            RawVisualRecord {
                features,
                d_raw,
                timestamps,
            },
        );
        traces.push(EpisodeTrace {
            episode_id: id,
            rule: cfg.answer_rule,
            target,
            target_type,
            question_axis,
            key_word,
            gold,
        });
    }

    Ok(GeneratedCorpus {
        episodes,
        records,
        traces: GoldTraces {
            schema: TRACE_SCHEMA.to_string(),
            cast,
            episodes: traces,
        },
    })
}

/// Recompute the gold index for an episode from its trace and verify it
/// matches what the episode stores. Detects tampered options or labels.
pub fn regenerate_gold(episode: &ClipEpisode, trace: &EpisodeTrace) -> Result<usize> {
    if trace.episode_id != episode.id {
        return Err(Error::TraceMismatch {
            episode: episode.id.clone(),
            message: format!("trace belongs to {}", trace.episode_id),
        });
    }
    let recomputed = match trace.rule {
        AnswerRule::LongestAlways => {
            let lengths: Vec<usize> = episode
                .options
                .iter()
                .map(|o| o.split_whitespace().count())
                .collect();
            let max = *lengths.iter().max().unwrap();
            if lengths.iter().filter(|&&l| l == max).count() != 1 {
                return Err(Error::TraceMismatch {
                    episode: episode.id.clone(),
                    message: "longest option is not unique".into(),
                });
            }
            lengths.iter().position(|&l| l == max).unwrap()
        }
        AnswerRule::PersonalityDependent | AnswerRule::PersonalityIndependent => {
            let hits: Vec<usize> = episode
                .options
                .iter()
                .enumerate()
                .filter(|(_, o)| o.split_whitespace().any(|w| w == trace.key_word))
                .map(|(i, _)| i)
                .collect();
            match hits.as_slice() {
                [one] => *one,
                _ => {
                    return Err(Error::TraceMismatch {
                        episode: episode.id.clone(),
                        message: format!(
                            "key word {:?} matches {} options",
                            trace.key_word,
                            hits.len()
                        ),
                    })
                }
            }
        }
    };
    if recomputed != episode.gold {
        return Err(Error::TraceMismatch {
            episode: episode.id.clone(),
            message: format!(
                "stored gold {} but rule gives {recomputed}",
                episode.gold
            ),
        });
    }
    Ok(recomputed)
}

/// Verify every episode against its trace; error on the first mismatch.
pub fn verify_corpus(episodes: &[ClipEpisode], traces: &GoldTraces) -> Result<()> {
    for ep in episodes {
        let trace = traces.for_episode(&ep.id).ok_or_else(|| Error::TraceMismatch {
            episode: ep.id.clone(),
            message: "no trace for episode".into(),
        })?;
        regenerate_gold(ep, trace)?;
    }
    Ok(())
}
