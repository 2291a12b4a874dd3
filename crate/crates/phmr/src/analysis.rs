//! Corpus analysis: per-pole word-frequency lists (word clouds), per-axis
//! pole percentages, an independent leave-one-character-out frequency
//! classifier, and an empirical pole/word mutual-information estimate.
//!
//! These are deliberately model-free: they read only episode text and the
//! observable profiles, so they can serve as oracles for what a trained
//! model should be able to recover.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::ClipEpisode;
use crate::error::{Error, Result};
use crate::mbti::{Axis, Pole};
use crate::text::lower_words;

/// Pole labels in the fixed [E, I, S, N, T, F, J, P] order.
pub const POLE_LABELS: [&str; 8] = ["E", "I", "S", "N", "T", "F", "J", "P"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordCount {
    pub token: String,
    pub count: u64,
    pub pole: String,
}

/// Top words per pole, counted over utterances of every speaker holding
/// that pole.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordFrequencyReport {
    pub top_k: usize,
    /// Eight lists in [E, I, S, N, T, F, J, P] order.
    pub poles: Vec<Vec<WordCount>>,
}

impl WordFrequencyReport {
    pub fn list(&self, axis: Axis, pole: Pole) -> &[WordCount] {
        &self.poles[crate::syngen::pole_index(axis, pole)]
    }

    pub fn rank(&self, axis: Axis, pole: Pole, token: &str) -> Option<usize> {
        self.list(axis, pole).iter().position(|w| w.token == token)
    }

    /// Flat word-cloud array: `[{token, count, pole}, ...]`.
    pub fn word_cloud(&self) -> Vec<WordCount> {
        self.poles.iter().flatten().cloned().collect()
    }
}

/// Count utterance words per pole of the speaker. Speakers missing from an
/// episode's profile are skipped (nothing is known about them).
pub fn word_frequency_report(episodes: &[ClipEpisode], top_k: usize) -> WordFrequencyReport {
    let mut counts: Vec<BTreeMap<String, u64>> = vec![BTreeMap::new(); 8];
    for ep in episodes {
        for u in &ep.utterances {
            let Some(t) = ep.profile.get(&u.speaker) else {
                continue;
            };
            for w in lower_words(&u.text) {
                for axis in Axis::ALL {
                    let idx = crate::syngen::pole_index(axis, t.pole(axis));
                    *counts[idx].entry(w.clone()).or_insert(0) += 1;
                }
            }
        }
    }
    let poles = counts
        .iter()
        .enumerate()
        .map(|(idx, map)| {
            let mut entries: Vec<WordCount> = map
                .iter()
                .map(|(token, &count)| WordCount {
                    token: token.clone(),
                    count,
                    pole: POLE_LABELS[idx].to_string(),
                })
                .collect();
            // count desc, then token asc: deterministic ranking
            entries.sort_by(|a, b| b.count.cmp(&a.count).then(a.token.cmp(&b.token)));
            entries.truncate(top_k);
            entries
        })
        .collect();
    WordFrequencyReport { top_k, poles }
}

/// Share of distinct profiled persons holding each pole, per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolePercentages {
    /// `[axis][0]` = first pole share, `[axis][1]` = second pole share.
    pub shares: [[f64; 2]; 4],
    pub n_persons: usize,
}

pub fn pole_percentages(episodes: &[ClipEpisode]) -> Result<PolePercentages> {
    let mut people = BTreeMap::new();
    for ep in episodes {
        for (tag, t) in ep.profile.iter() {
            people.insert(tag.to_string(), t);
        }
    }
    if people.is_empty() {
        return Err(Error::Corpus("no profiled persons in the corpus".into()));
    }
    let mut shares = [[0.0f64; 2]; 4];
    for t in people.values() {
        for axis in Axis::ALL {
            let side = match t.pole(axis) {
                Pole::First => 0,
                Pole::Second => 1,
            };
            shares[axis.index()][side] += 1.0;
        }
    }
    let n = people.len() as f64;
    for row in &mut shares {
        row[0] /= n;
        row[1] /= n;
    }
    Ok(PolePercentages {
        shares,
        n_persons: people.len(),
    })
}

/// Result of the leave-one-character-out frequency classifier on one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub axis: usize,
    pub n_characters: usize,
    pub n_correct: usize,
    pub accuracy: f64,
}

/// Naive-Bayes-style pole recovery from word frequencies alone, evaluated
/// leave-one-character-out: each character's pole profile is estimated from
/// everyone else's utterances. This is the independent oracle for "the
/// planted signal is actually recoverable from text".
pub fn frequency_pole_classifier(episodes: &[ClipEpisode], axis: Axis) -> Result<ClassifierReport> {
    // per-character word counts and gold poles
    let mut char_counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut char_pole: BTreeMap<String, Pole> = BTreeMap::new();
    let mut vocab: BTreeSet<String> = BTreeSet::new();
    for ep in episodes {
        for u in &ep.utterances {
            let Some(t) = ep.profile.get(&u.speaker) else {
                continue;
            };
            char_pole.insert(u.speaker.clone(), t.pole(axis));
            let entry = char_counts.entry(u.speaker.clone()).or_default();
            for w in lower_words(&u.text) {
                vocab.insert(w.clone());
                *entry.entry(w).or_insert(0) += 1;
            }
        }
    }
    if char_counts.len() < 2 {
        return Err(Error::Corpus(
            "need at least two speaking characters to classify".into(),
        ));
    }

    // pole-level totals (all characters); LOO subtracts the held-out one
    let mut pole_word: [BTreeMap<&str, u64>; 2] = [BTreeMap::new(), BTreeMap::new()];
    let mut pole_total = [0u64; 2];
    let side = |p: Pole| usize::from(p == Pole::Second);
    for (tag, words) in &char_counts {
        let s = side(char_pole[tag]);
        for (w, &c) in words {
            *pole_word[s].entry(w.as_str()).or_insert(0) += c;
            pole_total[s] += c;
        }
    }

    let alpha = 0.5;
    let v = vocab.len() as f64;
    let mut correct = 0;
    for (tag, words) in &char_counts {
        let own = side(char_pole[tag]);
        let mut ll = [0.0f64; 2];
        for s in 0..2 {
            let mut total = pole_total[s] as f64;
            if s == own {
                total -= words.values().sum::<u64>() as f64;
            }
            for (w, &c) in words {
                let mut cnt = pole_word[s].get(w.as_str()).copied().unwrap_or(0) as f64;
                if s == own {
                    cnt -= c as f64;
                }
                ll[s] += c as f64 * ((cnt + alpha) / (total + alpha * v)).ln();
            }
        }
        // ties go to the first pole, matching the rest of the toolkit
        let predicted = if ll[0] >= ll[1] { 0 } else { 1 };
        if predicted == own {
            correct += 1;
        }
    }
    Ok(ClassifierReport {
        axis: axis.index(),
        n_characters: char_counts.len(),
        n_correct: correct,
        accuracy: correct as f64 / char_counts.len() as f64,
    })
}

/// Plug-in estimate (nats) of the mutual information between a speaker's
/// pole on `axis` and the word unigram distribution of their utterances.
pub fn pole_word_mutual_information(episodes: &[ClipEpisode], axis: Axis) -> Result<f64> {
    let mut joint: [BTreeMap<String, u64>; 2] = [BTreeMap::new(), BTreeMap::new()];
    let mut pole_n = [0u64; 2];
    for ep in episodes {
        for u in &ep.utterances {
            let Some(t) = ep.profile.get(&u.speaker) else {
                continue;
            };
            let s = usize::from(t.pole(axis) == Pole::Second);
            for w in lower_words(&u.text) {
                *joint[s].entry(w).or_insert(0) += 1;
                pole_n[s] += 1;
            }
        }
    }
    let n = (pole_n[0] + pole_n[1]) as f64;
    if n == 0.0 {
        return Err(Error::Corpus("no profiled utterance words".into()));
    }
    let mut word_totals: BTreeMap<&str, u64> = BTreeMap::new();
    for m in &joint {
        for (w, &c) in m {
            *word_totals.entry(w.as_str()).or_insert(0) += c;
        }
    }
    let mut mi = 0.0;
    for s in 0..2 {
        let p_pole = pole_n[s] as f64 / n;
        if p_pole == 0.0 {
            continue;
        }
        for (w, &c) in &joint[s] {
            let p_joint = c as f64 / n;
            let p_word = word_totals[w.as_str()] as f64 / n;
            mi += p_joint * (p_joint / (p_pole * p_word)).ln();
        }
    }
    Ok(mi)
}
