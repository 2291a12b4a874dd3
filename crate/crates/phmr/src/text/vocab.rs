//! Subword vocabulary: a WordPiece-style trainer and greedy tokenizer.
//!
//! Training starts from the character alphabet (continuation pieces carry a
//! `##` prefix) and repeatedly merges the adjacent pair with the highest
//! association score `freq(pair) / (freq(left) * freq(right))`. Score ties
//! break toward the pair first seen in corpus-scan order, which makes the
//! whole procedure deterministic for a fixed corpus. Tokenization is greedy
//! longest-match-first; a word that cannot be covered becomes a single
//! unknown token.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::lower_words;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "[pad]";
pub const UNK_TOKEN: &str = "[unk]";

const CONTINUATION: &str = "##";

/// Dense subword-to-id map with reserved pad (0) and unknown (1) ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl Vocabulary {
    /// Train on pre-tokenized corpus text (lowercased, punctuation-stripped
    /// words). `max_size` caps the total vocabulary including the two
    /// specials; `min_freq` is the minimum pair frequency for a merge.
    pub fn build<I, S>(texts: I, max_size: usize, min_freq: u64) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        // Word frequencies in first-seen order.
        let mut word_order: Vec<String> = Vec::new();
        let mut word_freq: HashMap<String, u64> = HashMap::new();
        for text in texts {
            for w in lower_words(text.as_ref()) {
                match word_freq.get_mut(&w) {
                    Some(f) => *f += 1,
                    None => {
                        word_freq.insert(w.clone(), 1);
                        word_order.push(w);
                    }
                }
            }
        }
        if word_order.is_empty() {
            return Err(Error::Corpus("cannot build a vocabulary from empty text".into()));
        }

        let mut tokens: Vec<String> = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut lookup: HashMap<String, u32> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let intern = |s: String, tokens: &mut Vec<String>, lookup: &mut HashMap<String, u32>| {
            *lookup.entry(s.clone()).or_insert_with(|| {
                tokens.push(s);
                (tokens.len() - 1) as u32
            })
        };

        // Initial segmentation: first char bare, the rest with the
        // continuation prefix. The full alphabet must fit under max_size.
        struct TrainerWord {
            units: Vec<u32>,
            freq: u64,
        }
        let mut words: Vec<TrainerWord> = Vec::with_capacity(word_order.len());
        for w in &word_order {
            let mut units = Vec::new();
            for (i, c) in w.chars().enumerate() {
                let piece = if i == 0 {
                    c.to_string()
                } else {
                    format!("{CONTINUATION}{c}")
                };
                units.push(intern(piece, &mut tokens, &mut lookup));
            }
            words.push(TrainerWord {
                units,
                freq: word_freq[w],
            });
        }
        if tokens.len() > max_size {
            return Err(Error::Corpus(format!(
                "max_size {max_size} is smaller than the character alphabet ({} pieces)",
                tokens.len()
            )));
        }

        while tokens.len() < max_size {
            let mut unit_freq: HashMap<u32, u64> = HashMap::new();
            let mut pair_freq: HashMap<(u32, u32), u64> = HashMap::new();
            let mut pair_rank: HashMap<(u32, u32), usize> = HashMap::new();
            let mut next_rank = 0usize;
            for w in &words {
                for &u in &w.units {
                    *unit_freq.entry(u).or_insert(0) += w.freq;
                }
                for pair in w.units.windows(2) {
                    let key = (pair[0], pair[1]);
                    *pair_freq.entry(key).or_insert(0) += w.freq;
                    pair_rank.entry(key).or_insert_with(|| {
                        let r = next_rank;
                        next_rank += 1;
                        r
                    });
                }
            }
            // Highest score wins; exact score ties go to the earliest-seen pair.
            let mut best: Option<((u32, u32), f64, usize)> = None;
            for (&key, &freq) in &pair_freq {
                if freq < min_freq {
                    continue;
                }
                let score =
                    freq as f64 / (unit_freq[&key.0] as f64 * unit_freq[&key.1] as f64);
                let rank = pair_rank[&key];
                let better = match best {
                    None => true,
                    Some((_, s, r)) => score > s || (score == s && rank < r),
                };
                if better {
                    best = Some((key, score, rank));
                }
            }
            let Some(((left, right), _, _)) = best else {
                break;
            };
            let merged = format!(
                "{}{}",
                tokens[left as usize],
                tokens[right as usize]
                    .strip_prefix(CONTINUATION)
                    .unwrap_or(&tokens[right as usize])
            );
            let new_id = intern(merged, &mut tokens, &mut lookup);
            for w in &mut words {
                let mut rewritten = Vec::with_capacity(w.units.len());
                let mut i = 0;
                while i < w.units.len() {
                    if i + 1 < w.units.len() && w.units[i] == left && w.units[i + 1] == right {
                        rewritten.push(new_id);
                        i += 2;
                    } else {
                        rewritten.push(w.units[i]);
                        i += 1;
                    }
                }
                w.units = rewritten;
            }
        }

        Ok(Vocabulary { tokens, lookup })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.lookup.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Greedy longest-match segmentation of one word (already lowercased).
    /// If coverage fails at any point the whole word maps to `[unk]`.
    pub fn tokenize_word(&self, word: &str) -> Vec<u32> {
        if word.is_empty() {
            return Vec::new();
        }
        let boundaries: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let mut ids = Vec::new();
        let mut pos = 0; // index into boundaries
        while pos + 1 < boundaries.len() {
            let start = boundaries[pos];
            let mut matched = None;
            for end_idx in (pos + 1..boundaries.len()).rev() {
                let piece = &word[start..boundaries[end_idx]];
                let candidate = if pos == 0 {
                    self.lookup.get(piece)
                } else {
                    self.lookup.get(&format!("{CONTINUATION}{piece}"))
                };
                if let Some(&id) = candidate {
                    matched = Some((id, end_idx));
                    break;
                }
            }
            match matched {
                Some((id, end_idx)) => {
                    ids.push(id);
                    pos = end_idx;
                }
                None => return vec![UNK_ID],
            }
        }
        ids
    }

    /// Lowercase, split on whitespace, strip punctuation, tokenize each word.
    pub fn encode_text(&self, text: &str) -> Vec<u32> {
        lower_words(text)
            .iter()
            .flat_map(|w| self.tokenize_word(w))
            .collect()
    }

    /// One subword per line; the line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        let mut tokens = Vec::new();
        for line in r.lines() {
            tokens.push(line?);
        }
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN)
            || tokens.get(1).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err(Error::Corpus(
                "vocabulary file must start with the pad and unknown tokens".into(),
            ));
        }
        let mut lookup = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if lookup.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Corpus(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, lookup })
    }
}
