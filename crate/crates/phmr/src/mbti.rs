//! MBTI type system: the four axes, the 16 types, per-character profiles,
//! and the label-vector views used by the multi-label metrics.
//!
//! Axis order is fixed everywhere as EI, SN, TF, JP (the usual 4-letter
//! convention). Every vectorized representation in the crate uses this
//! ordering, so a type never silently permutes its labels.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// One of the four MBTI axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    EI,
    SN,
    TF,
    JP,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::EI, Axis::SN, Axis::TF, Axis::JP];

    /// Position of this axis in the canonical 4-letter code.
    pub fn index(self) -> usize {
        match self {
            Axis::EI => 0,
            Axis::SN => 1,
            Axis::TF => 2,
            Axis::JP => 3,
        }
    }

    /// The two legal letters on this axis, first pole first.
    pub fn letters(self) -> [char; 2] {
        match self {
            Axis::EI => ['E', 'I'],
            Axis::SN => ['S', 'N'],
            Axis::TF => ['T', 'F'],
            Axis::JP => ['J', 'P'],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::EI => "E/I",
            Axis::SN => "S/N",
            Axis::TF => "T/F",
            Axis::JP => "J/P",
        }
    }
}

/// Which of the two opposing labels on an axis is taken.
///
/// `First` is E, S, T or J depending on the axis; `Second` is I, N, F or P.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pole {
    First,
    Second,
}

impl Pole {
    pub fn flip(self) -> Pole {
        match self {
            Pole::First => Pole::Second,
            Pole::Second => Pole::First,
        }
    }
}

/// One axis together with the pole taken on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dimension {
    pub axis: Axis,
    pub pole: Pole,
}

impl Dimension {
    /// The letter this dimension renders to (e.g. `E` or `I` on the EI axis).
    pub fn letter(self) -> char {
        let [first, second] = self.axis.letters();
        match self.pole {
            Pole::First => first,
            Pole::Second => second,
        }
    }
}

/// One of the 16 MBTI personality types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MbtiType {
    poles: [Pole; 4],
}

impl MbtiType {
    /// Build a type from its four poles in canonical axis order.
    pub fn from_poles(poles: [Pole; 4]) -> Self {
        MbtiType { poles }
    }

    /// Parse a 4-letter code, case-insensitively. Surrounding whitespace is
    /// ignored. A bad letter reports the axis and the two legal letters.
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim();
        let chars: Vec<char> = trimmed.chars().collect();
        if chars.len() != 4 {
            return Err(Error::MbtiLength(trimmed.to_string()));
        }
        let mut poles = [Pole::First; 4];
        for (i, axis) in Axis::ALL.iter().enumerate() {
            let c = chars[i].to_ascii_uppercase();
            let [first, second] = axis.letters();
            poles[i] = if c == first {
                Pole::First
            } else if c == second {
                Pole::Second
            } else {
                return Err(Error::MbtiParse {
                    position: i,
                    axis: axis.name(),
                    found: chars[i],
                    legal: [first, second],
                });
            };
        }
        Ok(MbtiType { poles })
    }

    /// Ordered decomposition into the four dimensions (EI, SN, TF, JP).
    pub fn decompose(self) -> [Dimension; 4] {
        let mut out = [Dimension {
            axis: Axis::EI,
            pole: Pole::First,
        }; 4];
        for (i, axis) in Axis::ALL.iter().enumerate() {
            out[i] = Dimension {
                axis: *axis,
                pole: self.poles[i],
            };
        }
        out
    }

    /// Inverse of [`decompose`](Self::decompose). The dimensions may arrive in
    /// any order but must cover each axis exactly once.
    pub fn compose(dims: [Dimension; 4]) -> Result<Self> {
        let mut poles = [None; 4];
        for d in dims {
            let slot = &mut poles[d.axis.index()];
            if slot.is_some() {
                return Err(Error::BadLabelVector(format!(
                    "axis {} given twice",
                    d.axis.name()
                )));
            }
            *slot = Some(d.pole);
        }
        Ok(MbtiType {
            poles: poles.map(|p| p.expect("all four axes covered")),
        })
    }

    pub fn pole(self, axis: Axis) -> Pole {
        self.poles[axis.index()]
    }

    pub fn poles(self) -> [Pole; 4] {
        self.poles
    }

    /// Indicator vector over the label set (E, I, S, N, T, F, J, P).
    /// Exactly one label per opposing pair is set.
    pub fn to_eight_labels(self) -> [bool; 8] {
        let mut v = [false; 8];
        for (i, pole) in self.poles.iter().enumerate() {
            match pole {
                Pole::First => v[2 * i] = true,
                Pole::Second => v[2 * i + 1] = true,
            }
        }
        v
    }

    /// Inverse of [`to_eight_labels`](Self::to_eight_labels). Total on vectors
    /// with exactly one label set per opposing pair.
    pub fn from_eight_labels(v: [bool; 8]) -> Result<Self> {
        let mut poles = [Pole::First; 4];
        for i in 0..4 {
            poles[i] = match (v[2 * i], v[2 * i + 1]) {
                (true, false) => Pole::First,
                (false, true) => Pole::Second,
                _ => {
                    return Err(Error::BadLabelVector(format!(
                        "pair {} must have exactly one label set",
                        Axis::ALL[i].name()
                    )))
                }
            };
        }
        Ok(MbtiType { poles })
    }

    /// All 16 types in lexicographic pole order.
    pub fn all() -> Vec<MbtiType> {
        let mut out = Vec::with_capacity(16);
        for bits in 0..16u8 {
            let poles = std::array::from_fn(|i| {
                if bits & (1 << (3 - i)) == 0 {
                    Pole::First
                } else {
                    Pole::Second
                }
            });
            out.push(MbtiType { poles });
        }
        out
    }
}

impl fmt::Display for MbtiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.decompose() {
            write!(f, "{}", d.letter())?;
        }
        Ok(())
    }
}

impl std::str::FromStr for MbtiType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MbtiType::parse(s)
    }
}

impl Serialize for MbtiType {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for MbtiType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        MbtiType::parse(&s).map_err(D::Error::custom)
    }
}

/// Deterministic token sequence naming a person and their type: the lowercase
/// tag followed by the whole 4-letter code as a single lowercase token.
pub fn personality_phrase(tag: &str, t: MbtiType) -> Vec<String> {
    vec![tag.to_lowercase(), t.to_string().to_lowercase()]
}

/// Alternative phrase granularity: the tag followed by one token per letter.
pub fn personality_phrase_letters(tag: &str, t: MbtiType) -> Vec<String> {
    let mut out = vec![tag.to_lowercase()];
    out.extend(
        t.decompose()
            .iter()
            .map(|d| d.letter().to_ascii_lowercase().to_string()),
    );
    out
}

/// Map from opaque person tags (e.g. "Person24") to annotated types.
///
/// Tags are unique by construction of the map. Serializes as a flat JSON
/// object `{"Person24": "ESFP", ...}` with uppercase codes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PersonalityProfile {
    entries: BTreeMap<String, MbtiType>,
}

impl PersonalityProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tag: impl Into<String>, t: MbtiType) {
        self.entries.insert(tag.into(), t);
    }

    pub fn get(&self, tag: &str) -> Option<MbtiType> {
        self.entries.get(tag).copied()
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.entries.contains_key(tag)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tags in deterministic (sorted) order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, MbtiType)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Restrict to the given tags, keeping order.
    pub fn restricted_to<'a>(&self, tags: impl IntoIterator<Item = &'a str>) -> Self {
        let mut out = PersonalityProfile::new();
        for tag in tags {
            if let Some(t) = self.get(tag) {
                out.insert(tag, t);
            }
        }
        out
    }
}

impl FromIterator<(String, MbtiType)> for PersonalityProfile {
    fn from_iter<I: IntoIterator<Item = (String, MbtiType)>>(iter: I) -> Self {
        PersonalityProfile {
            entries: iter.into_iter().collect(),
        }
    }
}

impl Serialize for PersonalityProfile {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PersonalityProfile {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        Ok(PersonalityProfile {
            entries: BTreeMap::deserialize(deserializer)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_esfp() {
        let t = MbtiType::parse("ESFP").unwrap();
        assert_eq!(
            t.poles(),
            [Pole::First, Pole::First, Pole::Second, Pole::Second]
        );
        assert_eq!(t.to_string(), "ESFP");
    }

    #[test]
    fn parse_is_case_insensitive() {
        let t = MbtiType::parse("intj").unwrap();
        assert_eq!(t.to_string(), "INTJ");
        assert_eq!(MbtiType::parse(" InTj ").unwrap(), t);
    }

    #[test]
    fn parse_reports_bad_axis() {
        let err = MbtiType::parse("ESXP").unwrap_err();
        match err {
            Error::MbtiParse {
                position,
                axis,
                found,
                legal,
            } => {
                assert_eq!(position, 2);
                assert_eq!(axis, "T/F");
                assert_eq!(found, 'X');
                assert_eq!(legal, ['T', 'F']);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_wrong_length() {
        assert!(matches!(
            MbtiType::parse("ESF").unwrap_err(),
            Error::MbtiLength(_)
        ));
        assert!(matches!(
            MbtiType::parse("ESFPP").unwrap_err(),
            Error::MbtiLength(_)
        ));
    }

    #[test]
    fn round_trip_all_sixteen() {
        let all = MbtiType::all();
        assert_eq!(all.len(), 16);
        let mut seen = std::collections::BTreeSet::new();
        for t in all {
            let code = t.to_string();
            assert!(seen.insert(code.clone()), "duplicate code {code}");
            assert_eq!(MbtiType::parse(&code).unwrap(), t);
            assert_eq!(MbtiType::parse(&code.to_lowercase()).unwrap(), t);
        }
    }

    #[test]
    fn decompose_compose_identity() {
        for t in MbtiType::all() {
            let dims = t.decompose();
            assert_eq!(dims[0].axis, Axis::EI);
            assert_eq!(dims[3].axis, Axis::JP);
            assert_eq!(MbtiType::compose(dims).unwrap(), t);
        }
    }

    #[test]
    fn decompose_example_positional() {
        let t = MbtiType::parse("ESFP").unwrap();
        let letters: String = t.decompose().iter().map(|d| d.letter()).collect();
        assert_eq!(letters, "ESFP");
        let t = MbtiType::parse("INTJ").unwrap();
        let letters: String = t.decompose().iter().map(|d| d.letter()).collect();
        assert_eq!(letters, "INTJ");
    }

    #[test]
    fn eight_labels_esfp() {
        let t = MbtiType::parse("ESFP").unwrap();
        let v = t.to_eight_labels();
        let as_u8: Vec<u8> = v.iter().map(|&b| b as u8).collect();
        assert_eq!(as_u8, vec![1, 0, 1, 0, 0, 1, 0, 1]);
    }

    #[test]
    fn eight_labels_intj() {
        let t = MbtiType::parse("INTJ").unwrap();
        let as_u8: Vec<u8> = t.to_eight_labels().iter().map(|&b| b as u8).collect();
        assert_eq!(as_u8, vec![0, 1, 0, 1, 1, 0, 1, 0]);
    }

    #[test]
    fn eight_labels_sum_is_four_and_invertible() {
        for t in MbtiType::all() {
            let v = t.to_eight_labels();
            assert_eq!(v.iter().filter(|&&b| b).count(), 4);
            assert_eq!(MbtiType::from_eight_labels(v).unwrap(), t);
        }
    }

    #[test]
    fn eight_labels_rejects_bad_pairs() {
        let mut v = MbtiType::parse("ESFP").unwrap().to_eight_labels();
        v[1] = true; // both E and I set
        assert!(MbtiType::from_eight_labels(v).is_err());
    }

    #[test]
    fn phrase_is_deterministic_and_distinct_by_tag() {
        let t = MbtiType::parse("ESFP").unwrap();
        let a = personality_phrase("Person24", t);
        assert_eq!(a, vec!["person24".to_string(), "esfp".to_string()]);
        assert_eq!(a, personality_phrase("Person24", t));
        let b = personality_phrase("Person7", t);
        assert_ne!(a, b);
    }

    #[test]
    fn phrase_letter_granularity() {
        let t = MbtiType::parse("INTJ").unwrap();
        assert_eq!(
            personality_phrase_letters("Person3", t),
            vec!["person3", "i", "n", "t", "j"]
        );
    }

    #[test]
    fn profile_serializes_flat_uppercase() {
        let mut p = PersonalityProfile::new();
        p.insert("Person24", MbtiType::parse("esfp").unwrap());
        p.insert("Person7", MbtiType::parse("INTJ").unwrap());
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"Person24":"ESFP","Person7":"INTJ"}"#);
        let back: PersonalityProfile = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
