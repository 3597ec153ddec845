use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
const SPECIALS: usize = 3;

/// Character vocabulary: `PAD`, `SOS`, `EOS`, then the sorted distinct
/// characters of a corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    chars: Vec<char>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    chars: String,
}

impl TryFrom<VocabFile> for Vocabulary {
    type Error = Error;

    fn try_from(f: VocabFile) -> Result<Self> {
        Self::from_chars(f.chars.chars().collect())
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile {
            chars: v.chars.into_iter().collect(),
        }
    }
}

impl Vocabulary {
    /// Builds the vocabulary of every question and answer in `samples`.
    pub fn build(samples: &[Sample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Vocabulary(
                "cannot build from an empty corpus".into(),
            ));
        }
        Ok(Self::from_texts(
            samples
                .iter()
                .flat_map(|s| [s.question.as_str(), s.answer.as_str()]),
        ))
    }

    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut chars: Vec<char> = texts.into_iter().flat_map(str::chars).collect();
        chars.sort_unstable();
        chars.dedup();
        Self { chars }
    }

    /// Restores a vocabulary from its character list, which must be sorted
    /// and distinct.
    pub fn from_chars(chars: Vec<char>) -> Result<Self> {
        if chars.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Vocabulary(
                "characters must be sorted and distinct".into(),
            ));
        }
        Ok(Self { chars })
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Total number of symbols, specials included.
    pub fn len(&self) -> usize {
        self.chars.len() + SPECIALS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> Option<usize> {
        self.chars.binary_search(&c).ok().map(|i| i + SPECIALS)
    }

    /// Printable form of a symbol id.
    pub fn symbol(&self, id: usize) -> Option<String> {
        match id {
            PAD => Some("<pad>".into()),
            SOS => Some("<sos>".into()),
            EOS => Some("<eos>".into()),
            _ => self.chars.get(id - SPECIALS).map(|c| c.to_string()),
        }
    }

    /// Character ids of `text` followed by `EOS`.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        let mut ids = self.encode_chars(text)?;
        ids.push(EOS);
        Ok(ids)
    }

    /// Character ids of `text` without any special symbol.
    pub fn encode_chars(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                self.id(c)
                    .ok_or_else(|| Error::Vocabulary(format!("unknown character {c:?}")))
            })
            .collect()
    }

    /// Text up to the first `EOS`, skipping `PAD` and `SOS`.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            match id {
                EOS => break,
                PAD | SOS => {}
                _ => out.push(
                    *self
                        .chars
                        .get(id - SPECIALS)
                        .ok_or_else(|| Error::Vocabulary(format!("unknown id {id}")))?,
                ),
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(texts: &[&str]) -> Vocabulary {
        Vocabulary::from_texts(texts.iter().copied())
    }

    #[test]
    fn specials_then_sorted_chars() {
        let v = vocab(&["ab", "ba"]);
        assert_eq!(v.len(), 5);
        assert_eq!(v.id('a'), Some(3));
        assert_eq!(v.id('b'), Some(4));
        assert_eq!(v, vocab(&["ba", "ab"]));
    }

    #[test]
    fn empty_string_is_just_eos() {
        let v = vocab(&["5"]);
        assert_eq!(v.encode("").unwrap(), vec![EOS]);
        assert_eq!(v.decode(&[EOS]).unwrap(), "");
    }

    #[test]
    fn decode_stops_at_eos() {
        let v = vocab(&["59"]);
        let five = v.id('5').unwrap();
        let nine = v.id('9').unwrap();
        assert_eq!(v.decode(&[SOS, five, EOS, nine]).unwrap(), "5");
    }

    #[test]
    fn unknown_character_is_named() {
        let err = vocab(&["ab"]).encode("abc").unwrap_err();
        assert!(err.to_string().contains("'c'"), "{err}");
    }

    #[test]
    fn serde_round_trip() {
        let v = vocab(&["Calculate 1+2."]);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocabulary>(&json).unwrap(), v);
        assert!(serde_json::from_str::<Vocabulary>(r#"{"chars":"ba"}"#).is_err());
    }
}
