use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::doc::Document;
use crate::error::{Error, Result};

use super::{normalize, CONTINUATION_PREFIX};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
pub const LAYOUT: &str = "[LAYOUT]";

pub const SPECIAL_TOKENS: [&str; 6] = [PAD, UNK, CLS, SEP, MASK, LAYOUT];

/// Default vocabulary size of the reference uncased tokenizer.
pub const DEFAULT_VOCAB_SIZE: usize = 30_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub pad: u32,
    pub unk: u32,
    pub cls: u32,
    pub sep: u32,
    pub mask: u32,
    pub layout: u32,
}

impl SpecialIds {
    pub fn contains(&self, id: u32) -> bool {
        [self.pad, self.unk, self.cls, self.sep, self.mask, self.layout].contains(&id)
    }
}

/// WordPiece vocabulary; a token's id is its line number in the vocab file.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    special: SpecialIds,
}

impl Vocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            // first occurrence wins, as in the reference loaders
            ids.entry(t.clone()).or_insert(i as u32);
        }
        let lookup = |name: &str| {
            ids.get(name)
                .copied()
                .ok_or_else(|| Error::Validation(format!("vocabulary lacks special token {name}")))
        };
        let special = SpecialIds {
            pad: lookup(PAD)?,
            unk: lookup(UNK)?,
            cls: lookup(CLS)?,
            sep: lookup(SEP)?,
            mask: lookup(MASK)?,
            layout: lookup(LAYOUT)?,
        };
        Ok(Vocab { tokens, ids, special })
    }

    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in BufReader::new(reader).lines() {
            let line = line?;
            tokens.push(line.trim_end_matches('\r').to_string());
        }
        Self::from_tokens(tokens)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(File::open(path)?)
    }

    pub fn write_to(&self, writer: impl Write) -> Result<()> {
        let mut w = BufWriter::new(writer);
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(File::create(path)?)
    }

    /// Builds a small vocabulary from a corpus.
    ///
    /// Layout: the six special tokens, every normalized character both as a
    /// word start and as a `##` continuation, then the most frequent
    /// digit-free words until `max_size` is reached. Words with digits are
    /// left to character pieces so numbers always decompose digit by digit.
    pub fn build_from_corpus(docs: &[Document], max_size: usize) -> Result<Self> {
        let mut chars = BTreeSet::new();
        let mut freq: HashMap<String, usize> = HashMap::new();
        for w in docs.iter().flat_map(|d| d.words.iter()) {
            let norm = normalize(&w.text);
            chars.extend(norm.chars());
            if !norm.is_empty() && !norm.chars().any(|c| c.is_ascii_digit()) {
                *freq.entry(norm).or_insert(0) += 1;
            }
        }
        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        for c in &chars {
            tokens.push(c.to_string());
        }
        for c in &chars {
            tokens.push(format!("{CONTINUATION_PREFIX}{c}"));
        }
        if tokens.len() > max_size {
            return Err(Error::Validation(format!(
                "corpus needs {} base tokens, above the requested size {max_size}",
                tokens.len()
            )));
        }
        let mut words: Vec<(String, usize)> = freq.into_iter().filter(|(w, _)| w.chars().count() > 1).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let room = max_size - tokens.len();
        tokens.extend(words.into_iter().take(room).map(|(w, _)| w));
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn special(&self) -> SpecialIds {
        self.special
    }

    /// Ids that are not special tokens, in ascending order.
    pub fn regular_ids(&self) -> Vec<u32> {
        (0..self.tokens.len() as u32).filter(|id| !self.special.contains(*id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_special_is_rejected() {
        let toks = vec![PAD, UNK, CLS, SEP, MASK].into_iter().map(String::from).collect();
        assert!(Vocab::from_tokens(toks).is_err());
    }

    #[test]
    fn file_layout_round_trips() {
        let mut toks: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        toks.extend(["un", "##aff", "##able"].map(String::from));
        let v = Vocab::from_tokens(toks).unwrap();
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().nth(6), Some("un"));
        let back = Vocab::from_reader(buf.as_slice()).unwrap();
        assert_eq!(back.id("##able"), Some(8));
        assert_eq!(back.special().layout, 5);
    }
}
