//! WordPiece tokenization and fixed-length windowing.
//!
//! Documents are tokenized word by word (the OCR words are already the
//! pre-tokenization unit), then packed into windows of at most `max_len`
//! tokens including `[CLS]` and `[SEP]`. A word is never split across
//! windows.

mod vocab;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::doc::{BBox, Document};
use crate::error::{Error, Result};

pub use vocab::{SpecialIds, Vocab, CLS, DEFAULT_VOCAB_SIZE, LAYOUT, MASK, PAD, SEP, SPECIAL_TOKENS, UNK};

pub const CONTINUATION_PREFIX: &str = "##";

/// Default sequence length, special tokens included.
pub const DEFAULT_MAX_LEN: usize = 512;

/// Words longer than this many characters map straight to `[UNK]`.
const MAX_CHARS_PER_WORD: usize = 100;

/// Uncased normalization: lowercase, NFD, drop combining marks.
pub fn normalize(text: &str) -> String {
    text.to_lowercase().nfd().filter(|c| !is_combining_mark(*c)).collect()
}

/// One WordPiece of a word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub id: u32,
    pub text: String,
}

/// Greedy longest-match-first segmentation of a single word.
///
/// Falls back to a single `[UNK]` piece when any part of the word has no
/// match.
pub fn wordpiece_tokenize(word: &str, vocab: &Vocab) -> Vec<Piece> {
    let unk = || {
        vec![Piece {
            id: vocab.special().unk,
            text: UNK.to_string(),
        }]
    };
    let norm = normalize(word);
    let chars: Vec<char> = norm.chars().collect();
    if chars.is_empty() || chars.len() > MAX_CHARS_PER_WORD {
        return unk();
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < chars.len() {
        let mut end = chars.len();
        let mut found = None;
        while start < end {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.extend(&chars[start..end]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some(Piece {
                    id,
                    text: candidate.clone(),
                });
                break;
            }
            end -= 1;
        }
        match found {
            Some(p) => pieces.push(p),
            None => return unk(),
        }
        start = end;
    }
    pieces
}

/// Joins pieces back into the normalized word.
pub fn detokenize(pieces: &[Piece]) -> String {
    pieces
        .iter()
        .map(|p| p.text.strip_prefix(CONTINUATION_PREFIX).unwrap_or(&p.text))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub id: u32,
    pub text: String,
    /// Source word; absent for special tokens.
    pub word_read_index: Option<usize>,
    pub is_word_start: bool,
    pub bbox: BBox,
}

impl Token {
    fn special(id: u32, text: &str) -> Self {
        Token {
            id,
            text: text.to_string(),
            word_read_index: None,
            is_word_start: false,
            bbox: BBox::ZERO,
        }
    }

    pub fn is_content(&self) -> bool {
        self.word_read_index.is_some()
    }
}

/// Model-ready token window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
    pub doc_id: String,
    /// Read index of the first content word (0 for an empty window).
    pub window_offset: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn ids(&self) -> Vec<u32> {
        self.tokens.iter().map(|t| t.id).collect()
    }

    pub fn boxes(&self) -> Vec<BBox> {
        self.tokens.iter().map(|t| t.bbox).collect()
    }

    pub fn content_tokens(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| t.is_content())
    }

    /// Range of word read indices covered, if any content is present.
    pub fn word_range(&self) -> Option<(usize, usize)> {
        let mut words = self.tokens.iter().filter_map(|t| t.word_read_index);
        let first = words.next()?;
        let last = words.next_back().unwrap_or(first);
        Some((first, last))
    }

    pub fn validate(&self, vocab: &Vocab, max_len: usize) -> Result<()> {
        let sp = vocab.special();
        if self.tokens.len() > max_len {
            return Err(Error::Validation(format!(
                "sequence of {} tokens exceeds {max_len}",
                self.tokens.len()
            )));
        }
        if self.tokens.first().map(|t| t.id) != Some(sp.cls) {
            return Err(Error::Validation("sequence must start with [CLS]".into()));
        }
        let last = self.tokens.iter().rposition(|t| t.id != sp.pad);
        if last.map(|i| self.tokens[i].id) != Some(sp.sep) {
            return Err(Error::Validation("last non-pad token must be [SEP]".into()));
        }
        Ok(())
    }
}

/// A document with every word already split into pieces.
#[derive(Debug, Clone)]
pub struct TokenizedDocument {
    pub doc_id: String,
    /// Tokens of each word, indexed by read index.
    pub words: Vec<Vec<Token>>,
}

impl TokenizedDocument {
    pub fn new(doc: &Document, vocab: &Vocab) -> Self {
        let words = doc
            .words
            .iter()
            .map(|w| {
                wordpiece_tokenize(&w.text, vocab)
                    .into_iter()
                    .enumerate()
                    .map(|(i, p)| Token {
                        id: p.id,
                        text: p.text,
                        word_read_index: Some(w.read_index),
                        is_word_start: i == 0,
                        bbox: w.bbox,
                    })
                    .collect()
            })
            .collect();
        TokenizedDocument {
            doc_id: doc.id.clone(),
            words,
        }
    }

    pub fn token_count(&self) -> usize {
        self.words.iter().map(Vec::len).sum()
    }

    fn check_word_lengths(&self, capacity: usize) -> Result<()> {
        match self.words.iter().position(|w| w.len() > capacity) {
            Some(read_index) => Err(Error::WordTooLong {
                doc_id: self.doc_id.clone(),
                read_index,
                pieces: self.words[read_index].len(),
                capacity,
            }),
            None => Ok(()),
        }
    }

    /// Words `start..end` wrapped in `[CLS]`/`[SEP]` and padded to `max_len`.
    fn sequence(&self, start: usize, end: usize, vocab: &Vocab, max_len: usize) -> TokenSequence {
        let sp = vocab.special();
        let mut tokens = Vec::with_capacity(max_len);
        tokens.push(Token::special(sp.cls, CLS));
        for w in &self.words[start..end] {
            tokens.extend(w.iter().cloned());
        }
        tokens.push(Token::special(sp.sep, SEP));
        tokens.resize(max_len.max(tokens.len()), Token::special(sp.pad, PAD));
        TokenSequence {
            tokens,
            doc_id: self.doc_id.clone(),
            window_offset: if start < end { start } else { 0 },
        }
    }

    /// End (exclusive) of the greedy run of words starting at `start`.
    fn fill_from(&self, start: usize, capacity: usize) -> usize {
        let mut used = 0;
        let mut end = start;
        while end < self.words.len() && used + self.words[end].len() <= capacity {
            used += self.words[end].len();
            end += 1;
        }
        end
    }

    pub fn windows(&self, vocab: &Vocab, max_len: usize) -> Result<Vec<TokenSequence>> {
        let capacity = content_capacity(max_len)?;
        self.check_word_lengths(capacity)?;
        if self.words.is_empty() {
            return Ok(vec![self.sequence(0, 0, vocab, max_len)]);
        }
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.words.len() {
            let end = self.fill_from(start, capacity);
            out.push(self.sequence(start, end, vocab, max_len));
            start = end;
        }
        Ok(out)
    }

    pub fn sample_span(&self, vocab: &Vocab, max_len: usize, rng: &mut impl Rng) -> Result<TokenSequence> {
        let capacity = content_capacity(max_len)?;
        self.check_word_lengths(capacity)?;
        if self.token_count() <= capacity {
            return Ok(self.sequence(0, self.words.len(), vocab, max_len));
        }
        // last start whose greedy span still reaches the end of the document
        let mut last_start = self.words.len();
        let mut used = 0;
        while last_start > 0 && used + self.words[last_start - 1].len() <= capacity {
            used += self.words[last_start - 1].len();
            last_start -= 1;
        }
        let start = rng.gen_range(0..=last_start);
        let end = self.fill_from(start, capacity);
        Ok(self.sequence(start, end, vocab, max_len))
    }
}

fn content_capacity(max_len: usize) -> Result<usize> {
    if max_len < 3 {
        return Err(Error::Validation(format!("max_len must be at least 3, got {max_len}")));
    }
    Ok(max_len - 2)
}

/// Splits a document into consecutive non-overlapping windows.
pub fn window_document(doc: &Document, vocab: &Vocab, max_len: usize) -> Result<Vec<TokenSequence>> {
    TokenizedDocument::new(doc, vocab).windows(vocab, max_len)
}

/// Draws a contiguous word span of maximal size for pre-training.
///
/// Documents that fit are returned whole and padded; otherwise the span start
/// is uniform over the starts whose greedy span is not cut short by the end of
/// the document.
pub fn sample_pretrain_span(doc: &Document, vocab: &Vocab, max_len: usize, rng_seed: u64) -> Result<TokenSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    TokenizedDocument::new(doc, vocab).sample_span(vocab, max_len, &mut rng)
}
