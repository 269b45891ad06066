//! BIESO tag scheme and span decoders.
//!
//! Two decoders turn per-token tag confidences into one span per field:
//!
//! * [`decode_adhoc`] follows the arg-max tag of every token through a small
//!   automaton (`B` opens, `I` continues, `E` closes, `S` opens and closes);
//! * [`decode_confopt`] picks the span matching `(BI*E)|S` whose summed
//!   confidence is maximal, with an O(N) dynamic program.
//!
//! Scores are plain sums of softmax outputs, not log-probabilities.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::doc::{FieldAnnotation, FieldName};
use crate::error::{Error, Result};
use crate::tokenizer::TokenSequence;

/// Id of the shared outside tag.
pub const OUTSIDE: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Begin,
    Inside,
    End,
    Single,
}

impl Tag {
    pub const ALL: [Tag; 4] = [Tag::Begin, Tag::Inside, Tag::End, Tag::Single];

    fn offset(self) -> u32 {
        match self {
            Tag::Begin => 1,
            Tag::Inside => 2,
            Tag::End => 3,
            Tag::Single => 4,
        }
    }
}

/// Fields to extract; field `k` owns tags `4k+1..=4k+4` (B, I, E, S), O is 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagScheme {
    fields: Vec<FieldName>,
}

impl TagScheme {
    pub fn new(fields: Vec<FieldName>) -> Result<Self> {
        let mut sorted = fields.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != fields.len() || fields.is_empty() {
            return Err(Error::Validation("tag scheme needs at least one field and no duplicates".into()));
        }
        Ok(TagScheme { fields })
    }

    /// Parses a comma-separated field list.
    pub fn parse(list: &str) -> Result<Self> {
        Self::new(
            list.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(FieldName::from)
                .collect(),
        )
    }

    pub fn fields(&self) -> &[FieldName] {
        &self.fields
    }

    pub fn num_tags(&self) -> usize {
        4 * self.fields.len() + 1
    }

    pub fn field_index(&self, field: &FieldName) -> Option<usize> {
        self.fields.iter().position(|f| f == field)
    }

    pub fn tag_id(&self, field_index: usize, tag: Tag) -> u32 {
        4 * field_index as u32 + tag.offset()
    }

    /// Inverse of [`TagScheme::tag_id`]; `None` for O.
    pub fn split_tag(&self, id: u32) -> Option<(usize, Tag)> {
        if id == OUTSIDE || id as usize >= self.num_tags() {
            return None;
        }
        let k = (id - 1) / 4;
        let tag = Tag::ALL[((id - 1) % 4) as usize];
        Some((k as usize, tag))
    }
}

/// Confidences of one field's B, I, E, S tags for every token.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMatrix {
    pub field: FieldName,
    /// One `[B, I, E, S]` row per token.
    pub rows: Vec<[f64; 4]>,
}

impl ConfidenceMatrix {
    pub fn new(field: FieldName, rows: Vec<[f64; 4]>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Validation("confidence matrix needs at least one token".into()));
        }
        if rows.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Validation("confidences must lie in [0, 1]".into()));
        }
        Ok(ConfidenceMatrix { field, rows })
    }

    /// Extracts a field's columns from full tag distributions.
    pub fn from_tag_probs(probs: &[Vec<f64>], scheme: &TagScheme, field_index: usize) -> Result<Self> {
        let rows = probs
            .iter()
            .map(|row| Tag::ALL.map(|t| row[scheme.tag_id(field_index, t) as usize]))
            .collect();
        Self::new(scheme.fields[field_index].clone(), rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn conf(&self, i: usize, tag: Tag) -> f64 {
        self.rows[i][tag.offset() as usize - 1]
    }
}

/// A decoded entity over token indices `start..=end`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanPrediction {
    pub field: FieldName,
    pub start: usize,
    pub end: usize,
    /// Sum of the confidences of the tags making up the span.
    pub score: f64,
}

impl SpanPrediction {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mean_score(&self) -> f64 {
        self.score / self.len() as f64
    }

    /// Tag implied at each covered token: `S` alone, or `B I* E`.
    pub fn tags(&self) -> Vec<Tag> {
        if self.start == self.end {
            return vec![Tag::Single];
        }
        let mut tags = vec![Tag::Inside; self.len()];
        tags[0] = Tag::Begin;
        *tags.last_mut().expect("len >= 2") = Tag::End;
        tags
    }
}

/// BIESO targets for one annotation over a window.
///
/// When the annotated words are not all inside the window, every token is O.
pub fn tags_from_annotation(seq: &TokenSequence, ann: &FieldAnnotation, scheme: &TagScheme) -> Result<Vec<u32>> {
    let k = scheme
        .field_index(&ann.field)
        .ok_or_else(|| Error::Validation(format!("field {} is not in the tag scheme", ann.field)))?;
    let mut tags = vec![OUTSIDE; seq.len()];
    let Some(span) = ann.word_span else {
        return Ok(tags);
    };
    let inside = match seq.word_range() {
        Some((first, last)) => first <= span.start && span.end <= last,
        None => false,
    };
    if !inside {
        return Ok(tags);
    }
    let positions: Vec<usize> = seq
        .tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| t.word_read_index.is_some_and(|w| span.contains(w)))
        .map(|(i, _)| i)
        .collect();
    match positions.as_slice() {
        [] => {}
        [only] => tags[*only] = scheme.tag_id(k, Tag::Single),
        [first, .., last] => {
            for &p in &positions {
                tags[p] = scheme.tag_id(k, Tag::Inside);
            }
            tags[*first] = scheme.tag_id(k, Tag::Begin);
            tags[*last] = scheme.tag_id(k, Tag::End);
        }
    }
    Ok(tags)
}

/// Targets for all annotated fields of a document over one window.
pub fn window_targets(seq: &TokenSequence, annotations: &[FieldAnnotation], scheme: &TagScheme) -> Result<Vec<u32>> {
    let mut out = vec![OUTSIDE; seq.len()];
    for ann in annotations.iter().filter(|a| scheme.field_index(&a.field).is_some()) {
        for (slot, tag) in out.iter_mut().zip(tags_from_annotation(seq, ann, scheme)?) {
            if tag != OUTSIDE {
                *slot = tag;
            }
        }
    }
    Ok(out)
}

fn argmax(row: &[f64]) -> (usize, f64) {
    let mut best = (0, row[0]);
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Arg-max decoding followed by the BIESO automaton, one span per field.
///
/// Tokens whose arg-max is O (or another field's tag) close any open entity.
/// `I`/`E` without an open entity open one. Among several entities of a field
/// the one with the highest mean token confidence wins.
pub fn decode_adhoc(conf_all: &[Vec<f64>], scheme: &TagScheme) -> Result<Vec<SpanPrediction>> {
    if let Some(bad) = conf_all.iter().find(|r| r.len() != scheme.num_tags()) {
        return Err(Error::Validation(format!(
            "confidence row has {} entries, scheme needs {}",
            bad.len(),
            scheme.num_tags()
        )));
    }
    let best: Vec<(Option<(usize, Tag)>, f64)> = conf_all
        .iter()
        .map(|row| {
            let (id, conf) = argmax(row);
            (scheme.split_tag(id as u32), conf)
        })
        .collect();
    let score = |s: usize, e: usize| -> f64 { best[s..=e].iter().fold(0.0, |acc, (_, c)| acc + c) };

    let mut out = Vec::new();
    for (k, field) in scheme.fields().iter().enumerate() {
        let mut entities: Vec<(usize, usize)> = Vec::new();
        let mut open: Option<(usize, usize)> = None;
        for (i, (tag, _)) in best.iter().enumerate() {
            let tag = tag.filter(|(f, _)| *f == k).map(|(_, t)| t);
            match tag {
                None => entities.extend(open.take()),
                Some(Tag::Begin) => {
                    entities.extend(open.take());
                    open = Some((i, i));
                }
                Some(Tag::Inside) => {
                    open = Some(open.map_or((i, i), |(s, _)| (s, i)));
                }
                Some(Tag::End) => {
                    let (s, _) = open.take().unwrap_or((i, i));
                    entities.push((s, i));
                }
                Some(Tag::Single) => {
                    entities.extend(open.take());
                    entities.push((i, i));
                }
            }
        }
        entities.extend(open.take());
        let mut chosen: Option<SpanPrediction> = None;
        for (s, e) in entities {
            let cand = SpanPrediction {
                field: field.clone(),
                start: s,
                end: e,
                score: score(s, e),
            };
            if chosen.as_ref().is_none_or(|c| cand.mean_score() > c.mean_score()) {
                chosen = Some(cand);
            }
        }
        out.extend(chosen);
    }
    Ok(out)
}

/// Best span matching `(BI*E)|S` by total confidence.
///
/// Ties prefer the smallest end index, then the smallest start index.
pub fn decode_confopt(cm: &ConfidenceMatrix) -> SpanPrediction {
    let n = cm.len();
    // best B-or-I prefix ending at i-1: (score, start)
    let mut open_prev: Option<(f64, usize)> = None;
    let mut best: Option<(f64, usize, usize)> = None;
    let mut consider = |score: f64, start: usize, end: usize| {
        if best.is_none_or(|(b, _, _)| score > b) {
            best = Some((score, start, end));
        }
    };
    for i in 0..n {
        let b = cm.conf(i, Tag::Begin);
        let mut inside_here = None;
        if let Some((prev, start)) = open_prev {
            consider(prev + cm.conf(i, Tag::End), start, i);
            inside_here = Some((prev + cm.conf(i, Tag::Inside), start));
        }
        consider(cm.conf(i, Tag::Single), i, i);
        // P_I wins ties against P_B: its start is smaller
        open_prev = match inside_here {
            Some((pi, s)) if pi >= b => Some((pi, s)),
            _ => Some((b, i)),
        };
    }
    let (score, start, end) = best.expect("at least one token");
    SpanPrediction {
        field: cm.field.clone(),
        start,
        end,
        score,
    }
}

/// [`decode_confopt`] with an optional minimum score below which nothing is predicted.
pub fn decode_confopt_thresholded(cm: &ConfidenceMatrix, threshold: Option<f64>) -> Option<SpanPrediction> {
    let span = decode_confopt(cm);
    match threshold {
        Some(t) if span.score < t => None,
        _ => Some(span),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeMethod {
    AdHoc,
    #[default]
    ConfOpt,
}

impl FromStr for DecodeMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adhoc" | "ad-hoc" => Ok(DecodeMethod::AdHoc),
            "confopt" => Ok(DecodeMethod::ConfOpt),
            other => Err(Error::Validation(format!("unknown decoding method {other:?}"))),
        }
    }
}

/// Model output for one window, detached from the tokenizer types.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowConfidences {
    /// Source word of each token, `None` for special tokens.
    pub word_index: Vec<Option<usize>>,
    /// Full tag distribution of each token.
    pub probs: Vec<Vec<f64>>,
}

impl WindowConfidences {
    pub fn new(seq: &TokenSequence, probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.len() != seq.len() {
            return Err(Error::Validation(format!(
                "{} confidence rows for a window of {} tokens",
                probs.len(),
                seq.len()
            )));
        }
        Ok(WindowConfidences {
            word_index: seq.tokens.iter().map(|t| t.word_read_index).collect(),
            probs,
        })
    }
}

/// Best span of every field across a document's windows, as word strings.
///
/// Only content tokens are decoded. A span is materialized as the
/// single-space join of every word it touches, so partial word pieces expand
/// to whole words.
pub fn decode_document(
    windows: &[WindowConfidences],
    words: &[String],
    scheme: &TagScheme,
    method: DecodeMethod,
    threshold: Option<f64>,
) -> Result<BTreeMap<FieldName, String>> {
    let mut best: BTreeMap<FieldName, (f64, String)> = BTreeMap::new();
    for w in windows {
        let content: Vec<usize> = (0..w.word_index.len()).filter(|&i| w.word_index[i].is_some()).collect();
        if content.is_empty() {
            continue;
        }
        let rows: Vec<Vec<f64>> = content.iter().map(|&i| w.probs[i].clone()).collect();
        let spans: Vec<(f64, SpanPrediction)> = match method {
            DecodeMethod::AdHoc => decode_adhoc(&rows, scheme)?.into_iter().map(|s| (s.mean_score(), s)).collect(),
            DecodeMethod::ConfOpt => {
                let mut v = Vec::new();
                for k in 0..scheme.fields().len() {
                    let cm = ConfidenceMatrix::from_tag_probs(&rows, scheme, k)?;
                    if let Some(s) = decode_confopt_thresholded(&cm, threshold) {
                        v.push((s.score, s));
                    }
                }
                v
            }
        };
        for (key, span) in spans {
            let idx: Vec<usize> = content[span.start..=span.end].iter().filter_map(|&i| w.word_index[i]).collect();
            let (lo, hi) = (idx.iter().min().copied(), idx.iter().max().copied());
            let (Some(lo), Some(hi)) = (lo, hi) else { continue };
            if hi >= words.len() {
                return Err(Error::Validation(format!("word index {hi} out of range")));
            }
            let text = words[lo..=hi].join(" ");
            if best.get(&span.field).is_none_or(|(b, _)| key > *b) {
                best.insert(span.field.clone(), (key, text));
            }
        }
    }
    Ok(best.into_iter().map(|(f, (_, s))| (f, s)).collect())
}
