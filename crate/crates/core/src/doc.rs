//! Document and annotation data model.
//!
//! Coordinates are integers normalized to `[0, 1000]` against the page size.
//! Everything here is a plain value type; documents are cheap to clone and
//! safe to share between threads.

use std::collections::HashMap;
use std::fmt;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest normalized coordinate.
pub const COORD_MAX: u16 = 1000;

/// Axis-aligned box in normalized page coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct BBox {
    pub x1: u16,
    pub y1: u16,
    pub x2: u16,
    pub y2: u16,
}

impl BBox {
    /// Box substituted for masked spatial inputs.
    pub const MASKED: BBox = BBox {
        x1: COORD_MAX,
        y1: COORD_MAX,
        x2: COORD_MAX,
        y2: COORD_MAX,
    };

    /// Box given to special tokens.
    pub const ZERO: BBox = BBox {
        x1: 0,
        y1: 0,
        x2: 0,
        y2: 0,
    };

    pub fn new(x1: u16, y1: u16, x2: u16, y2: u16) -> Result<Self> {
        let b = BBox { x1, y1, x2, y2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.x1 <= self.x2 && self.y1 <= self.y2 && self.x2 <= COORD_MAX && self.y2 <= COORD_MAX;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid box {self}")))
        }
    }

    /// Normalizes a pixel box against page dimensions, rounding half up.
    pub fn from_pixels(x1: f64, y1: f64, x2: f64, y2: f64, width: f64, height: f64) -> Self {
        let norm = |v: f64, extent: f64| -> u16 {
            if extent <= 0.0 {
                return 0;
            }
            let scaled = (v / extent * f64::from(COORD_MAX) + 0.5).floor();
            scaled.clamp(0.0, f64::from(COORD_MAX)) as u16
        };
        let (ax, bx) = (norm(x1.min(x2), width), norm(x1.max(x2), width));
        let (ay, by) = (norm(y1.min(y2), height), norm(y1.max(y2), height));
        BBox {
            x1: ax,
            y1: ay,
            x2: bx,
            y2: by,
        }
    }

    pub fn as_array(&self) -> [u16; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Twice the midpoint, so containment tests stay in integers.
    pub fn doubled_midpoint(&self) -> (u32, u32) {
        (u32::from(self.x1) + u32::from(self.x2), u32::from(self.y1) + u32::from(self.y2))
    }

    /// Whether `other`'s midpoint lies inside this box (borders included).
    pub fn contains_midpoint_of(&self, other: &BBox) -> bool {
        let (mx2, my2) = other.doubled_midpoint();
        2 * u32::from(self.x1) <= mx2 && mx2 <= 2 * u32::from(self.x2) && 2 * u32::from(self.y1) <= my2 && my2 <= 2 * u32::from(self.y2)
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.x1, self.y1, self.x2, self.y2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub text: String,
    pub bbox: BBox,
    pub page: u32,
    /// Position in OCR read order, contiguous from 0 within a document.
    pub read_index: usize,
}

/// Name of an extracted field, e.g. `total` or `po_number`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldName(pub String);

impl FieldName {
    pub fn new(name: impl Into<String>) -> Self {
        FieldName(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FieldName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FieldName {
    fn from(s: &str) -> Self {
        FieldName(s.to_string())
    }
}

/// Inclusive range of word read indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WordSpan {
    pub start: usize,
    pub end: usize,
}

impl WordSpan {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(Error::Validation(format!("word span [{start}, {end}] is reversed")));
        }
        Ok(WordSpan { start, end })
    }

    pub fn range(&self) -> RangeInclusive<usize> {
        self.start..=self.end
    }

    pub fn contains(&self, read_index: usize) -> bool {
        self.start <= read_index && read_index <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldAnnotation {
    pub field: FieldName,
    pub value: String,
    /// Absent when the value could not be located in the word stream.
    pub word_span: Option<WordSpan>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub words: Vec<Word>,
    pub annotations: Vec<FieldAnnotation>,
    pub issuer: Option<String>,
    /// Page count, when the source format records it.
    pub pages: Option<u32>,
}

impl Document {
    /// Builds a document from words in read order, assigning read indices.
    pub fn from_words(id: impl Into<String>, words: impl IntoIterator<Item = (String, BBox, u32)>) -> Self {
        let words = words
            .into_iter()
            .enumerate()
            .map(|(read_index, (text, bbox, page))| Word {
                text,
                bbox,
                page,
                read_index,
            })
            .collect();
        Document {
            id: id.into(),
            words,
            annotations: Vec::new(),
            issuer: None,
            pages: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, w) in self.words.iter().enumerate() {
            if w.read_index != i {
                return Err(Error::Validation(format!(
                    "document {}: word {} has read_index {}",
                    self.id, i, w.read_index
                )));
            }
            if w.text.is_empty() {
                return Err(Error::Validation(format!("document {}: word {} has empty text", self.id, i)));
            }
            w.bbox.validate()?;
        }
        let mut seen = std::collections::HashSet::new();
        for ann in &self.annotations {
            if !seen.insert(&ann.field) {
                return Err(Error::Validation(format!(
                    "document {}: field {} annotated twice",
                    self.id, ann.field
                )));
            }
            if let Some(span) = ann.word_span {
                if span.end >= self.words.len() {
                    return Err(Error::Validation(format!(
                        "document {}: span of {} ends past the last word",
                        self.id, ann.field
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn annotation(&self, field: &FieldName) -> Option<&FieldAnnotation> {
        self.annotations.iter().find(|a| &a.field == field)
    }

    /// Single-space join of the words in `span`.
    pub fn span_text(&self, span: WordSpan) -> String {
        self.words[span.range()]
            .iter()
            .map(|w| w.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Keeps only page-0 words, re-compacting read indices.
///
/// Annotations pointing outside page 0 keep their value but lose their span.
pub fn crop_to_first_page(doc: &Document) -> Document {
    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut words = Vec::new();
    for w in doc.words.iter().filter(|w| w.page == 0) {
        remap.insert(w.read_index, words.len());
        words.push(Word {
            read_index: words.len(),
            ..w.clone()
        });
    }
    let annotations = doc
        .annotations
        .iter()
        .map(|ann| {
            let word_span = ann.word_span.and_then(|span| {
                let start = remap.get(&span.start)?;
                let end = remap.get(&span.end)?;
                // every spanned word must survive, not only the ends
                let all_kept = span.range().all(|i| remap.contains_key(&i));
                (all_kept && end - start == span.end - span.start).then_some(WordSpan { start: *start, end: *end })
            });
            FieldAnnotation { word_span, ..ann.clone() }
        })
        .collect();
    Document {
        id: doc.id.clone(),
        words,
        annotations,
        issuer: doc.issuer.clone(),
        pages: doc.pages.map(|p| p.min(1)),
    }
}

/// Retains at most `cap` documents per issuer, first-come in input order.
pub fn cap_per_issuer(docs: &[Document], cap: usize) -> Result<Vec<Document>> {
    if cap == 0 {
        return Err(Error::Validation("issuer cap must be at least 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::with_capacity(docs.len());
    for doc in docs {
        match doc.issuer.as_deref() {
            None => out.push(doc.clone()),
            Some(issuer) => {
                let n = counts.entry(issuer).or_insert(0);
                if *n < cap {
                    *n += 1;
                    out.push(doc.clone());
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x: u16) -> BBox {
        BBox::new(x, 10, x + 5, 20).unwrap()
    }

    fn paged_doc(pages: u32, per_page: usize) -> Document {
        let words = (0..pages).flat_map(|p| (0..per_page).map(move |i| (format!("w{p}_{i}"), bx(i as u16 * 10), p)));
        Document::from_words("d", words)
    }

    fn with_issuer(id: &str, issuer: Option<&str>) -> Document {
        let mut d = Document::from_words(id, Vec::new());
        d.issuer = issuer.map(str::to_string);
        d
    }

    #[test]
    fn masked_box_is_degenerate_but_valid() {
        assert!(BBox::MASKED.validate().is_ok());
        assert!(BBox::new(5, 0, 4, 0).is_err());
        assert!(BBox::new(0, 0, 1001, 0).is_err());
    }

    #[test]
    fn pixel_normalization_rounds_half_up() {
        // 0.5 / 1 * 1000 = 500 exact; 1/3 * 1000 = 333.33
        let b = BBox::from_pixels(0.5, 1.0, 1.0, 3.0, 1.0, 3.0);
        assert_eq!(
            b,
            BBox {
                x1: 500,
                y1: 333,
                x2: 1000,
                y2: 1000
            }
        );
        let b = BBox::from_pixels(1.0, 0.0, 2.0, 0.0, 2000.0, 1.0);
        // 0.5 rounds up
        assert_eq!(b.x1, 1);
    }

    #[test]
    fn crop_drops_labels_on_later_pages() {
        let mut doc = paged_doc(2, 3);
        doc.annotations.push(FieldAnnotation {
            field: "total".into(),
            value: "w1_1".into(),
            word_span: Some(WordSpan::new(4, 4).unwrap()),
        });
        let cropped = crop_to_first_page(&doc);
        assert_eq!(cropped.words.len(), 3);
        assert!(cropped.words.iter().all(|w| w.page == 0));
        assert_eq!(cropped.annotations[0].value, "w1_1");
        assert_eq!(cropped.annotations[0].word_span, None);
    }

    #[test]
    fn crop_single_page_is_identity() {
        let mut doc = paged_doc(1, 4);
        doc.annotations.push(FieldAnnotation {
            field: "total".into(),
            value: "w0_1 w0_2".into(),
            word_span: Some(WordSpan::new(1, 2).unwrap()),
        });
        assert_eq!(crop_to_first_page(&doc), doc);
    }

    #[test]
    fn crop_three_pages_recompacts() {
        let doc = paged_doc(3, 10);
        let cropped = crop_to_first_page(&doc);
        let idx: Vec<_> = cropped.words.iter().map(|w| w.read_index).collect();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
        assert!(cropped.validate().is_ok());
    }

    #[test]
    fn crop_of_interleaved_pages_remaps_spans() {
        // page order 0,1,0: a span over the last word moves to index 1
        let words = vec![
            ("a".to_string(), bx(0), 0),
            ("b".to_string(), bx(1), 1),
            ("c".to_string(), bx(2), 0),
        ];
        let mut doc = Document::from_words("d", words);
        doc.annotations.push(FieldAnnotation {
            field: "f".into(),
            value: "c".into(),
            word_span: Some(WordSpan::new(2, 2).unwrap()),
        });
        doc.annotations.push(FieldAnnotation {
            field: "g".into(),
            value: "a b c".into(),
            word_span: Some(WordSpan::new(0, 2).unwrap()),
        });
        let cropped = crop_to_first_page(&doc);
        assert_eq!(cropped.annotations[0].word_span, Some(WordSpan { start: 1, end: 1 }));
        assert_eq!(cropped.annotations[1].word_span, None);
    }

    #[test]
    fn crop_is_idempotent() {
        let doc = paged_doc(3, 4);
        let once = crop_to_first_page(&doc);
        assert_eq!(crop_to_first_page(&once), once);
    }

    #[test]
    fn cap_keeps_first_k_per_issuer() {
        let docs: Vec<_> = (0..120).map(|i| with_issuer(&i.to_string(), Some("acme"))).collect();
        assert_eq!(cap_per_issuer(&docs, 50).unwrap().len(), 50);

        let docs = vec![
            with_issuer("a1", Some("A")),
            with_issuer("b1", Some("B")),
            with_issuer("a2", Some("A")),
            with_issuer("n1", None),
            with_issuer("a3", Some("A")),
            with_issuer("b2", Some("B")),
        ];
        let ids: Vec<_> = cap_per_issuer(&docs, 2).unwrap().into_iter().map(|d| d.id).collect();
        assert_eq!(ids, ["a1", "b1", "a2", "n1", "b2"]);
    }

    #[test]
    fn cap_distinct_issuers_unchanged() {
        let docs: Vec<_> = (0..5).map(|i| with_issuer(&i.to_string(), Some(&format!("i{i}")))).collect();
        assert_eq!(cap_per_issuer(&docs, 1).unwrap(), docs);
        assert!(cap_per_issuer(&docs, 0).is_err());
    }

    #[test]
    fn duplicate_field_fails_validation() {
        let mut doc = paged_doc(1, 2);
        for _ in 0..2 {
            doc.annotations.push(FieldAnnotation {
                field: "total".into(),
                value: "x".into(),
                word_span: None,
            });
        }
        assert!(doc.validate().is_err());
    }
}
