//! Ingestion of the scanned-receipt (SROIE) layout.
//!
//! `ocr_dir` holds one `<id>.txt` per receipt with lines
//! `x1,y1,x2,y2,x3,y3,x4,y4,text`; `gold_dir` holds `<id>.txt` with the key
//! fields as a JSON object (`company`, `address`, `date`, `total`). Lines of
//! `key: value` are accepted as well.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::doc::{BBox, Document, FieldAnnotation, FieldName, Word, WordSpan};
use crate::error::{Error, Result};
use crate::eval::match_normalize;

pub const SROIE_FIELDS: [&str; 4] = ["company", "address", "date", "total"];

/// Replacement OCR lines per document id, for hand-corrected receipts.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(transparent)]
pub struct OcrPatches(pub HashMap<String, Vec<String>>);

impl OcrPatches {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Default)]
pub struct IngestReport {
    pub documents: Vec<Document>,
    /// Files that could not be parsed, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
    /// Gold values not found in the OCR word stream.
    pub unresolved: Vec<(String, FieldName)>,
    /// Gold values found more than once; the first match is used.
    pub ambiguous: Vec<(String, FieldName, usize)>,
}

struct OcrLine {
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
    text: String,
}

fn parse_ocr_line(line: &str) -> Result<Option<OcrLine>> {
    let line = line.trim_end_matches(['\r', '\n']).trim_start_matches('\u{feff}');
    if line.trim().is_empty() {
        return Ok(None);
    }
    let parts: Vec<&str> = line.splitn(9, ',').collect();
    if parts.len() < 9 {
        return Err(Error::Format(format!("expected 8 coordinates and text in {line:?}")));
    }
    let mut coords = [0f64; 8];
    for (c, p) in coords.iter_mut().zip(&parts[..8]) {
        *c = p
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad coordinate {p:?} in {line:?}")))?;
    }
    let xs = [coords[0], coords[2], coords[4], coords[6]];
    let ys = [coords[1], coords[3], coords[5], coords[7]];
    let min = |v: [f64; 4]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: [f64; 4]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Some(OcrLine {
        xmin: min(xs),
        ymin: min(ys),
        xmax: max(xs),
        ymax: max(ys),
        text: parts[8].to_string(),
    }))
}

/// Turns OCR lines into read-order words.
///
/// Multi-word lines are split on whitespace; each word gets the slice of the
/// line box proportional to its character offsets.
pub fn words_from_ocr_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> Result<Vec<Word>> {
    let parsed: Vec<OcrLine> = lines
        .into_iter()
        .map(parse_ocr_line)
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let width = parsed.iter().map(|l| l.xmax).fold(0.0, f64::max);
    let height = parsed.iter().map(|l| l.ymax).fold(0.0, f64::max);
    let mut words: Vec<(BBox, usize, String)> = Vec::new();
    for l in &parsed {
        let chars: Vec<char> = l.text.chars().collect();
        let total = chars.len() as f64;
        let mut i = 0;
        while i < chars.len() {
            if chars[i].is_whitespace() {
                i += 1;
                continue;
            }
            let start = i;
            while i < chars.len() && !chars[i].is_whitespace() {
                i += 1;
            }
            let x1 = l.xmin + (l.xmax - l.xmin) * start as f64 / total;
            let x2 = l.xmin + (l.xmax - l.xmin) * i as f64 / total;
            let bbox = BBox::from_pixels(x1, l.ymin, x2, l.ymax, width, height);
            let text: String = chars[start..i].iter().collect();
            words.push((bbox, words.len(), text));
        }
    }
    words.sort_by_key(|(b, order, _)| (b.y1, b.x1, *order));
    Ok(words
        .into_iter()
        .enumerate()
        .map(|(read_index, (bbox, _, text))| Word {
            text,
            bbox,
            page: 0,
            read_index,
        })
        .collect())
}

fn parse_gold(text: &str) -> Result<BTreeMap<String, String>> {
    let trimmed = text.trim().trim_start_matches('\u{feff}');
    if trimmed.is_empty() {
        return Ok(BTreeMap::new());
    }
    if trimmed.starts_with('{') {
        let map: BTreeMap<String, serde_json::Value> = serde_json::from_str(trimmed)?;
        return Ok(map
            .into_iter()
            .filter_map(|(k, v)| v.as_str().map(|s| (k.to_lowercase(), s.to_string())))
            .collect());
    }
    let mut map = BTreeMap::new();
    for line in trimmed.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once(':')
            .ok_or_else(|| Error::Format(format!("gold line without key: {line:?}")))?;
        map.insert(k.trim().to_lowercase(), v.trim().to_string());
    }
    Ok(map)
}

/// All word-aligned occurrences of `value` in the word stream.
pub fn find_value_spans(words: &[Word], value: &str) -> Vec<WordSpan> {
    let target = match_normalize(value);
    if target.is_empty() {
        return Vec::new();
    }
    let normalized: Vec<String> = words.iter().map(|w| match_normalize(&w.text)).collect();
    let mut out = Vec::new();
    for start in 0..normalized.len() {
        let mut joined = String::new();
        for (end, w) in normalized.iter().enumerate().skip(start) {
            if end > start {
                joined.push(' ');
            }
            joined.push_str(w);
            if joined.len() > target.len() || !target.starts_with(joined.as_str()) {
                break;
            }
            if joined == target {
                out.push(WordSpan { start, end });
                break;
            }
        }
    }
    out
}

fn build_document(id: &str, lines: &[&str], gold: &BTreeMap<String, String>, report: &mut IngestReport) -> Result<Document> {
    let words = words_from_ocr_lines(lines.iter().copied())?;
    let mut annotations = Vec::new();
    for key in SROIE_FIELDS {
        let Some(value) = gold.get(key) else { continue };
        let field = FieldName::from(key);
        let spans = find_value_spans(&words, value);
        match spans.len() {
            0 => report.unresolved.push((id.to_string(), field.clone())),
            1 => {}
            n => report.ambiguous.push((id.to_string(), field.clone(), n)),
        }
        annotations.push(FieldAnnotation {
            field,
            value: value.clone(),
            word_span: spans.first().copied(),
        });
    }
    let doc = Document {
        id: id.to_string(),
        words,
        annotations,
        issuer: None,
        pages: Some(1),
    };
    doc.validate()?;
    Ok(doc)
}

/// Reads every `*.txt` OCR file in `ocr_dir`, sorted by file name.
pub fn ingest_sroie(ocr_dir: impl AsRef<Path>, gold_dir: impl AsRef<Path>, patches: Option<&OcrPatches>) -> Result<IngestReport> {
    let mut files: Vec<PathBuf> = fs::read_dir(ocr_dir.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    let mut report = IngestReport::default();
    for path in files {
        let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
            continue;
        };
        let result = (|| -> Result<Document> {
            let raw = fs::read(&path)?;
            let ocr = String::from_utf8_lossy(&raw).into_owned();
            let lines: Vec<&str> = match patches.and_then(|p| p.0.get(&id)) {
                Some(fixed) => fixed.iter().map(String::as_str).collect(),
                None => ocr.lines().collect(),
            };
            let gold_path = gold_dir.as_ref().join(format!("{id}.txt"));
            let gold = if gold_path.exists() {
                parse_gold(&String::from_utf8_lossy(&fs::read(&gold_path)?))?
            } else {
                BTreeMap::new()
            };
            build_document(&id, &lines, &gold, &mut report)
        })();
        match result {
            Ok(doc) => report.documents.push(doc),
            Err(e) => report.skipped.push((path, e.to_string())),
        }
    }
    Ok(report)
}
