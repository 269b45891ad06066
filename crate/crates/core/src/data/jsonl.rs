//! Line-delimited JSON formats.
//!
//! Documents, one object per line:
//!
//! ```text
//! {"schema":1,"id":"doc-1","issuer":"acme","words":[{"text":"Total","box":[10,20,60,30],"page":0}],
//!  "annotations":[{"field":"total","value":"12.00","word_span":[3,3]}]}
//! ```
//!
//! `issuer`, `pages` and `word_span` are omitted when absent. A word's read
//! index is its position in `words`. Predictions are `{"id":..,"fields":{..}}`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::doc::{BBox, Document, FieldAnnotation, FieldName, Word, WordSpan};
use crate::error::{Error, Result};

pub const DOC_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct WordRecord {
    text: String,
    #[serde(rename = "box")]
    bbox: [u16; 4],
    #[serde(default)]
    page: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationRecord {
    field: String,
    value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    word_span: Option<[usize; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DocRecord {
    #[serde(default = "default_schema")]
    schema: u32,
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    issuer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pages: Option<u32>,
    words: Vec<WordRecord>,
    #[serde(default)]
    annotations: Vec<AnnotationRecord>,
}

fn default_schema() -> u32 {
    DOC_SCHEMA_VERSION
}

impl From<&Document> for DocRecord {
    fn from(doc: &Document) -> Self {
        DocRecord {
            schema: DOC_SCHEMA_VERSION,
            id: doc.id.clone(),
            issuer: doc.issuer.clone(),
            pages: doc.pages,
            words: doc
                .words
                .iter()
                .map(|w| WordRecord {
                    text: w.text.clone(),
                    bbox: w.bbox.as_array(),
                    page: w.page,
                })
                .collect(),
            annotations: doc
                .annotations
                .iter()
                .map(|a| AnnotationRecord {
                    field: a.field.0.clone(),
                    value: a.value.clone(),
                    word_span: a.word_span.map(|s| [s.start, s.end]),
                })
                .collect(),
        }
    }
}

impl TryFrom<DocRecord> for Document {
    type Error = Error;

    fn try_from(rec: DocRecord) -> Result<Self> {
        if rec.schema != DOC_SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported document schema {}", rec.schema)));
        }
        let words = rec
            .words
            .into_iter()
            .enumerate()
            .map(|(read_index, w)| {
                let [x1, y1, x2, y2] = w.bbox;
                Ok(Word {
                    text: w.text,
                    bbox: BBox::new(x1, y1, x2, y2)?,
                    page: w.page,
                    read_index,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let annotations = rec
            .annotations
            .into_iter()
            .map(|a| {
                Ok(FieldAnnotation {
                    field: FieldName(a.field),
                    value: a.value,
                    word_span: a.word_span.map(|[s, e]| WordSpan::new(s, e)).transpose()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let doc = Document {
            id: rec.id,
            words,
            annotations,
            issuer: rec.issuer,
            pages: rec.pages,
        };
        doc.validate()?;
        Ok(doc)
    }
}

pub fn document_to_line(doc: &Document) -> String {
    serde_json::to_string(&DocRecord::from(doc)).expect("document records always serialize")
}

pub fn document_from_line(line: &str) -> Result<Document> {
    let rec: DocRecord = serde_json::from_str(line)?;
    Document::try_from(rec)
}

/// Reads documents, skipping blank lines. Errors carry the 1-based line number.
pub fn read_documents(reader: impl Read) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = document_from_line(&line).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_documents<'a>(writer: impl Write, docs: impl IntoIterator<Item = &'a Document>) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for doc in docs {
        writeln!(w, "{}", document_to_line(doc))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_documents(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    read_documents(File::open(path)?)
}

pub fn save_documents(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    write_documents(File::create(path)?, docs)
}

/// Extracted field values of one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub fields: BTreeMap<FieldName, String>,
}

pub fn read_predictions(reader: impl Read) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

pub fn write_predictions(writer: impl Write, preds: &[PredictionRecord]) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for p in preds {
        serde_json::to_writer(&mut w, p)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
