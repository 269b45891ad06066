use rayon::prelude::*;

use super::forward::{trimmed_len, TaggerModel};
use super::{Head, Scalar};
use crate::data::jsonl::PredictionRecord;
use crate::decode::{decode_document, DecodeMethod, TagScheme, WindowConfidences, OUTSIDE};
use crate::doc::Document;
use crate::error::Result;
use crate::tokenizer::{window_document, TokenSequence, Vocab};

/// Tag distributions for each window. Trailing pads are skipped by the model
/// and reported as certain O.
pub fn predict_windows<T: Scalar>(model: &TaggerModel<T>, windows: &[TokenSequence]) -> Result<Vec<WindowConfidences>> {
    windows
        .par_iter()
        .map(|seq| {
            let ids = seq.ids();
            let n = trimmed_len(&ids, model.config.pad_id);
            let out = model.forward(&ids[..n], &seq.boxes()[..n], Head::Tag)?;
            let mut probs: Vec<Vec<f64>> = out
                .probs
                .iter()
                .map(|r| r.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
                .collect();
            let mut pad_row = vec![0.0; model.config.num_tags];
            pad_row[OUTSIDE as usize] = 1.0;
            probs.resize(seq.len(), pad_row);
            WindowConfidences::new(seq, probs)
        })
        .collect()
}

/// Windows, predicts and decodes every document.
pub fn extract_fields<T: Scalar>(
    model: &TaggerModel<T>,
    docs: &[Document],
    vocab: &Vocab,
    scheme: &TagScheme,
    method: DecodeMethod,
    threshold: Option<f64>,
) -> Result<Vec<PredictionRecord>> {
    docs.iter()
        .map(|doc| {
            let windows = window_document(doc, vocab, model.config.max_len)?;
            let conf = predict_windows(model, &windows)?;
            let words: Vec<String> = doc.words.iter().map(|w| w.text.clone()).collect();
            Ok(PredictionRecord {
                id: doc.id.clone(),
                fields: decode_document(&conf, &words, scheme, method, threshold)?,
            })
        })
        .collect()
}
