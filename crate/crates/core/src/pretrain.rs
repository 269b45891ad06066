//! Self-supervised example generators.
//!
//! * MVLM: masked token prediction over 15% of the content tokens.
//! * Numeric Ordering: every number is classified as smaller than, equal to
//!   or greater than an anchor number drawn from the same sequence.
//! * Layout Inclusion: a `[LAYOUT]` question token carries a random
//!   rectangle; every token is classified by whether its box midpoint falls
//!   inside it.
//!
//! All generators are pure functions of their inputs and a seed.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::doc::{BBox, Document, COORD_MAX};
use crate::error::{Error, Result};
use crate::numparse::{find_numbers, Decimal, ParsedNumber};
use crate::tokenizer::{Token, TokenSequence, TokenizedDocument, Vocab, LAYOUT};

pub const MASK_RATE: f64 = 0.15;
const MASK_TOKEN_SHARE: f64 = 0.8;
const RANDOM_TOKEN_SHARE: f64 = 0.1;

pub const NO_SMALLER: u32 = 0;
pub const NO_EQUAL: u32 = 1;
pub const NO_GREATER: u32 = 2;

pub const LI_OUTSIDE: u32 = 0;
pub const LI_INSIDE: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PretrainTask {
    Mvlm,
    #[serde(rename = "no")]
    NumericOrdering,
    #[serde(rename = "li")]
    LayoutInclusion,
}

impl PretrainTask {
    pub const ALL: [PretrainTask; 3] = [PretrainTask::Mvlm, PretrainTask::NumericOrdering, PretrainTask::LayoutInclusion];

    pub fn name(self) -> &'static str {
        match self {
            PretrainTask::Mvlm => "mvlm",
            PretrainTask::NumericOrdering => "no",
            PretrainTask::LayoutInclusion => "li",
        }
    }

    /// Parses `mvlm,no,li`.
    pub fn parse_list(list: &str) -> Result<BTreeSet<PretrainTask>> {
        let tasks: BTreeSet<_> = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        if tasks.is_empty() {
            return Err(Error::Validation("no pre-training task selected".into()));
        }
        Ok(tasks)
    }
}

impl fmt::Display for PretrainTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PretrainTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mvlm" => Ok(PretrainTask::Mvlm),
            "no" => Ok(PretrainTask::NumericOrdering),
            "li" => Ok(PretrainTask::LayoutInclusion),
            other => Err(Error::Validation(format!("unknown pre-training task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskMeta {
    Mvlm,
    NumericOrdering {
        anchor_read_index: usize,
        anchor_value: Decimal,
        /// Read indices of numbers whose text was replaced by `[MASK]`.
        text_masked: Vec<usize>,
        /// Read indices of numbers whose boxes were replaced by the sentinel.
        box_masked: Vec<usize>,
    },
    LayoutInclusion {
        rect: BBox,
        /// Positions whose input box was replaced by the sentinel.
        box_masked: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainExample {
    pub task: PretrainTask,
    pub input_ids: Vec<u32>,
    pub input_boxes: Vec<BBox>,
    pub targets: Vec<u32>,
    pub loss_mask: Vec<bool>,
    /// Source word of each position, `None` for special tokens.
    pub word_index: Vec<Option<usize>>,
    pub meta: TaskMeta,
}

impl PretrainExample {
    pub fn len(&self) -> usize {
        self.input_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input_ids.is_empty()
    }

    pub fn loss_positions(&self) -> usize {
        self.loss_mask.iter().filter(|m| **m).count()
    }

    fn from_seq(task: PretrainTask, seq: &TokenSequence) -> Self {
        PretrainExample {
            task,
            input_ids: seq.ids(),
            input_boxes: seq.boxes(),
            targets: vec![0; seq.len()],
            loss_mask: vec![false; seq.len()],
            word_index: seq.tokens.iter().map(|t| t.word_read_index).collect(),
            meta: TaskMeta::Mvlm,
        }
    }
}

/// Masked visual-language modeling example.
///
/// Each content token is selected with probability 0.15; selected tokens
/// become `[MASK]` (80%), a random regular token (10%) or stay unchanged (10%).
pub fn gen_mvlm(seq: &TokenSequence, vocab: &Vocab, rng_seed: u64) -> PretrainExample {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let regular = vocab.regular_ids();
    let mask = vocab.special().mask;
    let mut ex = PretrainExample::from_seq(PretrainTask::Mvlm, seq);
    for (i, tok) in seq.tokens.iter().enumerate() {
        if !tok.is_content() || !rng.gen_bool(MASK_RATE) {
            continue;
        }
        ex.targets[i] = tok.id;
        ex.loss_mask[i] = true;
        let r: f64 = rng.gen();
        if r < MASK_TOKEN_SHARE {
            ex.input_ids[i] = mask;
        } else if r < MASK_TOKEN_SHARE + RANDOM_TOKEN_SHARE {
            if let Some(id) = regular.choose(&mut rng) {
                ex.input_ids[i] = *id;
            }
        }
    }
    ex
}

/// Numeric ordering example.
///
/// `numbers` are the document's parsed numbers; only those present in `seq`
/// take part. About 15% of them get their text masked and a disjoint 15%
/// their boxes; targets always come from the unmasked values.
pub fn gen_numeric_ordering(seq: &TokenSequence, numbers: &[ParsedNumber], vocab: &Vocab, rng_seed: u64) -> Result<PretrainExample> {
    let present_words: BTreeSet<usize> = seq.tokens.iter().filter_map(|t| t.word_read_index).collect();
    let present: Vec<&ParsedNumber> = numbers.iter().filter(|n| present_words.contains(&n.word_read_index)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let anchor = *present.choose(&mut rng).ok_or(Error::NoNumbers)?;

    let mut text_masked = Vec::new();
    let mut box_masked = Vec::new();
    for n in &present {
        let u: f64 = rng.gen();
        if u < MASK_RATE {
            text_masked.push(n.word_read_index);
        } else if u < 2.0 * MASK_RATE {
            box_masked.push(n.word_read_index);
        }
    }
    let values: HashMap<usize, &Decimal> = present.iter().map(|n| (n.word_read_index, &n.value)).collect();
    let mask = vocab.special().mask;
    let mut ex = PretrainExample::from_seq(PretrainTask::NumericOrdering, seq);
    for (i, tok) in seq.tokens.iter().enumerate() {
        let Some(w) = tok.word_read_index else { continue };
        let Some(value) = values.get(&w) else { continue };
        if tok.is_word_start {
            ex.targets[i] = match value.cmp(&&anchor.value) {
                std::cmp::Ordering::Less => NO_SMALLER,
                std::cmp::Ordering::Equal => NO_EQUAL,
                std::cmp::Ordering::Greater => NO_GREATER,
            };
            ex.loss_mask[i] = true;
        }
        if text_masked.contains(&w) {
            ex.input_ids[i] = mask;
        } else if box_masked.contains(&w) {
            ex.input_boxes[i] = BBox::MASKED;
        }
    }
    ex.meta = TaskMeta::NumericOrdering {
        anchor_read_index: anchor.word_read_index,
        anchor_value: anchor.value.clone(),
        text_masked,
        box_masked,
    };
    Ok(ex)
}

/// Uniform rectangle with `x1 < x2` and `y1 < y2`, redrawn until valid.
fn draw_rect(rng: &mut impl Rng) -> BBox {
    let mut axis = || loop {
        let a = rng.gen_range(0..=COORD_MAX);
        let b = rng.gen_range(0..=COORD_MAX);
        if a < b {
            return (a, b);
        }
    };
    let (x1, x2) = axis();
    let (y1, y2) = axis();
    BBox { x1, y1, x2, y2 }
}

/// Layout inclusion example with the `[LAYOUT]` token right after `[CLS]`.
///
/// The output keeps the input length: one trailing pad is dropped, or the
/// last content token when the window is full.
pub fn gen_layout_inclusion(seq: &TokenSequence, vocab: &Vocab, rng_seed: u64) -> Result<PretrainExample> {
    let sp = vocab.special();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let rect = draw_rect(&mut rng);
    let mut tokens = seq.tokens.clone();
    if tokens.last().is_some_and(|t| t.id == sp.pad) {
        tokens.pop();
    } else if let Some(last) = tokens.iter().rposition(Token::is_content) {
        tokens.remove(last);
    }
    if !tokens.iter().any(Token::is_content) {
        return Err(Error::Validation(format!(
            "document {} window has no content token for layout inclusion",
            seq.doc_id
        )));
    }
    tokens.insert(
        1,
        Token {
            id: sp.layout,
            text: LAYOUT.to_string(),
            word_read_index: None,
            is_word_start: false,
            bbox: rect,
        },
    );
    let reshaped = TokenSequence {
        tokens,
        doc_id: seq.doc_id.clone(),
        window_offset: seq.window_offset,
    };
    let mut ex = PretrainExample::from_seq(PretrainTask::LayoutInclusion, &reshaped);
    let mut box_masked = Vec::new();
    for (i, tok) in reshaped.tokens.iter().enumerate() {
        if !tok.is_content() {
            continue;
        }
        ex.targets[i] = if rect.contains_midpoint_of(&tok.bbox) {
            LI_INSIDE
        } else {
            LI_OUTSIDE
        };
        ex.loss_mask[i] = true;
        if rng.gen_bool(MASK_RATE) {
            ex.input_boxes[i] = BBox::MASKED;
            box_masked.push(i);
        }
    }
    ex.meta = TaskMeta::LayoutInclusion { rect, box_masked };
    Ok(ex)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainBatch {
    pub task: PretrainTask,
    pub examples: Vec<PretrainExample>,
}

struct CorpusEntry {
    tokenized: TokenizedDocument,
    numbers: Vec<ParsedNumber>,
}

/// Endless stream of single-task batches, tasks interleaved round-robin.
///
/// Documents are visited in a fresh shuffled order every epoch; a document
/// that cannot feed the current task (no numbers in the sampled span) is
/// skipped in favour of the next one. A task that no document can feed is
/// dropped from the rotation; the stream ends when no task is left.
pub struct PretrainStream<'a> {
    corpus: Vec<CorpusEntry>,
    vocab: &'a Vocab,
    tasks: Vec<PretrainTask>,
    next_task: usize,
    batch_size: usize,
    max_len: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> PretrainStream<'a> {
    fn next_doc(&mut self) -> usize {
        if self.cursor >= self.order.len() {
            self.order = (0..self.corpus.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    fn example(&mut self, task: PretrainTask) -> Result<Option<PretrainExample>> {
        // one full pass without success means the task is infeasible
        for _ in 0..self.corpus.len().max(1) {
            let doc = self.next_doc();
            let span_seed: u64 = self.rng.gen();
            let task_seed: u64 = self.rng.gen();
            let entry = &self.corpus[doc];
            let mut span_rng = ChaCha8Rng::seed_from_u64(span_seed);
            let seq = entry.tokenized.sample_span(self.vocab, self.max_len, &mut span_rng)?;
            let ex = match task {
                PretrainTask::Mvlm => Ok(gen_mvlm(&seq, self.vocab, task_seed)),
                PretrainTask::NumericOrdering => gen_numeric_ordering(&seq, &entry.numbers, self.vocab, task_seed),
                PretrainTask::LayoutInclusion => gen_layout_inclusion(&seq, self.vocab, task_seed),
            };
            match ex {
                Ok(ex) if ex.loss_positions() > 0 => return Ok(Some(ex)),
                Ok(_) | Err(Error::NoNumbers) => continue,
                Err(Error::Validation(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(None)
    }

    /// Next batch, or the generation error that stopped the stream.
    pub fn try_next(&mut self) -> Result<Option<PretrainBatch>> {
        while !self.tasks.is_empty() {
            let slot = self.next_task % self.tasks.len();
            let task = self.tasks[slot];
            let mut examples = Vec::with_capacity(self.batch_size);
            let mut feasible = true;
            while examples.len() < self.batch_size {
                match self.example(task)? {
                    Some(ex) => examples.push(ex),
                    None => {
                        feasible = false;
                        break;
                    }
                }
            }
            if feasible {
                self.next_task = slot + 1;
                return Ok(Some(PretrainBatch { task, examples }));
            }
            self.tasks.remove(slot);
            self.next_task = slot;
        }
        Ok(None)
    }
}

impl Iterator for PretrainStream<'_> {
    type Item = Result<PretrainBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        self.try_next().transpose()
    }
}

pub fn make_pretrain_stream<'a>(
    docs: &[Document],
    vocab: &'a Vocab,
    tasks: &BTreeSet<PretrainTask>,
    batch_size: usize,
    max_len: usize,
    rng_seed: u64,
) -> Result<PretrainStream<'a>> {
    if batch_size == 0 {
        return Err(Error::Validation("batch size must be positive".into()));
    }
    let corpus = docs
        .iter()
        .map(|d| CorpusEntry {
            tokenized: TokenizedDocument::new(d, vocab),
            numbers: find_numbers(d),
        })
        .collect::<Vec<_>>();
    let tasks = if corpus.is_empty() {
        Vec::new()
    } else {
        tasks.iter().copied().collect()
    };
    Ok(PretrainStream {
        corpus,
        vocab,
        tasks,
        next_task: 0,
        batch_size,
        max_len,
        rng: ChaCha8Rng::seed_from_u64(rng_seed),
        order: Vec::new(),
        cursor: 0,
    })
}

#[derive(Serialize, Deserialize)]
struct ExampleRecord {
    batch: usize,
    task: PretrainTask,
    input_ids: Vec<u32>,
    input_boxes: Vec<[u16; 4]>,
    targets: Vec<u32>,
    loss_mask: Vec<u8>,
    word_index: Vec<Option<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor_read_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchor_value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_masked: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    box_masked: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rect: Option<[u16; 4]>,
}

/// One JSON line describing an example, tagged with its batch number.
pub fn example_to_json_line(batch: usize, ex: &PretrainExample) -> String {
    let mut rec = ExampleRecord {
        batch,
        task: ex.task,
        input_ids: ex.input_ids.clone(),
        input_boxes: ex.input_boxes.iter().map(BBox::as_array).collect(),
        targets: ex.targets.clone(),
        loss_mask: ex.loss_mask.iter().map(|&m| u8::from(m)).collect(),
        word_index: ex.word_index.clone(),
        anchor_read_index: None,
        anchor_value: None,
        text_masked: None,
        box_masked: None,
        rect: None,
    };
    match &ex.meta {
        TaskMeta::Mvlm => {}
        TaskMeta::NumericOrdering {
            anchor_read_index,
            anchor_value,
            text_masked,
            box_masked,
        } => {
            rec.anchor_read_index = Some(*anchor_read_index);
            rec.anchor_value = Some(anchor_value.to_string());
            rec.text_masked = Some(text_masked.clone());
            rec.box_masked = Some(box_masked.clone());
        }
        TaskMeta::LayoutInclusion { rect, box_masked } => {
            rec.rect = Some(rect.as_array());
            rec.box_masked = Some(box_masked.clone());
        }
    }
    serde_json::to_string(&rec).expect("example records always serialize")
}

fn example_from_record(rec: ExampleRecord) -> Result<PretrainExample> {
    let n = rec.input_ids.len();
    if [rec.input_boxes.len(), rec.targets.len(), rec.loss_mask.len(), rec.word_index.len()] != [n; 4] {
        return Err(Error::Format("example fields differ in length".into()));
    }
    let input_boxes = rec
        .input_boxes
        .iter()
        .map(|&[x1, y1, x2, y2]| BBox::new(x1, y1, x2, y2))
        .collect::<Result<Vec<_>>>()?;
    let meta = match rec.task {
        PretrainTask::Mvlm => TaskMeta::Mvlm,
        PretrainTask::NumericOrdering => {
            let value = rec.anchor_value.as_deref().unwrap_or_default();
            TaskMeta::NumericOrdering {
                anchor_read_index: rec
                    .anchor_read_index
                    .ok_or_else(|| Error::Format("numeric ordering example without anchor".into()))?,
                anchor_value: Decimal::parse_canonical(value).ok_or_else(|| Error::Format(format!("bad anchor value {value:?}")))?,
                text_masked: rec.text_masked.unwrap_or_default(),
                box_masked: rec.box_masked.unwrap_or_default(),
            }
        }
        PretrainTask::LayoutInclusion => {
            let [x1, y1, x2, y2] = rec
                .rect
                .ok_or_else(|| Error::Format("layout inclusion example without rectangle".into()))?;
            TaskMeta::LayoutInclusion {
                rect: BBox::new(x1, y1, x2, y2)?,
                box_masked: rec.box_masked.unwrap_or_default(),
            }
        }
    };
    Ok(PretrainExample {
        task: rec.task,
        input_ids: rec.input_ids,
        input_boxes,
        targets: rec.targets,
        loss_mask: rec.loss_mask.iter().map(|&m| m != 0).collect(),
        word_index: rec.word_index,
        meta,
    })
}

pub fn example_from_json_line(line: &str) -> Result<(usize, PretrainExample)> {
    let rec: ExampleRecord = serde_json::from_str(line)?;
    let batch = rec.batch;
    Ok((batch, example_from_record(rec)?))
}

/// Reads lines written by [`example_to_json_line`], regrouped into batches.
pub fn read_pretrain_batches(reader: impl std::io::Read) -> Result<Vec<PretrainBatch>> {
    use std::io::BufRead;
    let mut batches: Vec<PretrainBatch> = Vec::new();
    let mut current: Option<usize> = None;
    for (n, line) in std::io::BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (b, ex) = example_from_json_line(&line).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
        match batches.last_mut() {
            Some(last) if current == Some(b) => {
                if last.task != ex.task {
                    return Err(Error::Format(format!("line {}: batch {b} mixes tasks", n + 1)));
                }
                last.examples.push(ex);
            }
            _ => {
                current = Some(b);
                batches.push(PretrainBatch {
                    task: ex.task,
                    examples: vec![ex],
                });
            }
        }
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numparse::parse_number;
    use crate::tokenizer::{window_document, SPECIAL_TOKENS};

    fn vocab() -> Vocab {
        let mut t: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        for c in "abcdefghijklmnopqrstuvwxyz0123456789,.$".chars() {
            t.push(c.to_string());
            t.push(format!("##{c}"));
        }
        Vocab::from_tokens(t).unwrap()
    }

    fn doc(words: &[(&str, [u16; 4])]) -> Document {
        Document::from_words(
            "d",
            words
                .iter()
                .map(|(w, b)| (w.to_string(), BBox::new(b[0], b[1], b[2], b[3]).unwrap(), 0)),
        )
    }

    fn grid_doc(n: usize) -> Document {
        let words: Vec<(String, BBox, u32)> = (0..n)
            .map(|i| {
                let x = (i % 20) as u16 * 45;
                let y = (i / 20) as u16 * 30 % 950;
                (format!("w{}", i % 7), BBox::new(x, y, x + 40, y + 20).unwrap(), 0)
            })
            .collect();
        Document::from_words("g", words)
    }

    #[test]
    fn mvlm_selection_stays_in_binomial_band() {
        let v = vocab();
        // one-piece words fill a 510-token window
        let words: Vec<(String, BBox, u32)> = (0..510).map(|i| (format!("{}", i % 10), BBox::ZERO, 0)).collect();
        let d = Document::from_words("m", words);
        let seq = &window_document(&d, &v, 512).unwrap()[0];
        let ex = gen_mvlm(seq, &v, 1);
        let n = ex.loss_positions();
        assert!((50..=103).contains(&n), "{n} positions selected");
        assert!(!ex.loss_mask[0] && !ex.loss_mask[511]);
        for i in (0..ex.len()).filter(|&i| ex.loss_mask[i]) {
            assert_eq!(ex.targets[i], seq.tokens[i].id);
            if ex.input_ids[i] == v.special().mask {
                assert_ne!(ex.targets[i], ex.input_ids[i]);
            }
        }
        assert_eq!(ex.input_boxes, seq.boxes());
    }

    #[test]
    fn mvlm_on_special_only_window_selects_nothing() {
        let v = vocab();
        let seq = &window_document(&doc(&[]), &v, 64).unwrap()[0];
        assert_eq!(gen_mvlm(seq, &v, 3).loss_positions(), 0);
    }

    #[test]
    fn numeric_ordering_labels() {
        let v = vocab();
        let d = doc(&[
            ("12.00", [0, 0, 10, 10]),
            ("x", [0, 0, 10, 10]),
            ("3", [0, 0, 10, 10]),
            ("12", [0, 0, 10, 10]),
        ]);
        let seq = &window_document(&d, &v, 32).unwrap()[0];
        let numbers = find_numbers(&d);
        // find a seed whose anchor is the last "12"
        let ex = (0..100)
            .map(|s| gen_numeric_ordering(seq, &numbers, &v, s).unwrap())
            .find(|ex| matches!(ex.meta, TaskMeta::NumericOrdering { anchor_read_index: 3, .. }))
            .unwrap();
        let labelled: Vec<u32> = (0..ex.len()).filter(|&i| ex.loss_mask[i]).map(|i| ex.targets[i]).collect();
        assert_eq!(labelled, [NO_EQUAL, NO_SMALLER, NO_EQUAL]);

        let ex = (0..100)
            .map(|s| gen_numeric_ordering(seq, &numbers, &v, s).unwrap())
            .find(|ex| matches!(ex.meta, TaskMeta::NumericOrdering { anchor_read_index: 2, .. }))
            .unwrap();
        let labelled: Vec<u32> = (0..ex.len()).filter(|&i| ex.loss_mask[i]).map(|i| ex.targets[i]).collect();
        assert_eq!(labelled, [NO_GREATER, NO_EQUAL, NO_GREATER]);
    }

    #[test]
    fn numeric_ordering_single_number_is_equal() {
        let v = vocab();
        let d = doc(&[("total", [0, 0, 10, 10]), ("$9.99", [0, 0, 10, 10])]);
        let seq = &window_document(&d, &v, 32).unwrap()[0];
        let ex = gen_numeric_ordering(seq, &find_numbers(&d), &v, 0).unwrap();
        let labelled: Vec<u32> = (0..ex.len()).filter(|&i| ex.loss_mask[i]).map(|i| ex.targets[i]).collect();
        assert_eq!(labelled, [NO_EQUAL]);
        // loss only on the word start, not on the continuation pieces
        assert_eq!(ex.loss_positions(), 1);
        let none = doc(&[("total", [0, 0, 10, 10])]);
        let seq = &window_document(&none, &v, 32).unwrap()[0];
        assert!(matches!(
            gen_numeric_ordering(seq, &find_numbers(&none), &v, 0),
            Err(Error::NoNumbers)
        ));
    }

    #[test]
    fn masked_numbers_keep_their_targets() {
        let v = vocab();
        let words: Vec<(String, BBox, u32)> = (0..200)
            .map(|i| (format!("{}.5", i % 37), BBox::new(1, 1, 9, 9).unwrap(), 0))
            .collect();
        let d = Document::from_words("n", words);
        let seq = &window_document(&d, &v, 1024).unwrap()[0];
        let numbers = find_numbers(&d);
        for seed in 0..20 {
            let ex = gen_numeric_ordering(seq, &numbers, &v, seed).unwrap();
            let TaskMeta::NumericOrdering {
                anchor_value,
                text_masked,
                box_masked,
                ..
            } = &ex.meta
            else {
                unreachable!()
            };
            assert!(!text_masked.is_empty() && !box_masked.is_empty());
            for i in (0..ex.len()).filter(|&i| ex.loss_mask[i]) {
                let w = ex.word_index[i].unwrap();
                let value = parse_number(&d.words[w].text).unwrap();
                let want = match value.cmp(anchor_value) {
                    std::cmp::Ordering::Less => NO_SMALLER,
                    std::cmp::Ordering::Equal => NO_EQUAL,
                    std::cmp::Ordering::Greater => NO_GREATER,
                };
                assert_eq!(ex.targets[i], want);
                if text_masked.contains(&w) {
                    assert_eq!(ex.input_ids[i], v.special().mask);
                    assert_ne!(ex.input_boxes[i], BBox::MASKED);
                }
                if box_masked.contains(&w) {
                    assert_eq!(ex.input_boxes[i], BBox::MASKED);
                    assert_ne!(ex.input_ids[i], v.special().mask);
                }
            }
        }
    }

    #[test]
    fn layout_inclusion_midpoint_rule() {
        let v = vocab();
        let d = doc(&[("a", [100, 100, 200, 200]), ("b", [500, 500, 600, 600])]);
        let seq = &window_document(&d, &v, 16).unwrap()[0];
        let ex = gen_layout_inclusion(seq, &v, 5).unwrap();
        assert_eq!(ex.len(), 16);
        assert_eq!(ex.input_ids[1], v.special().layout);
        let TaskMeta::LayoutInclusion { rect, .. } = ex.meta else {
            unreachable!()
        };
        assert_eq!(ex.input_boxes[1], rect);
        assert!(rect.x1 < rect.x2 && rect.y1 < rect.y2);
        assert!(!ex.loss_mask[0] && !ex.loss_mask[1]);
        let r = BBox::new(140, 140, 300, 300).unwrap();
        assert!(r.contains_midpoint_of(&BBox::new(100, 100, 200, 200).unwrap()));
        assert!(!r.contains_midpoint_of(&BBox::new(500, 500, 600, 600).unwrap()));
        let full = BBox::new(0, 0, 1000, 1000).unwrap();
        assert!(d.words.iter().all(|w| full.contains_midpoint_of(&w.bbox)));
    }

    #[test]
    fn layout_inclusion_drops_last_content_of_full_window() {
        let v = vocab();
        let d = doc(&[("a", [0, 0, 10, 10]), ("b", [0, 0, 10, 10]), ("c", [0, 0, 10, 10])]);
        let seq = &window_document(&d, &v, 5).unwrap()[0];
        assert_eq!(seq.tokens.iter().filter(|t| t.is_content()).count(), 3);
        let ex = gen_layout_inclusion(seq, &v, 0).unwrap();
        assert_eq!(ex.len(), 5);
        assert_eq!(ex.word_index, vec![None, None, Some(0), Some(1), None]);
        assert_eq!(ex.input_ids[4], v.special().sep);
    }

    #[test]
    fn no_generator_targets_special_tokens() {
        let v = vocab();
        let d = grid_doc(120);
        for w in window_document(&d, &v, 64).unwrap() {
            for seed in 0..5 {
                let exs = [
                    Some(gen_mvlm(&w, &v, seed)),
                    gen_numeric_ordering(&w, &find_numbers(&d), &v, seed).ok(),
                    gen_layout_inclusion(&w, &v, seed).ok(),
                ];
                for ex in exs.into_iter().flatten() {
                    for i in 0..ex.len() {
                        let special = v.special().contains(ex.input_ids[i]) && ex.word_index[i].is_none();
                        assert!(!(special && ex.loss_mask[i]));
                    }
                }
            }
        }
    }

    fn numeric_corpus() -> Vec<Document> {
        let mut docs: Vec<Document> = (0..6)
            .map(|k| {
                let words: Vec<(String, BBox, u32)> = (0..30)
                    .map(|i| {
                        let t = if i % 3 == 0 { format!("{}", i * k) } else { "item".to_string() };
                        (t, BBox::new(0, 0, 10, 10).unwrap(), 0)
                    })
                    .collect();
                Document::from_words(format!("n{k}"), words)
            })
            .collect();
        docs.push(Document::from_words("plain", [("abc".to_string(), BBox::ZERO, 0)]));
        docs
    }

    #[test]
    fn stream_round_robin_and_skip() {
        let v = vocab();
        let docs = numeric_corpus();
        let tasks = PretrainTask::parse_list("mvlm,no,li").unwrap();
        let stream = make_pretrain_stream(&docs, &v, &tasks, 4, 64, 9).unwrap();
        let batches: Vec<PretrainBatch> = stream.take(9).collect::<Result<_>>().unwrap();
        let order: Vec<PretrainTask> = batches.iter().map(|b| b.task).collect();
        use PretrainTask::*;
        assert_eq!(
            order,
            [
                Mvlm,
                NumericOrdering,
                LayoutInclusion,
                Mvlm,
                NumericOrdering,
                LayoutInclusion,
                Mvlm,
                NumericOrdering,
                LayoutInclusion
            ]
        );
        for b in &batches {
            assert_eq!(b.examples.len(), 4);
            assert!(b.examples.iter().all(|e| e.task == b.task));
        }
        // the number-free document never feeds a numeric ordering batch
        for b in batches.iter().filter(|b| b.task == NumericOrdering) {
            assert!(b.examples.iter().all(|e| e.loss_positions() > 0));
        }
    }

    #[test]
    fn stream_is_deterministic_and_drops_infeasible_tasks() {
        let v = vocab();
        let docs = numeric_corpus();
        let tasks = PretrainTask::parse_list("mvlm").unwrap();
        let a: Vec<_> = make_pretrain_stream(&docs, &v, &tasks, 3, 64, 1)
            .unwrap()
            .take(5)
            .collect::<Result<Vec<_>>>()
            .unwrap();
        let b: Vec<_> = make_pretrain_stream(&docs, &v, &tasks, 3, 64, 1)
            .unwrap()
            .take(5)
            .collect::<Result<Vec<_>>>()
            .unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|b| b.task == PretrainTask::Mvlm));

        let plain = &docs[6..];
        let tasks = PretrainTask::parse_list("no,li").unwrap();
        let got: Vec<_> = make_pretrain_stream(plain, &v, &tasks, 2, 64, 1)
            .unwrap()
            .take(4)
            .collect::<Result<Vec<_>>>()
            .unwrap();
        assert!(got.iter().all(|b| b.task == PretrainTask::LayoutInclusion));
        assert!(make_pretrain_stream(&[], &v, &tasks, 2, 64, 1).unwrap().next().is_none());
    }

    #[test]
    fn example_json_line() {
        let v = vocab();
        let d = doc(&[("7", [0, 0, 10, 10])]);
        let seq = &window_document(&d, &v, 4).unwrap()[0];
        let ex = gen_numeric_ordering(seq, &find_numbers(&d), &v, 0).unwrap();
        let line = example_to_json_line(2, &ex);
        assert!(line.starts_with(r#"{"batch":2,"task":"no","#));
        assert!(line.contains(r#""anchor_value":"7""#));
    }

    #[test]
    fn batches_survive_a_json_round_trip() {
        let v = vocab();
        let docs = numeric_corpus();
        let tasks = PretrainTask::parse_list("mvlm,no,li").unwrap();
        let batches: Vec<PretrainBatch> = make_pretrain_stream(&docs, &v, &tasks, 2, 32, 4)
            .unwrap()
            .take(6)
            .collect::<Result<_>>()
            .unwrap();
        let text: String = batches
            .iter()
            .enumerate()
            .flat_map(|(b, batch)| batch.examples.iter().map(move |ex| example_to_json_line(b, ex) + "\n"))
            .collect();
        assert_eq!(read_pretrain_batches(text.as_bytes()).unwrap(), batches);
    }
}
