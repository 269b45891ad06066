use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use docie::data::jsonl::{read_predictions, write_predictions, PredictionRecord};
use docie::data::sroie::ingest_sroie;
use docie::data::synth::gen_synthetic;
use docie::data::{load_documents, save_documents, OcrPatches, SyntheticSpec};
use docie::decode::{decode_document, DecodeMethod, TagScheme, WindowConfidences};
use docie::doc::{Document, FieldName};
use docie::error::{Error, Result};
use docie::eval::score;
use docie::model::{
    finetune, load_checkpoint, predict_windows, pretrain, save_checkpoint, write_log_csv, LogRow, ModelConfig, TaggerModel, TrainConfig,
};
use docie::numparse::find_numbers;
use docie::pretrain::{example_to_json_line, make_pretrain_stream, read_pretrain_batches, PretrainTask};
use docie::tokenizer::{window_document, Vocab, DEFAULT_MAX_LEN, DEFAULT_VOCAB_SIZE};

const CONFIDENCE_FORMAT: &str = "docie-confidences";
const CONFIDENCE_VERSION: u32 = 1;

/// Layout-aware information extraction for business documents.
#[derive(Parser)]
#[command(name = "docie", version, arg_required_else_help = true)]
struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML file of `key = value` model and training settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a WordPiece vocabulary from a document corpus.
    Vocab(VocabArgs),
    /// Split documents into model windows.
    Tokenize(TokenizeArgs),
    /// List the numbers found in each document.
    Numbers(NumbersArgs),
    /// Write pre-training examples as JSONL.
    GenPretrain(GenPretrainArgs),
    /// Pre-train a model body on MVLM, numeric ordering and layout inclusion.
    Pretrain(PretrainArgs),
    /// Fine-tune a BIESO tagger on annotated documents.
    Finetune(FinetuneArgs),
    /// Write per-window tag confidences of a fine-tuned model.
    Predict(PredictArgs),
    /// Decode tag confidences into field values.
    Decode(DecodeArgs),
    /// Score predictions against gold annotations.
    Eval(EvalArgs),
    /// Convert an SROIE-style OCR and gold directory pair into documents.
    IngestSroie(IngestArgs),
    /// Generate an annotated synthetic purchase-order corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct VocabArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE)]
    size: usize,
}

#[derive(Args)]
struct TokenizeArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    /// Output JSONL (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NumbersArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenPretrainArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Comma-separated subset of mvlm,no,li.
    #[arg(long, default_value = "mvlm,no,li")]
    tasks: String,
    #[arg(long, default_value_t = 8)]
    batches: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PretrainArgs {
    /// Documents to sample fresh examples from.
    #[arg(long, required_unless_present = "examples")]
    docs: Option<PathBuf>,
    /// Pre-generated examples from gen-pretrain, cycled in order.
    #[arg(long, conflicts_with = "docs")]
    examples: Option<PathBuf>,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long, default_value = "mvlm,no,li")]
    tasks: String,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Training log CSV.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Comma-separated field names, in tag order.
    #[arg(long)]
    fields: String,
    /// Pre-trained checkpoint to start from.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Confidence JSONL written by `predict`.
    #[arg(long)]
    confidences: PathBuf,
    #[arg(long, default_value = "confopt")]
    method: DecodeMethod,
    /// Expected field order; must match the confidence file.
    #[arg(long)]
    scheme: Option<String>,
    /// Minimum ConfOpt score for a prediction.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    fields: String,
    /// Compare case-sensitively.
    #[arg(long)]
    strict: bool,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    ocr_dir: PathBuf,
    #[arg(long)]
    gold_dir: PathBuf,
    /// JSON object mapping document ids to corrected OCR lines.
    #[arg(long)]
    patches: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Ingest report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 12)]
    issuers: usize,
    #[arg(long, default_value_t = 2)]
    min_items: usize,
    #[arg(long, default_value_t = 8)]
    max_items: usize,
}

/// Settings read from `--config`; every key is optional.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    d_model: Option<usize>,
    n_layers: Option<usize>,
    n_heads: Option<usize>,
    d_ff: Option<usize>,
    max_len: Option<usize>,
    dropout: Option<f64>,
    lr: Option<f64>,
    warmup: Option<usize>,
    accum: Option<usize>,
    micro_batch: Option<usize>,
    steps: Option<usize>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    fn model(&self, vocab_size: usize, num_tags: usize) -> ModelConfig {
        let d = ModelConfig::new(vocab_size, num_tags);
        let d_model = self.d_model.unwrap_or(d.d_model);
        ModelConfig {
            d_model,
            n_layers: self.n_layers.unwrap_or(d.n_layers),
            n_heads: self.n_heads.unwrap_or(d.n_heads),
            d_ff: self.d_ff.unwrap_or(4 * d_model),
            max_len: self.max_len.unwrap_or(d.max_len),
            dropout: self.dropout.unwrap_or(d.dropout),
            ..d
        }
    }

    fn train(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            lr: self.lr.unwrap_or(d.lr),
            warmup: self.warmup.unwrap_or(d.warmup),
            accum: self.accum.unwrap_or(d.accum),
            micro_batch: self.micro_batch.unwrap_or(d.micro_batch),
            steps: self.steps.unwrap_or(d.steps),
            seed,
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn field_list(list: &str) -> Result<Vec<FieldName>> {
    Ok(TagScheme::parse(list)?.fields().to_vec())
}

fn write_log(path: Option<&Path>, rows: &[LogRow]) -> Result<()> {
    if let Some(p) = path {
        let mut w = BufWriter::new(File::create(p)?);
        write_log_csv(&mut w, rows)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_vocab(a: &VocabArgs) -> Result<()> {
    let docs = load_documents(&a.docs)?;
    Vocab::build_from_corpus(&docs, a.size)?.write_file(&a.out)
}

fn cmd_tokenize(a: &TokenizeArgs) -> Result<()> {
    let docs = load_documents(&a.docs)?;
    let vocab = Vocab::from_file(&a.vocab)?;
    let mut w = output(a.out.as_deref())?;
    for doc in &docs {
        for (i, seq) in window_document(doc, &vocab, a.max_len)?.iter().enumerate() {
            let tokens: Vec<_> = seq
                .tokens
                .iter()
                .map(|t| json!({"id": t.id, "text": t.text, "word": t.word_read_index, "word_start": t.is_word_start, "box": t.bbox.as_array()}))
                .collect();
            let rec = json!({"id": doc.id, "window": i, "offset": seq.window_offset, "tokens": tokens});
            writeln!(w, "{rec}")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_numbers(a: &NumbersArgs) -> Result<()> {
    let docs = load_documents(&a.docs)?;
    let mut w = output(a.out.as_deref())?;
    for doc in &docs {
        let numbers: Vec<_> = find_numbers(doc)
            .iter()
            .map(|n| json!({"word": n.word_read_index, "raw": n.raw, "value": n.value.to_string()}))
            .collect();
        writeln!(w, "{}", json!({"id": doc.id, "numbers": numbers}))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_gen_pretrain(a: &GenPretrainArgs, seed: u64) -> Result<()> {
    let docs = load_documents(&a.docs)?;
    let vocab = Vocab::from_file(&a.vocab)?;
    let tasks = PretrainTask::parse_list(&a.tasks)?;
    let stream = make_pretrain_stream(&docs, &vocab, &tasks, a.batch_size, a.max_len, seed)?;
    let mut w = output(a.out.as_deref())?;
    for (b, batch) in stream.take(a.batches).enumerate() {
        for ex in &batch?.examples {
            writeln!(w, "{}", example_to_json_line(b, ex))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_pretrain(a: &PretrainArgs, seed: u64, file: &FileConfig) -> Result<()> {
    let vocab = Vocab::from_file(&a.vocab)?;
    let config = file.model(vocab.len(), 1);
    let cfg = file.train(seed);
    let mut model = TaggerModel::<f32>::new(config, seed)?;
    let log = if let Some(path) = &a.examples {
        let batches = read_pretrain_batches(File::open(path)?)?;
        if batches.is_empty() {
            return Err(Error::Validation(format!("{} holds no examples", path.display())));
        }
        pretrain(&mut model, batches.iter().cloned().map(Ok).cycle(), &cfg)?
    } else {
        let path = a.docs.as_ref().expect("clap requires docs or examples");
        let docs = load_documents(path)?;
        let tasks = PretrainTask::parse_list(&a.tasks)?;
        let stream = make_pretrain_stream(&docs, &vocab, &tasks, cfg.micro_batch, model.config.max_len, seed)?;
        pretrain(&mut model, stream, &cfg)?
    };
    save_checkpoint(&a.out, &model, &[], cfg.steps)?;
    write_log(a.log.as_deref(), &log)
}

fn cmd_finetune(a: &FinetuneArgs, seed: u64, file: &FileConfig) -> Result<()> {
    let docs = load_documents(&a.docs)?;
    let vocab = Vocab::from_file(&a.vocab)?;
    let scheme = TagScheme::parse(&a.fields)?;
    let cfg = file.train(seed);
    let mut model = match &a.init {
        Some(path) => {
            let mut m = load_checkpoint::<f32>(path)?.model;
            if m.config.vocab_size != vocab.len() {
                return Err(Error::Validation(format!(
                    "checkpoint vocabulary has {} entries, {} has {}",
                    m.config.vocab_size,
                    a.vocab.display(),
                    vocab.len()
                )));
            }
            m.reset_tag_head(scheme.num_tags(), seed)?;
            m
        }
        None => TaggerModel::new(file.model(vocab.len(), scheme.num_tags()), seed)?,
    };
    let log = finetune(&mut model, &docs, &vocab, &scheme, &cfg)?;
    let fields: Vec<String> = scheme.fields().iter().map(|f| f.0.clone()).collect();
    save_checkpoint(&a.out, &model, &fields, cfg.steps)?;
    write_log(a.log.as_deref(), &log)
}

#[derive(Serialize, Deserialize)]
struct ConfidenceHeader {
    format: String,
    version: u32,
    fields: Vec<String>,
}

/// One window: absolute word index per token, the texts of those words and
/// the tag distribution per token.
#[derive(Serialize, Deserialize)]
struct ConfidenceRecord {
    id: String,
    window: usize,
    word_index: Vec<Option<usize>>,
    words: BTreeMap<usize, String>,
    probs: Vec<Vec<f64>>,
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let docs = load_documents(&a.docs)?;
    let vocab = Vocab::from_file(&a.vocab)?;
    let ckpt = load_checkpoint::<f32>(&a.model)?;
    if ckpt.meta.fields.is_empty() {
        return Err(Error::Validation(format!("{} is not a fine-tuned tagger", a.model.display())));
    }
    let mut w = output(a.out.as_deref())?;
    let header = ConfidenceHeader {
        format: CONFIDENCE_FORMAT.into(),
        version: CONFIDENCE_VERSION,
        fields: ckpt.meta.fields.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for doc in &docs {
        let windows = window_document(doc, &vocab, ckpt.model.config.max_len)?;
        for (i, conf) in predict_windows(&ckpt.model, &windows)?.into_iter().enumerate() {
            let words = conf.word_index.iter().flatten().map(|&k| (k, doc.words[k].text.clone())).collect();
            let rec = ConfidenceRecord {
                id: doc.id.clone(),
                window: i,
                word_index: conf.word_index,
                words,
                probs: conf.probs,
            };
            writeln!(w, "{}", serde_json::to_string(&rec)?)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_decode(a: &DecodeArgs) -> Result<()> {
    let mut lines = BufReader::new(File::open(&a.confidences)?).lines();
    let first = lines.next().ok_or_else(|| Error::Format("empty confidence file".into()))??;
    let header: ConfidenceHeader = serde_json::from_str(&first)?;
    if header.format != CONFIDENCE_FORMAT || header.version != CONFIDENCE_VERSION {
        return Err(Error::Format(format!(
            "unsupported confidence file {} v{}",
            header.format, header.version
        )));
    }
    let scheme = TagScheme::new(header.fields.iter().map(FieldName::new).collect())?;
    if let Some(expected) = &a.scheme {
        if TagScheme::parse(expected)? != scheme {
            return Err(Error::Validation(format!(
                "confidence file fields {:?} differ from --scheme",
                header.fields
            )));
        }
    }
    let mut preds = Vec::new();
    let mut flush = |id: String, windows: &mut Vec<WindowConfidences>, words: &mut BTreeMap<usize, String>| -> Result<()> {
        let len = words.keys().next_back().map_or(0, |k| k + 1);
        let mut texts = vec![String::new(); len];
        for (k, t) in std::mem::take(words) {
            texts[k] = t;
        }
        let fields = decode_document(windows, &texts, &scheme, a.method, a.threshold)?;
        windows.clear();
        preds.push(PredictionRecord { id, fields });
        Ok(())
    };
    let mut current: Option<String> = None;
    let mut windows = Vec::new();
    let mut words = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ConfidenceRecord = serde_json::from_str(&line).map_err(|e| Error::Format(format!("line {}: {e}", n + 2)))?;
        if current.as_deref() != Some(rec.id.as_str()) {
            if let Some(id) = current.take() {
                flush(id, &mut windows, &mut words)?;
            }
            current = Some(rec.id.clone());
        }
        if rec.word_index.len() != rec.probs.len() {
            return Err(Error::Format(format!(
                "line {}: {} word indices for {} rows",
                n + 2,
                rec.word_index.len(),
                rec.probs.len()
            )));
        }
        words.extend(rec.words);
        windows.push(WindowConfidences {
            word_index: rec.word_index,
            probs: rec.probs,
        });
    }
    if let Some(id) = current.take() {
        flush(id, &mut windows, &mut words)?;
    }
    write_predictions(output(a.out.as_deref())?, &preds)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let preds = read_predictions(File::open(&a.pred)?)?;
    let gold = load_documents(&a.gold)?;
    let report = score(&preds, &gold, &field_list(&a.fields)?, a.strict)?;
    println!("{report}");
    if let Some(p) = &a.json {
        let mut w = BufWriter::new(File::create(p)?);
        serde_json::to_writer_pretty(&mut w, &report)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    let patches = a.patches.as_ref().map(OcrPatches::from_file).transpose()?;
    let report = ingest_sroie(&a.ocr_dir, &a.gold_dir, patches.as_ref())?;
    save_documents(&a.out, &report.documents)?;
    eprintln!(
        "{} documents, {} skipped, {} unresolved values, {} ambiguous values",
        report.documents.len(),
        report.skipped.len(),
        report.unresolved.len(),
        report.ambiguous.len()
    );
    if let Some(p) = &a.report {
        let rec = json!({
            "documents": report.documents.len(),
            "skipped": report.skipped,
            "unresolved": report.unresolved,
            "ambiguous": report.ambiguous,
        });
        std::fs::write(p, serde_json::to_string_pretty(&rec)? + "\n")?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs, seed: u64) -> Result<()> {
    if a.n == 0 {
        return Err(Error::Validation("--n must be at least 1".into()));
    }
    let spec = SyntheticSpec {
        seed,
        min_items: a.min_items,
        max_items: a.max_items,
        issuers: a.issuers,
        ..Default::default()
    };
    spec.validate()?;
    let docs: Vec<Document> = gen_synthetic(&spec, a.n);
    save_documents(&a.out, &docs)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Validation(format!("--threads: {e}")))?;
    }
    let file = FileConfig::load(cli.config.as_deref())?;
    let seed = cli.seed;
    match &cli.command {
        Command::Vocab(a) => cmd_vocab(a),
        Command::Tokenize(a) => cmd_tokenize(a),
        Command::Numbers(a) => cmd_numbers(a),
        Command::GenPretrain(a) => cmd_gen_pretrain(a, seed),
        Command::Pretrain(a) => cmd_pretrain(a, seed, &file),
        Command::Finetune(a) => cmd_finetune(a, seed, &file),
        Command::Predict(a) => cmd_predict(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Eval(a) => cmd_eval(a),
        Command::IngestSroie(a) => cmd_ingest(a),
        Command::Synth(a) => cmd_synth(a, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
