//! File formats, SROIE ingestion and the synthetic corpus generator.

pub mod jsonl;
pub mod sroie;
pub mod synth;

pub use jsonl::{load_documents, read_documents, save_documents, write_documents, PredictionRecord};
pub use sroie::{ingest_sroie, IngestReport, OcrPatches};
pub use synth::{gen_synthetic, SyntheticSpec, SYNTH_FIELDS};
