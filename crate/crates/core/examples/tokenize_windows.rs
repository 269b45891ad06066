//! WordPiece tokenization and 512-token windowing of a synthetic document.
//!
//! cargo run --example tokenize_windows

use anyhow::Result;
use docie::data::{gen_synthetic, SyntheticSpec};
use docie::tokenizer::{detokenize, window_document, wordpiece_tokenize, Vocab};

fn main() -> Result<()> {
    let docs = gen_synthetic(&SyntheticSpec::default(), 64);
    let vocab = Vocab::build_from_corpus(&docs, 300)?;
    println!("vocabulary of {} entries", vocab.len());

    for word in ["Invoice", "PO-20415", "1,234.50", "Überweisung"] {
        let pieces = wordpiece_tokenize(word, &vocab);
        let texts: Vec<&str> = pieces.iter().map(|p| p.text.as_str()).collect();
        println!("{word:>12} -> {texts:?} -> {:?}", detokenize(&pieces));
    }

    let doc = &docs[0];
    for max_len in [512, 32] {
        let windows = window_document(doc, &vocab, max_len)?;
        let spans: Vec<_> = windows.iter().filter_map(|w| w.word_range()).collect();
        println!(
            "{} words, max_len {max_len}: {} windows over words {spans:?}",
            doc.words.len(),
            windows.len()
        );
    }
    Ok(())
}
