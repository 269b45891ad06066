//! Generate a small annotated corpus and write it as JSONL.
//!
//! cargo run --example synthetic_corpus -- [n_docs] [out.jsonl]

use anyhow::Result;
use docie::data::{gen_synthetic, save_documents, SyntheticSpec};
use docie::doc::cap_per_issuer;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(24);
    let out = args.next();

    let docs = gen_synthetic(
        &SyntheticSpec {
            issuers: 4,
            ..Default::default()
        },
        n,
    );
    let first = &docs[0];
    println!("{} ({:?}), {} words", first.id, first.issuer, first.words.len());
    for ann in &first.annotations {
        let span = ann.word_span.map(|s| first.span_text(s));
        println!("  {:<10} {:<14} located as {span:?}", ann.field.as_str(), ann.value);
    }

    let capped = cap_per_issuer(&docs, 3)?;
    println!("{} documents, {} after capping at 3 per issuer", docs.len(), capped.len());
    if let Some(path) = out {
        save_documents(&path, &docs)?;
        println!("wrote {path}");
    }
    Ok(())
}
