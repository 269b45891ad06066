//! Decode one field from a hand-written confidence matrix with both decoders.
//!
//! cargo run --example confopt_decoding

use anyhow::Result;
use docie::decode::{decode_adhoc, decode_confopt, ConfidenceMatrix, TagScheme};

fn main() -> Result<()> {
    let scheme = TagScheme::parse("total")?;
    // columns: O, B, I, E, S
    let probs: Vec<Vec<f64>> = vec![
        vec![0.90, 0.04, 0.02, 0.02, 0.02],
        vec![0.30, 0.45, 0.05, 0.05, 0.15],
        vec![0.50, 0.05, 0.40, 0.03, 0.02],
        vec![0.20, 0.05, 0.10, 0.60, 0.05],
        vec![0.85, 0.05, 0.05, 0.03, 0.02],
    ];

    // argmax reads O B O E O, so Ad-Hoc keeps the lone B and drops the E
    for span in decode_adhoc(&probs, &scheme)? {
        println!(
            "Ad-Hoc finds tokens {}..={} with mean confidence {:.2}",
            span.start,
            span.end,
            span.mean_score()
        );
    }

    let cm = ConfidenceMatrix::from_tag_probs(&probs, &scheme, 0)?;
    let best = decode_confopt(&cm);
    println!(
        "ConfOpt picks tokens {}..={} tagged {:?} with score {:.2}",
        best.start,
        best.end,
        best.tags(),
        best.score
    );
    Ok(())
}
