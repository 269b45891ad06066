//! Exact decimal parsing of number-like OCR words.
//!
//! cargo run --example parse_numbers

use docie::data::{gen_synthetic, SyntheticSpec};
use docie::numparse::{find_numbers, parse_number};

fn main() {
    for word in [
        "1,234.50",
        "1.234,50",
        "$19.99",
        "-0.5",
        "(12.00)",
        "12/03/2021",
        "INV-0042",
        "total",
    ] {
        match parse_number(word) {
            Some(v) => println!("{word:>12} -> {v}"),
            None => println!("{word:>12} -> not a number"),
        }
    }

    let doc = &gen_synthetic(&SyntheticSpec::default(), 1)[0];
    let found = find_numbers(doc);
    println!("document {} has {} numbers among {} words", doc.id, found.len(), doc.words.len());
    for n in found.iter().take(5) {
        println!("  word {:>3} {:>12} = {}", n.word_read_index, n.raw, n.value);
    }
}
