//! Ingest a two-receipt sample in the SROIE file layout.
//!
//! cargo run --example ingest_sroie

use std::fs;

use anyhow::Result;
use docie::data::ingest_sroie;

fn main() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let (ocr, gold) = (dir.path().join("ocr"), dir.path().join("gold"));
    fs::create_dir_all(&ocr)?;
    fs::create_dir_all(&gold)?;

    fs::write(
        ocr.join("r001.txt"),
        "20,10,300,10,300,40,20,40,KEDAI MAJU SDN BHD\n\
         20,50,320,50,320,80,20,80,NO 3 JALAN MAWAR\n\
         20,90,200,90,200,120,20,120,DATE: 02/05/2018\n\
         20,300,120,300,120,330,20,330,TOTAL\n\
         200,300,280,300,280,330,200,330,12.50\n",
    )?;
    fs::write(
        gold.join("r001.txt"),
        r#"{"company": "KEDAI MAJU SDN BHD", "address": "NO 3 JALAN MAWAR", "date": "02/05/2018", "total": "12.50"}"#,
    )?;
    fs::write(ocr.join("r002.txt"), "10,10,oops\n")?;

    let report = ingest_sroie(&ocr, &gold, None)?;
    for doc in &report.documents {
        println!("{}: {} words", doc.id, doc.words.len());
        for ann in &doc.annotations {
            println!("  {:<8} {:<20} {:?}", ann.field.as_str(), ann.value, ann.word_span);
        }
    }
    for (path, why) in &report.skipped {
        println!("skipped {}: {why}", path.display());
    }
    println!("unresolved {:?}", report.unresolved);
    Ok(())
}
