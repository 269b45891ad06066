//! Exact-match scoring and aggregation over runs.
//!
//! cargo run --example evaluate

use anyhow::Result;
use docie::data::{gen_synthetic, PredictionRecord, SyntheticSpec, SYNTH_FIELDS};
use docie::doc::FieldName;
use docie::eval::{aggregate, score};

fn main() -> Result<()> {
    let gold = gen_synthetic(&SyntheticSpec::default(), 10);
    let fields: Vec<FieldName> = SYNTH_FIELDS.iter().map(|f| FieldName::from(*f)).collect();

    // a fake system: right on even documents, drops the date on odd ones and
    // gets every fourth total wrong
    let preds: Vec<PredictionRecord> = gold
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rec = PredictionRecord {
                id: d.id.clone(),
                fields: d.annotations.iter().map(|a| (a.field.clone(), a.value.to_uppercase())).collect(),
            };
            if i % 2 == 1 {
                rec.fields.remove(&FieldName::from("date"));
            }
            if i % 4 == 0 {
                rec.fields.insert(FieldName::from("total"), "0.00".into());
            }
            rec
        })
        .collect();

    let loose = score(&preds, &gold, &fields, false)?;
    println!("{loose}");
    let strict = score(&preds, &gold, &fields, true)?;
    println!("strict F1 {:.2}", strict.f1);

    let runs = [loose.f1, loose.f1 - 2.0, loose.f1 + 1.0];
    println!("over three runs: {}", aggregate(&runs));
    Ok(())
}
