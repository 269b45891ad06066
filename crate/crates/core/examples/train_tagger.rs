//! Fine-tune a small tagger on synthetic purchase orders and score both decoders.
//!
//! cargo run --release --example train_tagger -- [train_docs] [steps] [lr]

use std::time::Instant;

use anyhow::Result;
use docie::data::{gen_synthetic, SyntheticSpec, SYNTH_FIELDS};
use docie::decode::{DecodeMethod, TagScheme};
use docie::doc::FieldName;
use docie::eval::score;
use docie::model::{extract_fields, finetune, ModelConfig, TaggerModel, TrainConfig};
use docie::tokenizer::Vocab;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let n_train: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(32);
    let steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(150);
    let lr: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3e-3);

    let docs = gen_synthetic(
        &SyntheticSpec {
            seed: 7,
            ..Default::default()
        },
        n_train + 32,
    );
    let (train, test) = docs.split_at(n_train);
    let vocab = Vocab::build_from_corpus(train, 2000)?;
    let scheme = TagScheme::new(SYNTH_FIELDS.iter().map(|f| FieldName::from(*f)).collect())?;

    let config = ModelConfig {
        d_model: 32,
        n_heads: 4,
        d_ff: 64,
        max_len: 256,
        dropout: 0.0,
        ..ModelConfig::new(vocab.len(), scheme.num_tags())
    };
    let mut model = TaggerModel::<f32>::new(config, 1)?;
    println!("{} parameters, vocabulary of {}", model.parameter_count(), vocab.len());

    let cfg = TrainConfig {
        lr,
        warmup: steps / 10,
        accum: 1,
        micro_batch: 8,
        steps,
        seed: 1,
    };
    let started = Instant::now();
    let log = finetune(&mut model, train, &vocab, &scheme, &cfg)?;
    let last = log.last().map_or(f64::NAN, |r| r.loss);
    println!("{steps} steps in {:.1?}, loss {:.4} -> {last:.4}", started.elapsed(), log[0].loss);

    for (name, set) in [("train", train), ("test", test)] {
        for method in [DecodeMethod::AdHoc, DecodeMethod::ConfOpt] {
            let preds = extract_fields(&model, set, &vocab, &scheme, method, None)?;
            let report = score(&preds, set, scheme.fields(), false)?;
            println!("{name:>5} {method:?}: F1 {:.2}", report.f1);
        }
    }
    Ok(())
}
