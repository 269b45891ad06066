//! Compare fine-tuning from random init with fine-tuning after MVLM + NO + LI
//! pre-training on the same synthetic corpus.
//!
//! cargo run --release --example pretraining_benefit -- [seeds] [pretrain_steps] [finetune_steps]

use std::time::Instant;

use anyhow::Result;
use docie::data::{gen_synthetic, SyntheticSpec, SYNTH_FIELDS};
use docie::decode::{DecodeMethod, TagScheme};
use docie::doc::{Document, FieldName};
use docie::eval::{aggregate, score};
use docie::model::{extract_fields, finetune, pretrain, ModelConfig, TaggerModel, TrainConfig};
use docie::pretrain::{make_pretrain_stream, PretrainTask};
use docie::tokenizer::Vocab;

struct Setup {
    train: Vec<Document>,
    test: Vec<Document>,
    vocab: Vocab,
    scheme: TagScheme,
    config: ModelConfig,
}

fn f1(setup: &Setup, model: &TaggerModel<f32>, method: DecodeMethod) -> Result<f64> {
    let preds = extract_fields(model, &setup.test, &setup.vocab, &setup.scheme, method, None)?;
    Ok(score(&preds, &setup.test, setup.scheme.fields(), false)?.f1)
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let pre_steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(500);
    let ft_steps: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);
    let pre_lr: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3e-3);

    let docs = gen_synthetic(&SyntheticSpec::default(), 320);
    let (train, test) = docs.split_at(256);
    let vocab = Vocab::build_from_corpus(train, 2000)?;
    let scheme = TagScheme::new(SYNTH_FIELDS.iter().map(|f| FieldName::from(*f)).collect())?;
    let config = ModelConfig {
        d_model: 32,
        n_heads: 4,
        d_ff: 64,
        max_len: 256,
        ..ModelConfig::new(vocab.len(), scheme.num_tags())
    };
    let setup = Setup {
        train: train.to_vec(),
        test: test.to_vec(),
        vocab,
        scheme,
        config,
    };
    let tasks = PretrainTask::parse_list("mvlm,no,li")?;

    let mut scratch = Vec::new();
    let mut pretrained = Vec::new();
    for seed in 0..seeds {
        let started = Instant::now();
        let ft = TrainConfig {
            lr: 1e-3,
            warmup: ft_steps / 10,
            accum: 1,
            micro_batch: 8,
            steps: ft_steps,
            seed,
        };
        let mut base = TaggerModel::<f32>::new(setup.config.clone(), seed)?;
        finetune(&mut base, &setup.train, &setup.vocab, &setup.scheme, &ft)?;

        let mut model = TaggerModel::<f32>::new(setup.config.clone(), seed)?;
        let pt = TrainConfig {
            steps: pre_steps,
            warmup: pre_steps / 10,
            lr: pre_lr,
            ..ft.clone()
        };
        let stream = make_pretrain_stream(&setup.train, &setup.vocab, &tasks, pt.micro_batch, setup.config.max_len, seed)?;
        let log = pretrain(&mut model, stream, &pt)?;
        model.reset_tag_head(setup.scheme.num_tags(), seed)?;
        finetune(&mut model, &setup.train, &setup.vocab, &setup.scheme, &ft)?;

        let (a, b) = (f1(&setup, &base, DecodeMethod::AdHoc)?, f1(&setup, &model, DecodeMethod::AdHoc)?);
        let (c, d) = (
            f1(&setup, &base, DecodeMethod::ConfOpt)?,
            f1(&setup, &model, DecodeMethod::ConfOpt)?,
        );
        println!(
            "seed {seed}: scratch {a:.2} / pre-trained {b:.2} (ConfOpt {c:.2} / {d:.2}), last pre-training losses {:?}, {:.0?}",
            log.iter()
                .rev()
                .take(3)
                .map(|r| (r.task.as_str(), (r.loss * 1000.0).round() / 1000.0))
                .collect::<Vec<_>>(),
            started.elapsed()
        );
        scratch.push(a);
        pretrained.push(b);
    }
    println!("random init  {}", aggregate(&scratch));
    println!("pre-trained  {}", aggregate(&pretrained));
    Ok(())
}
