//! Generate one example of each pre-training task and show what changed.
//!
//! cargo run --example pretrain_tasks

use anyhow::Result;
use docie::data::{gen_synthetic, SyntheticSpec};
use docie::numparse::find_numbers;
use docie::pretrain::{gen_layout_inclusion, gen_mvlm, gen_numeric_ordering, make_pretrain_stream, PretrainTask, TaskMeta};
use docie::tokenizer::{window_document, Vocab};

fn main() -> Result<()> {
    let docs = gen_synthetic(&SyntheticSpec::default(), 32);
    let vocab = Vocab::build_from_corpus(&docs, 2000)?;
    let seq = &window_document(&docs[0], &vocab, 128)?[0];

    let mvlm = gen_mvlm(seq, &vocab, 1);
    println!("MVLM: {} of {} positions carry a target", mvlm.loss_positions(), mvlm.len());

    let no = gen_numeric_ordering(seq, &find_numbers(&docs[0]), &vocab, 1)?;
    if let TaskMeta::NumericOrdering {
        anchor_value,
        text_masked,
        box_masked,
        ..
    } = &no.meta
    {
        println!(
            "NO: anchor {anchor_value}, {} numbers labelled, text masked {text_masked:?}, boxes masked {box_masked:?}",
            no.loss_positions()
        );
    }

    let li = gen_layout_inclusion(seq, &vocab, 1)?;
    if let TaskMeta::LayoutInclusion { rect, box_masked } = &li.meta {
        let inside = (0..li.len()).filter(|&i| li.loss_mask[i] && li.targets[i] == 1).count();
        println!("LI: rectangle {rect}, {inside} tokens inside, {} boxes masked", box_masked.len());
    }

    let tasks = PretrainTask::parse_list("mvlm,no,li")?;
    let stream = make_pretrain_stream(&docs, &vocab, &tasks, 4, 128, 7)?;
    for batch in stream.take(6) {
        let batch = batch?;
        let positions: usize = batch.examples.iter().map(|e| e.loss_positions()).sum();
        println!(
            "batch of {} {} examples, {positions} loss positions",
            batch.examples.len(),
            batch.task
        );
    }
    Ok(())
}
