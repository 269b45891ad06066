use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::doc::BBox;

fn cfg(vocab: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        d_model: 16,
        n_layers: 1,
        n_heads: 2,
        d_ff: 32,
        max_len: 12,
        num_tags: 9,
        dropout: 0.0,
        pad_id: 0,
    }
}

fn random_example(rng: &mut ChaCha8Rng, vocab: u32, classes: u32, n: usize, pads: usize) -> TrainExample {
    let mut ids: Vec<u32> = (0..n).map(|_| rng.gen_range(1..vocab)).collect();
    let mut boxes: Vec<BBox> = (0..n)
        .map(|_| {
            let x: u16 = rng.gen_range(0..900);
            let y: u16 = rng.gen_range(0..900);
            BBox::new(x, y, x + rng.gen_range(0..100), y + rng.gen_range(0..100)).unwrap()
        })
        .collect();
    let mut loss_mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
    loss_mask[0] = true;
    ids.extend(std::iter::repeat_n(0, pads));
    boxes.extend(std::iter::repeat_n(BBox::ZERO, pads));
    loss_mask.extend(std::iter::repeat_n(false, pads));
    let targets = (0..n + pads).map(|_| rng.gen_range(0..classes)).collect();
    TrainExample {
        ids,
        boxes,
        targets,
        loss_mask,
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut model = TaggerModel::<f64>::new(cfg(23), 5).unwrap();
    // larger weights than the init so that every path carries signal
    for t in model.params.tensors_mut() {
        t.data.iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
    }
    for head in [Head::Tag, Head::NumericOrdering, Head::LayoutInclusion, Head::Mvlm] {
        let classes = head.classes(&model.config) as u32;
        let batch = vec![
            random_example(&mut rng, 23, classes, 6, 2),
            random_example(&mut rng, 23, classes, 4, 0),
        ];
        let (_, grads) = model.loss_and_grad(&batch, head, None).unwrap();
        let grad_tensors: Vec<Tensor<f64>> = grads.tensors().into_iter().cloned().collect();
        let mut worst = 0.0f64;
        for (ti, g) in grad_tensors.iter().enumerate() {
            let nonzero: Vec<usize> = (0..g.len()).filter(|&j| g.data[j] != 0.0).collect();
            let picks: Vec<usize> = if nonzero.is_empty() {
                vec![0]
            } else {
                (0..4).map(|_| nonzero[rng.gen_range(0..nonzero.len())]).collect()
            };
            for j in picks {
                let orig = model.params.tensors()[ti].data[j];
                model.params.tensors_mut()[ti].data[j] = orig + 1e-4;
                let up = model.loss(&batch, head).unwrap();
                model.params.tensors_mut()[ti].data[j] = orig - 1e-4;
                let down = model.loss(&batch, head).unwrap();
                model.params.tensors_mut()[ti].data[j] = orig;
                let num = (up - down) / 2e-4;
                let ana = g.data[j];
                let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-6);
                worst = worst.max(rel);
                assert!(rel < 1e-4, "{} [{}] {:?}: analytic {ana} numeric {num}", g.name, j, head);
            }
        }
        assert!(worst < 1e-4);
    }
}

#[test]
fn near_uniform_initial_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut c = cfg(500);
    c.d_model = 32;
    c.d_ff = 64;
    c.n_heads = 4;
    let model = TaggerModel::<f32>::new(c, 9).unwrap();
    for head in [Head::Tag, Head::NumericOrdering, Head::LayoutInclusion, Head::Mvlm] {
        let classes = head.classes(&model.config);
        let batch: Vec<_> = (0..4).map(|_| random_example(&mut rng, 500, classes as u32, 10, 0)).collect();
        let loss = model.loss(&batch, head).unwrap() as f64;
        assert!((loss - (classes as f64).ln()).abs() < 1e-3, "{head:?}: {loss}");
    }
}

#[test]
fn encoder_is_permutation_equivariant_without_positions() {
    let mut model = TaggerModel::<f64>::new(cfg(23), 1).unwrap();
    for t in [
        &mut model.params.pos,
        &mut model.params.x1,
        &mut model.params.y1,
        &mut model.params.x2,
        &mut model.params.y2,
    ] {
        t.data.iter_mut().for_each(|v| *v = 0.0);
    }
    let ids = [2, 5, 9, 13, 3];
    let boxes = vec![BBox::new(1, 2, 3, 4).unwrap(); 5];
    let a = model.forward(&ids, &boxes, Head::Tag).unwrap();
    let swapped = [2, 9, 5, 13, 3];
    let b = model.forward(&swapped, &boxes, Head::Tag).unwrap();
    for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3), (4, 4)] {
        for (x, y) in a.hidden[i].iter().zip(&b.hidden[j]) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn trailing_pads_do_not_change_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = TaggerModel::<f32>::new(cfg(23), 2).unwrap();
    let mut ex = random_example(&mut rng, 23, 3, 6, 0);
    let short = model.loss_and_grad(&[ex.clone()], Head::NumericOrdering, None).unwrap();
    ex.ids.extend([0; 4]);
    ex.boxes.extend([BBox::ZERO; 4]);
    ex.targets.extend([1; 4]);
    ex.loss_mask.extend([false; 4]);
    let long = model.loss_and_grad(&[ex], Head::NumericOrdering, None).unwrap();
    assert_eq!(short, long);
}

#[test]
fn batch_members_do_not_interact() {
    let model = TaggerModel::<f32>::new(cfg(23), 2).unwrap();
    let inputs: Vec<(Vec<u32>, Vec<BBox>)> = vec![(vec![1, 2, 3], vec![BBox::ZERO; 3]), (vec![4, 5], vec![BBox::MASKED; 2])];
    let fwd = model.forward_batch(&inputs, Head::LayoutInclusion).unwrap();
    let rev: Vec<_> = inputs.iter().rev().cloned().collect();
    let bwd = model.forward_batch(&rev, Head::LayoutInclusion).unwrap();
    assert_eq!(fwd[0], bwd[1]);
    assert_eq!(fwd[1], bwd[0]);
}

#[test]
fn checkpoint_round_trip() {
    let model = TaggerModel::<f32>::new(cfg(23), 2).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &model, &["total".to_string()], 7).unwrap();
    let back: Checkpoint<f32> = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(back.model, model);
    assert_eq!(back.meta.fields, ["total"]);
    assert_eq!(back.meta.steps, 7);
    buf[0] = b'X';
    assert!(read_checkpoint::<f32>(buf.as_slice()).is_err());
}

#[test]
fn training_reduces_loss_deterministically() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let examples: Vec<TrainExample> = (0..4).map(|_| random_example(&mut rng, 23, 9, 8, 2)).collect();
    let train_cfg = TrainConfig {
        lr: 3e-3,
        warmup: 5,
        accum: 2,
        micro_batch: 2,
        steps: 40,
        seed: 3,
    };
    let run = || {
        let mut c = cfg(23);
        c.dropout = 0.1;
        let mut model = TaggerModel::<f32>::new(c, 4).unwrap();
        let log = finetune_with_hook(&mut model, &examples, &train_cfg, |_, _| Ok(())).unwrap();
        (model, log)
    };
    let (m1, log1) = run();
    let (m2, log2) = run();
    assert_eq!(log1, log2);
    assert_eq!(m1, m2);
    assert_eq!(log1.len(), 40);
    assert!(log1.last().unwrap().loss < log1[0].loss);
    assert_eq!(log1[0].lr, 3e-3 / 5.0);
}

#[test]
fn train_config_validation() {
    let mut c = TrainConfig::default();
    assert!(c.validate().is_ok());
    assert_eq!(
        TrainConfig {
            accum: 6,
            micro_batch: 32,
            ..c.clone()
        }
        .effective_batch(),
        192
    );
    c.warmup = c.steps + 1;
    assert!(c.validate().is_err());
}
