use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ops::{self, LayerNormCache};
use super::params::{Layer, Params};
use super::{Head, ModelConfig, Scalar};
use crate::doc::BBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel<T> {
    pub config: ModelConfig,
    pub params: Params<T>,
}

/// One supervised sequence for any head.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub ids: Vec<u32>,
    pub boxes: Vec<BBox>,
    pub targets: Vec<u32>,
    pub loss_mask: Vec<bool>,
}

impl From<&crate::pretrain::PretrainExample> for TrainExample {
    fn from(ex: &crate::pretrain::PretrainExample) -> Self {
        TrainExample {
            ids: ex.input_ids.clone(),
            boxes: ex.input_boxes.clone(),
            targets: ex.targets.clone(),
            loss_mask: ex.loss_mask.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    /// Final hidden states, one row of `d_model` values per position.
    pub hidden: Vec<Vec<T>>,
    /// Softmax distribution of the requested head per position.
    pub probs: Vec<Vec<T>>,
}

struct LayerCache<T> {
    ln1: LayerNormCache<T>,
    h1: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// `[head][query][key]`
    attn: Vec<T>,
    ctx: Vec<T>,
    drop1: Option<Vec<T>>,
    ln2: LayerNormCache<T>,
    h2: Vec<T>,
    f_pre: Vec<T>,
    f_act: Vec<T>,
    drop2: Option<Vec<T>>,
}

struct Cache<T> {
    n: usize,
    drop0: Option<Vec<T>>,
    layers: Vec<LayerCache<T>>,
    lnf: LayerNormCache<T>,
    hf: Vec<T>,
}

fn dropout_mask<T: Scalar>(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<T> {
    let scale = T::from_f64(1.0 / (1.0 - p)).unwrap();
    (0..len).map(|_| if rng.gen_bool(1.0 - p) { scale } else { T::zero() }).collect()
}

fn apply_mask<T: Scalar>(x: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(v, &s)| *v = *v * s);
    }
}

/// Index of the position after the last non-pad token.
pub(crate) fn trimmed_len(ids: &[u32], pad: u32) -> usize {
    ids.iter().rposition(|&id| id != pad).map_or(0, |i| i + 1)
}

impl<T: Scalar> TaggerModel<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = Params::init(&config, seed);
        Ok(TaggerModel { config, params })
    }

    /// Replaces the tag head, e.g. to fine-tune a pre-trained body on a new scheme.
    pub fn reset_tag_head(&mut self, num_tags: usize, seed: u64) -> Result<()> {
        let config = ModelConfig {
            num_tags,
            ..self.config.clone()
        };
        config.validate()?;
        self.params.reset_tag_head(num_tags, seed);
        self.config = config;
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    fn head_params<'a>(&self, p: &'a Params<T>, head: Head) -> (&'a [T], &'a [T]) {
        match head {
            Head::Tag => (&p.tag_w.data, &p.tag_b.data),
            Head::NumericOrdering => (&p.no_w.data, &p.no_b.data),
            Head::LayoutInclusion => (&p.li_w.data, &p.li_b.data),
            Head::Mvlm => (&p.mvlm_w.data, &p.mvlm_b.data),
        }
    }

    pub fn validate_input(&self, ids: &[u32], boxes: &[BBox]) -> Result<()> {
        if ids.len() != boxes.len() {
            return Err(Error::Validation(format!("{} ids but {} boxes", ids.len(), boxes.len())));
        }
        if ids.len() > self.config.max_len {
            return Err(Error::Validation(format!(
                "sequence of {} tokens exceeds max_len {}",
                ids.len(),
                self.config.max_len
            )));
        }
        if let Some(id) = ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(Error::Validation(format!("token id {id} outside the vocabulary")));
        }
        for b in boxes {
            b.validate()?;
        }
        Ok(())
    }

    fn run(&self, ids: &[u32], boxes: &[BBox], rng: Option<&mut ChaCha8Rng>) -> Cache<T> {
        let cfg = &self.config;
        let p = &self.params;
        let (n, d, f, nh) = (ids.len(), cfg.d_model, cfg.d_ff, cfg.n_heads);
        let dh = d / nh;
        let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
        let keep: Vec<bool> = ids.iter().map(|&id| id != cfg.pad_id).collect();
        let mut rng = rng.filter(|_| cfg.dropout > 0.0);

        let mut x = vec![T::zero(); n * d];
        for i in 0..n {
            let b = boxes[i];
            let rows = [
                p.tok.row(ids[i] as usize),
                p.pos.row(i),
                p.x1.row(b.x1 as usize),
                p.y1.row(b.y1 as usize),
                p.x2.row(b.x2 as usize),
                p.y2.row(b.y2 as usize),
            ];
            let out = &mut x[i * d..(i + 1) * d];
            for row in rows {
                out.iter_mut().zip(row).for_each(|(o, &v)| *o = *o + v);
            }
        }
        let drop0 = rng.as_deref_mut().map(|r| dropout_mask(n * d, cfg.dropout, r));
        apply_mask(&mut x, &drop0);

        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in &p.layers {
            let (h1, ln1) = ops::layer_norm(&x, &l.ln1_g.data, &l.ln1_b.data, d);
            let q = ops::linear(&h1, &l.wq.data, &l.bq.data, n, d, d);
            let k = ops::linear(&h1, &l.wk.data, &l.bk.data, n, d, d);
            let v = ops::linear(&h1, &l.wv.data, &l.bv.data, n, d, d);
            let mut attn = vec![T::zero(); nh * n * n];
            let mut ctx = vec![T::zero(); n * d];
            for h in 0..nh {
                let cols = h * dh..(h + 1) * dh;
                for i in 0..n {
                    let row = &mut attn[(h * n + i) * n..(h * n + i + 1) * n];
                    let qi = &q[i * d..][cols.clone()];
                    for j in 0..n {
                        row[j] = ops::dot(qi, &k[j * d..][cols.clone()]) * scale;
                    }
                    ops::masked_softmax(row, &keep);
                    let out = &mut ctx[i * d..][cols.clone()];
                    for j in 0..n {
                        let pij = row[j];
                        if pij == T::zero() {
                            continue;
                        }
                        out.iter_mut()
                            .zip(&v[j * d..][cols.clone()])
                            .for_each(|(o, &vv)| *o = *o + pij * vv);
                    }
                }
            }
            let mut a = ops::linear(&ctx, &l.wo.data, &l.bo.data, n, d, d);
            let drop1 = rng.as_deref_mut().map(|r| dropout_mask(n * d, cfg.dropout, r));
            apply_mask(&mut a, &drop1);
            x.iter_mut().zip(&a).for_each(|(xv, &av)| *xv = *xv + av);

            let (h2, ln2) = ops::layer_norm(&x, &l.ln2_g.data, &l.ln2_b.data, d);
            let f_pre = ops::linear(&h2, &l.w1.data, &l.b1.data, n, d, f);
            let f_act: Vec<T> = f_pre.iter().map(|&v| ops::gelu(v)).collect();
            let mut m = ops::linear(&f_act, &l.w2.data, &l.b2.data, n, f, d);
            let drop2 = rng.as_deref_mut().map(|r| dropout_mask(n * d, cfg.dropout, r));
            apply_mask(&mut m, &drop2);
            x.iter_mut().zip(&m).for_each(|(xv, &mv)| *xv = *xv + mv);

            layers.push(LayerCache {
                ln1,
                h1,
                q,
                k,
                v,
                attn,
                ctx,
                drop1,
                ln2,
                h2,
                f_pre,
                f_act,
                drop2,
            });
        }
        let (hf, lnf) = ops::layer_norm(&x, &p.lnf_g.data, &p.lnf_b.data, d);
        Cache { n, drop0, layers, lnf, hf }
    }

    fn logits(&self, cache: &Cache<T>, head: Head) -> Vec<T> {
        let (w, b) = self.head_params(&self.params, head);
        ops::linear(&cache.hf, w, b, cache.n, self.config.d_model, head.classes(&self.config))
    }

    /// Inference forward pass (no dropout). Output length equals input length.
    pub fn forward(&self, ids: &[u32], boxes: &[BBox], head: Head) -> Result<ForwardOutput<T>> {
        self.validate_input(ids, boxes)?;
        let cache = self.run(ids, boxes, None);
        let c = head.classes(&self.config);
        let d = self.config.d_model;
        let probs = self
            .logits(&cache, head)
            .chunks(c)
            .map(|r| {
                let mut r = r.to_vec();
                ops::softmax(&mut r);
                r
            })
            .collect();
        let hidden = cache.hf.chunks(d).map(<[T]>::to_vec).collect();
        Ok(ForwardOutput { hidden, probs })
    }

    /// Independent forward passes, in input order.
    pub fn forward_batch(&self, inputs: &[(Vec<u32>, Vec<BBox>)], head: Head) -> Result<Vec<ForwardOutput<T>>> {
        inputs.par_iter().map(|(ids, boxes)| self.forward(ids, boxes, head)).collect()
    }

    fn check_example(&self, ex: &TrainExample, head: Head) -> Result<()> {
        self.validate_input(&ex.ids, &ex.boxes)?;
        if ex.targets.len() != ex.ids.len() || ex.loss_mask.len() != ex.ids.len() {
            return Err(Error::Validation("targets and loss mask must match the sequence length".into()));
        }
        let c = head.classes(&self.config) as u32;
        if let Some(t) = ex.targets.iter().zip(&ex.loss_mask).find(|(&t, &m)| m && t >= c).map(|(t, _)| t) {
            return Err(Error::Validation(format!("target {t} outside the {} head", head.name())));
        }
        Ok(())
    }

    /// Trailing pads carry no loss and cannot influence other positions, so
    /// they are cut before the pass.
    fn trim(&self, ex: &TrainExample) -> usize {
        let n = trimmed_len(&ex.ids, self.config.pad_id);
        ex.loss_mask.iter().rposition(|&m| m).map_or(n, |last| n.max(last + 1))
    }

    /// Summed cross-entropy and number of loss positions of one example.
    fn example_loss(&self, ex: &TrainExample, head: Head) -> (T, usize) {
        let n = self.trim(ex);
        let cache = self.run(&ex.ids[..n], &ex.boxes[..n], None);
        let logits = self.logits(&cache, head);
        let c = head.classes(&self.config);
        let mut total = T::zero();
        let mut count = 0;
        for i in (0..n).filter(|&i| ex.loss_mask[i]) {
            total = total + cross_entropy(&logits[i * c..(i + 1) * c], ex.targets[i] as usize).0;
            count += 1;
        }
        (total, count)
    }

    /// Mean cross-entropy over every loss position of the batch.
    pub fn loss(&self, batch: &[TrainExample], head: Head) -> Result<T> {
        for ex in batch {
            self.check_example(ex, head)?;
        }
        let parts: Vec<(T, usize)> = batch.par_iter().map(|ex| self.example_loss(ex, head)).collect();
        let count: usize = parts.iter().map(|p| p.1).sum();
        if count == 0 {
            return Err(Error::EmptyLoss);
        }
        let total = parts.iter().fold(T::zero(), |a, p| a + p.0);
        Ok(total / T::from_usize(count).unwrap())
    }

    /// Mean cross-entropy over the batch's loss positions and its gradient.
    ///
    /// With `dropout_seed` set and a positive dropout rate, example `i` draws
    /// its masks from a generator seeded by `dropout_seed + i`.
    pub fn loss_and_grad(&self, batch: &[TrainExample], head: Head, dropout_seed: Option<u64>) -> Result<(T, Params<T>)> {
        for ex in batch {
            self.check_example(ex, head)?;
        }
        let count: usize = batch.iter().map(|ex| ex.loss_mask.iter().filter(|&&m| m).count()).sum();
        if count == 0 {
            return Err(Error::EmptyLoss);
        }
        let weight = T::one() / T::from_usize(count).unwrap();
        let parts: Vec<(T, Params<T>)> = batch
            .par_iter()
            .enumerate()
            .map(|(i, ex)| {
                let mut rng = dropout_seed.map(|s| ChaCha8Rng::seed_from_u64(s.wrapping_add(i as u64)));
                self.example_grad(ex, head, weight, rng.as_mut())
            })
            .collect();
        let mut parts = parts.into_iter();
        let (mut loss, mut grads) = parts.next().expect("non-empty batch");
        for (l, g) in parts {
            loss = loss + l;
            grads.add_scaled(&g, T::one());
        }
        Ok((loss, grads))
    }

    fn example_grad(&self, ex: &TrainExample, head: Head, weight: T, rng: Option<&mut ChaCha8Rng>) -> (T, Params<T>) {
        let cfg = &self.config;
        let n = self.trim(ex);
        let (ids, boxes) = (&ex.ids[..n], &ex.boxes[..n]);
        let cache = self.run(ids, boxes, rng);
        let c = head.classes(cfg);
        let d = cfg.d_model;
        let logits = self.logits(&cache, head);
        let mut dlogits = vec![T::zero(); n * c];
        let mut loss = T::zero();
        for i in (0..n).filter(|&i| ex.loss_mask[i]) {
            let (l, grad) = cross_entropy(&logits[i * c..(i + 1) * c], ex.targets[i] as usize);
            loss = loss + l * weight;
            dlogits[i * c..(i + 1) * c].iter_mut().zip(grad).for_each(|(o, g)| *o = g * weight);
        }
        let mut grads = self.params.zeros_like();
        let (w, _) = self.head_params(&self.params, head);
        let dhf = {
            let (dw, db) = match head {
                Head::Tag => (&mut grads.tag_w.data, &mut grads.tag_b.data),
                Head::NumericOrdering => (&mut grads.no_w.data, &mut grads.no_b.data),
                Head::LayoutInclusion => (&mut grads.li_w.data, &mut grads.li_b.data),
                Head::Mvlm => (&mut grads.mvlm_w.data, &mut grads.mvlm_b.data),
            };
            ops::linear_backward(&cache.hf, w, &dlogits, n, d, c, dw, db)
        };
        let mut dx = ops::layer_norm_backward(
            &dhf,
            &cache.lnf,
            &self.params.lnf_g.data,
            d,
            &mut grads.lnf_g.data,
            &mut grads.lnf_b.data,
        );
        for (li, (layer, lc)) in self.params.layers.iter().zip(&cache.layers).enumerate().rev() {
            self.layer_backward(layer, lc, n, &mut dx, &mut grads.layers[li]);
        }
        apply_mask(&mut dx, &cache.drop0);
        for i in 0..n {
            let g = &dx[i * d..(i + 1) * d];
            let b = boxes[i];
            for (table, row) in [
                (&mut grads.tok, ids[i] as usize),
                (&mut grads.pos, i),
                (&mut grads.x1, b.x1 as usize),
                (&mut grads.y1, b.y1 as usize),
                (&mut grads.x2, b.x2 as usize),
                (&mut grads.y2, b.y2 as usize),
            ] {
                table.row_mut(row).iter_mut().zip(g).for_each(|(o, &v)| *o = *o + v);
            }
        }
        (loss, grads)
    }

    /// Backpropagates one layer; `dx` holds the gradient of the layer output on
    /// entry and of its input on exit.
    fn layer_backward(&self, l: &Layer<T>, lc: &LayerCache<T>, n: usize, dx: &mut [T], g: &mut Layer<T>) {
        let cfg = &self.config;
        let (d, f, nh) = (cfg.d_model, cfg.d_ff, cfg.n_heads);
        let dh = d / nh;
        let scale = T::one() / T::from_usize(dh).unwrap().sqrt();

        // feed-forward branch
        let mut dm = dx.to_vec();
        apply_mask(&mut dm, &lc.drop2);
        let dact = ops::linear_backward(&lc.f_act, &l.w2.data, &dm, n, f, d, &mut g.w2.data, &mut g.b2.data);
        let dpre: Vec<T> = dact.iter().zip(&lc.f_pre).map(|(&da, &x)| da * ops::gelu_grad(x)).collect();
        let dh2 = ops::linear_backward(&lc.h2, &l.w1.data, &dpre, n, d, f, &mut g.w1.data, &mut g.b1.data);
        let dres = ops::layer_norm_backward(&dh2, &lc.ln2, &l.ln2_g.data, d, &mut g.ln2_g.data, &mut g.ln2_b.data);
        dx.iter_mut().zip(&dres).for_each(|(a, &b)| *a = *a + b);

        // attention branch
        let mut da = dx.to_vec();
        apply_mask(&mut da, &lc.drop1);
        let dctx = ops::linear_backward(&lc.ctx, &l.wo.data, &da, n, d, d, &mut g.wo.data, &mut g.bo.data);
        let mut dq = vec![T::zero(); n * d];
        let mut dk = vec![T::zero(); n * d];
        let mut dv = vec![T::zero(); n * d];
        let mut dp = vec![T::zero(); n];
        for h in 0..nh {
            let cols = h * dh..(h + 1) * dh;
            for i in 0..n {
                let p = &lc.attn[(h * n + i) * n..(h * n + i + 1) * n];
                let dci = &dctx[i * d..][cols.clone()];
                let mut inner = T::zero();
                for j in 0..n {
                    dp[j] = ops::dot(dci, &lc.v[j * d..][cols.clone()]);
                    inner = inner + p[j] * dp[j];
                    let pij = p[j];
                    dv[j * d..][cols.clone()]
                        .iter_mut()
                        .zip(dci)
                        .for_each(|(o, &gv)| *o = *o + pij * gv);
                }
                for j in 0..n {
                    let ds = p[j] * (dp[j] - inner) * scale;
                    if ds == T::zero() {
                        continue;
                    }
                    let kj = &lc.k[j * d..][cols.clone()];
                    dq[i * d..][cols.clone()].iter_mut().zip(kj).for_each(|(o, &kv)| *o = *o + ds * kv);
                    let qi = &lc.q[i * d..][cols.clone()];
                    dk[j * d..][cols.clone()].iter_mut().zip(qi).for_each(|(o, &qv)| *o = *o + ds * qv);
                }
            }
        }
        let mut dh1 = ops::linear_backward(&lc.h1, &l.wq.data, &dq, n, d, d, &mut g.wq.data, &mut g.bq.data);
        let dk_in = ops::linear_backward(&lc.h1, &l.wk.data, &dk, n, d, d, &mut g.wk.data, &mut g.bk.data);
        let dv_in = ops::linear_backward(&lc.h1, &l.wv.data, &dv, n, d, d, &mut g.wv.data, &mut g.bv.data);
        for ((a, &b), &c) in dh1.iter_mut().zip(&dk_in).zip(&dv_in) {
            *a = *a + b + c;
        }
        let dres = ops::layer_norm_backward(&dh1, &lc.ln1, &l.ln1_g.data, d, &mut g.ln1_g.data, &mut g.ln1_b.data);
        dx.iter_mut().zip(&dres).for_each(|(a, &b)| *a = *a + b);
    }
}

/// Cross-entropy of one logit row and its gradient `softmax - onehot`.
fn cross_entropy<T: Scalar>(logits: &[T], target: usize) -> (T, Vec<T>) {
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &v| a + v);
    let loss = sum.ln() + max - logits[target];
    let mut grad: Vec<T> = exps.iter().map(|&e| e / sum).collect();
    grad[target] = grad[target] - T::one();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(vocab: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab,
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            max_len: 16,
            num_tags: 5,
            dropout: 0.0,
            pad_id: 0,
        }
    }

    fn boxes(n: usize) -> Vec<BBox> {
        (0..n)
            .map(|i| BBox::new(i as u16 * 10, 5, i as u16 * 10 + 8, 15).unwrap())
            .collect()
    }

    #[test]
    fn output_shape_and_normalization() {
        let m = TaggerModel::<f32>::new(tiny(20), 1).unwrap();
        for head in [Head::Tag, Head::NumericOrdering, Head::LayoutInclusion, Head::Mvlm] {
            let out = m.forward(&[2, 7, 9, 3], &boxes(4), head).unwrap();
            assert_eq!(out.probs.len(), 4);
            assert_eq!(out.hidden.len(), 4);
            for row in &out.probs {
                assert_eq!(row.len(), head.classes(&m.config));
                assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn all_pad_sequence_is_finite() {
        let m = TaggerModel::<f64>::new(tiny(20), 1).unwrap();
        let out = m.forward(&[0; 5], &[BBox::ZERO; 5], Head::Tag).unwrap();
        assert!(out.probs.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn pads_do_not_change_other_positions() {
        let m = TaggerModel::<f32>::new(tiny(20), 4).unwrap();
        let short = m.forward(&[2, 7, 9, 3], &boxes(4), Head::Tag).unwrap();
        let mut ids = vec![2, 7, 9, 3];
        ids.extend([0; 6]);
        let mut b = boxes(4);
        b.extend([BBox::ZERO; 6]);
        let long = m.forward(&ids, &b, Head::Tag).unwrap();
        assert_eq!(&long.probs[..4], &short.probs[..]);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let m = TaggerModel::<f32>::new(tiny(20), 1).unwrap();
        assert!(m.forward(&[25], &boxes(1), Head::Tag).is_err());
        assert!(m.forward(&[1; 17], &boxes(17), Head::Tag).is_err());
        let ex = TrainExample {
            ids: vec![2, 3],
            boxes: boxes(2),
            targets: vec![0, 0],
            loss_mask: vec![false, false],
        };
        assert!(matches!(m.loss_and_grad(&[ex], Head::Tag, None), Err(Error::EmptyLoss)));
        let mut cfg = tiny(20);
        cfg.n_heads = 3;
        assert!(TaggerModel::<f32>::new(cfg, 0).is_err());
    }

    #[test]
    fn gradient_is_bit_stable_and_batch_order_only_sums() {
        let m = TaggerModel::<f32>::new(tiny(20), 2).unwrap();
        let ex = |ids: Vec<u32>| TrainExample {
            boxes: boxes(ids.len()),
            targets: ids.iter().map(|&i| i % 3).collect(),
            loss_mask: vec![true; ids.len()],
            ids,
        };
        let batch = vec![ex(vec![2, 5, 6]), ex(vec![9, 1, 4, 4, 7])];
        let a = m.loss_and_grad(&batch, Head::NumericOrdering, None).unwrap();
        let b = m.loss_and_grad(&batch, Head::NumericOrdering, None).unwrap();
        assert_eq!(a, b);
        let loss = m.loss(&batch, Head::NumericOrdering).unwrap();
        assert!((loss - a.0).abs() < 1e-6);
    }
}
