use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ModelConfig, Scalar, COORD_BUCKETS};

pub const INIT_STD: f64 = 0.02;
/// Head weights start much smaller so that initial outputs are near uniform.
pub const HEAD_INIT_STD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Tensor {
            name: name.into(),
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
        }
    }

    fn filled(name: impl Into<String>, shape: &[usize], value: T) -> Self {
        let mut t = Tensor::zeros(name, shape);
        t.data.iter_mut().for_each(|v| *v = value);
        t
    }

    fn normal(name: impl Into<String>, shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Self {
        let dist = Normal::new(0.0, std).expect("positive std");
        let mut t = Tensor::zeros(name, shape);
        t.data.iter_mut().for_each(|v| *v = T::from_f64(dist.sample(rng)).unwrap());
        t
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        let w = self.shape[1];
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let w = self.shape[1];
        &mut self.data[i * w..(i + 1) * w]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub ln1_g: Tensor<T>,
    pub ln1_b: Tensor<T>,
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
    pub ln2_g: Tensor<T>,
    pub ln2_b: Tensor<T>,
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

/// Every trainable tensor of the tagger.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub tok: Tensor<T>,
    pub pos: Tensor<T>,
    pub x1: Tensor<T>,
    pub y1: Tensor<T>,
    pub x2: Tensor<T>,
    pub y2: Tensor<T>,
    pub layers: Vec<Layer<T>>,
    pub lnf_g: Tensor<T>,
    pub lnf_b: Tensor<T>,
    pub tag_w: Tensor<T>,
    pub tag_b: Tensor<T>,
    pub no_w: Tensor<T>,
    pub no_b: Tensor<T>,
    pub li_w: Tensor<T>,
    pub li_b: Tensor<T>,
    pub mvlm_w: Tensor<T>,
    pub mvlm_b: Tensor<T>,
}

impl<T: Scalar> Params<T> {
    /// Normal(0, 0.02) weights, unit gains, zero biases.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = cfg.d_model;
        let f = cfg.d_ff;
        let r = &mut rng;
        let tok = Tensor::normal("tok_emb", &[cfg.vocab_size, d], INIT_STD, r);
        let pos = Tensor::normal("pos_emb", &[cfg.max_len, d], INIT_STD, r);
        let x1 = Tensor::normal("x1_emb", &[COORD_BUCKETS, d], INIT_STD, r);
        let y1 = Tensor::normal("y1_emb", &[COORD_BUCKETS, d], INIT_STD, r);
        let x2 = Tensor::normal("x2_emb", &[COORD_BUCKETS, d], INIT_STD, r);
        let y2 = Tensor::normal("y2_emb", &[COORD_BUCKETS, d], INIT_STD, r);
        let layers = (0..cfg.n_layers)
            .map(|l| Layer {
                ln1_g: Tensor::filled(format!("layer{l}.ln1_g"), &[d], T::one()),
                ln1_b: Tensor::zeros(format!("layer{l}.ln1_b"), &[d]),
                wq: Tensor::normal(format!("layer{l}.wq"), &[d, d], INIT_STD, r),
                bq: Tensor::zeros(format!("layer{l}.bq"), &[d]),
                wk: Tensor::normal(format!("layer{l}.wk"), &[d, d], INIT_STD, r),
                bk: Tensor::zeros(format!("layer{l}.bk"), &[d]),
                wv: Tensor::normal(format!("layer{l}.wv"), &[d, d], INIT_STD, r),
                bv: Tensor::zeros(format!("layer{l}.bv"), &[d]),
                wo: Tensor::normal(format!("layer{l}.wo"), &[d, d], INIT_STD, r),
                bo: Tensor::zeros(format!("layer{l}.bo"), &[d]),
                ln2_g: Tensor::filled(format!("layer{l}.ln2_g"), &[d], T::one()),
                ln2_b: Tensor::zeros(format!("layer{l}.ln2_b"), &[d]),
                w1: Tensor::normal(format!("layer{l}.w1"), &[d, f], INIT_STD, r),
                b1: Tensor::zeros(format!("layer{l}.b1"), &[f]),
                w2: Tensor::normal(format!("layer{l}.w2"), &[f, d], INIT_STD, r),
                b2: Tensor::zeros(format!("layer{l}.b2"), &[d]),
            })
            .collect();
        Params {
            tok,
            pos,
            x1,
            y1,
            x2,
            y2,
            layers,
            lnf_g: Tensor::filled("lnf_g", &[d], T::one()),
            lnf_b: Tensor::zeros("lnf_b", &[d]),
            tag_w: Tensor::normal("tag_w", &[d, cfg.num_tags], HEAD_INIT_STD, r),
            tag_b: Tensor::zeros("tag_b", &[cfg.num_tags]),
            no_w: Tensor::normal("no_w", &[d, 3], HEAD_INIT_STD, r),
            no_b: Tensor::zeros("no_b", &[3]),
            li_w: Tensor::normal("li_w", &[d, 2], HEAD_INIT_STD, r),
            li_b: Tensor::zeros("li_b", &[2]),
            mvlm_w: Tensor::normal("mvlm_w", &[d, cfg.vocab_size], HEAD_INIT_STD, r),
            mvlm_b: Tensor::zeros("mvlm_b", &[cfg.vocab_size]),
        }
    }

    /// Fresh tag head of `num_tags` outputs, keeping every other tensor.
    pub fn reset_tag_head(&mut self, num_tags: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.lnf_g.len();
        self.tag_w = Tensor::normal("tag_w", &[d, num_tags], HEAD_INIT_STD, &mut rng);
        self.tag_b = Tensor::zeros("tag_b", &[num_tags]);
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut()
            .into_iter()
            .for_each(|t| t.data.iter_mut().for_each(|v| *v = T::zero()));
        z
    }

    /// Tensors in their canonical order.
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![&self.tok, &self.pos, &self.x1, &self.y1, &self.x2, &self.y2];
        for l in &self.layers {
            v.extend([
                &l.ln1_g, &l.ln1_b, &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln2_g, &l.ln2_b, &l.w1, &l.b1, &l.w2, &l.b2,
            ]);
        }
        v.extend([
            &self.lnf_g,
            &self.lnf_b,
            &self.tag_w,
            &self.tag_b,
            &self.no_w,
            &self.no_b,
            &self.li_w,
            &self.li_b,
            &self.mvlm_w,
            &self.mvlm_b,
        ]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![&mut self.tok, &mut self.pos, &mut self.x1, &mut self.y1, &mut self.x2, &mut self.y2];
        for l in &mut self.layers {
            v.extend([
                &mut l.ln1_g,
                &mut l.ln1_b,
                &mut l.wq,
                &mut l.bq,
                &mut l.wk,
                &mut l.bk,
                &mut l.wv,
                &mut l.bv,
                &mut l.wo,
                &mut l.bo,
                &mut l.ln2_g,
                &mut l.ln2_b,
                &mut l.w1,
                &mut l.b1,
                &mut l.w2,
                &mut l.b2,
            ]);
        }
        v.extend([
            &mut self.lnf_g,
            &mut self.lnf_b,
            &mut self.tag_w,
            &mut self.tag_b,
            &mut self.no_w,
            &mut self.no_b,
            &mut self.li_w,
            &mut self.li_b,
            &mut self.mvlm_w,
            &mut self.mvlm_b,
        ]);
        v
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Params<T>, scale: T) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x = *x + scale * y;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}
