use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub d_entity: usize,
    /// Hidden width of the span projection; `None` means `d_model`.
    #[serde(default)]
    pub span_hidden: Option<usize>,
    pub max_len: usize,
    pub vocab_size: usize,
    pub n_entities: usize,
    /// Token id treated as padding (masked out of attention).
    #[serde(default)]
    pub pad_id: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
}

fn default_eps() -> f64 {
    1e-5
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 4,
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            d_entity: 256,
            span_hidden: None,
            max_len: 256,
            vocab_size: 0,
            n_entities: 0,
            pad_id: 0,
            layer_norm_eps: default_eps(),
        }
    }
}

impl ModelConfig {
    pub fn span_hidden(&self) -> usize {
        self.span_hidden.unwrap_or(self.d_model)
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("d_entity", self.d_entity),
            ("span_hidden", self.span_hidden()),
            ("max_len", self.max_len),
            ("vocab_size", self.vocab_size),
            ("n_entities", self.n_entities),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.layer_norm_eps.is_nan() || self.layer_norm_eps <= 0.0 {
            return Err(Error::Config("layer_norm_eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub wq: Array2<T>,
    pub bq: Array1<T>,
    pub wk: Array2<T>,
    pub bk: Array1<T>,
    pub wv: Array2<T>,
    pub bv: Array1<T>,
    pub wo: Array2<T>,
    pub bo: Array1<T>,
    pub ln1_gain: Array1<T>,
    pub ln1_bias: Array1<T>,
    pub ff_w1: Array2<T>,
    pub ff_b1: Array1<T>,
    pub ff_w2: Array2<T>,
    pub ff_b2: Array1<T>,
    pub ln2_gain: Array1<T>,
    pub ln2_bias: Array1<T>,
}

/// All trainable tensors. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub token_emb: Array2<T>,
    pub position_emb: Array2<T>,
    pub layers: Vec<LayerParams<T>>,
    pub span_w1: Array2<T>,
    pub span_b1: Array1<T>,
    pub span_w2: Array2<T>,
    pub span_b2: Array1<T>,
    pub bio_w: Array2<T>,
    pub bio_b: Array1<T>,
    pub entity_emb: Array2<T>,
}

pub type Gradients<T> = Params<T>;

/// Name of the entity-embedding tensor.
pub const ENTITY_EMBEDDINGS: &str = "entity_embeddings";

/// A named view of one tensor in declaration order.
pub struct TensorRef<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [T],
}

pub struct TensorMut<'a, T> {
    pub name: String,
    pub data: &'a mut [T],
}

fn shape_of(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.d_model;
    let mut v = vec![
        ("token_embeddings".to_string(), vec![cfg.vocab_size, d]),
        ("position_embeddings".to_string(), vec![cfg.max_len, d]),
    ];
    for i in 0..cfg.n_layers {
        let p = |n: &str| format!("layer{i}.{n}");
        v.extend([
            (p("attn.wq"), vec![d, d]),
            (p("attn.bq"), vec![d]),
            (p("attn.wk"), vec![d, d]),
            (p("attn.bk"), vec![d]),
            (p("attn.wv"), vec![d, d]),
            (p("attn.bv"), vec![d]),
            (p("attn.wo"), vec![d, d]),
            (p("attn.bo"), vec![d]),
            (p("ln1.gain"), vec![d]),
            (p("ln1.bias"), vec![d]),
            (p("ff.w1"), vec![d, cfg.d_ff]),
            (p("ff.b1"), vec![cfg.d_ff]),
            (p("ff.w2"), vec![cfg.d_ff, d]),
            (p("ff.b2"), vec![d]),
            (p("ln2.gain"), vec![d]),
            (p("ln2.bias"), vec![d]),
        ]);
    }
    let h = cfg.span_hidden();
    v.extend([
        ("span.w1".to_string(), vec![2 * d, h]),
        ("span.b1".to_string(), vec![h]),
        ("span.w2".to_string(), vec![h, cfg.d_entity]),
        ("span.b2".to_string(), vec![cfg.d_entity]),
        ("bio.w".to_string(), vec![d, 3]),
        ("bio.b".to_string(), vec![3]),
        (ENTITY_EMBEDDINGS.to_string(), vec![cfg.n_entities, cfg.d_entity]),
    ]);
    v
}

impl<T: Scalar> Params<T> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let m = |r, c| Array2::zeros((r, c));
        let v = |n| Array1::zeros(n);
        Self {
            token_emb: m(cfg.vocab_size, d),
            position_emb: m(cfg.max_len, d),
            layers: (0..cfg.n_layers)
                .map(|_| LayerParams {
                    wq: m(d, d),
                    bq: v(d),
                    wk: m(d, d),
                    bk: v(d),
                    wv: m(d, d),
                    bv: v(d),
                    wo: m(d, d),
                    bo: v(d),
                    ln1_gain: v(d),
                    ln1_bias: v(d),
                    ff_w1: m(d, cfg.d_ff),
                    ff_b1: v(cfg.d_ff),
                    ff_w2: m(cfg.d_ff, d),
                    ff_b2: v(d),
                    ln2_gain: v(d),
                    ln2_bias: v(d),
                })
                .collect(),
            span_w1: m(2 * d, cfg.span_hidden()),
            span_b1: v(cfg.span_hidden()),
            span_w2: m(cfg.span_hidden(), cfg.d_entity),
            span_b2: v(cfg.d_entity),
            bio_w: m(d, 3),
            bio_b: v(3),
            entity_emb: m(cfg.n_entities, cfg.d_entity),
        }
    }

    /// Truncated normal (std 0.02, cut at two standard deviations) for
    /// matrices, zero biases, unit layer-norm gains.
    pub fn init(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(cfg);
        let matrix: Vec<bool> = p.shapes().iter().map(|s| s.len() == 2).collect();
        for (t, is_matrix) in p.tensors_mut().into_iter().zip(matrix) {
            let is_gain = t.name.ends_with(".gain");
            for x in t.data.iter_mut() {
                *x = if is_gain {
                    T::one()
                } else if is_matrix {
                    T::of(0.02 * truncated_normal(rng))
                } else {
                    T::zero()
                };
            }
        }
        p
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let m = |a: &Array2<T>| a.shape().to_vec();
        let v = |a: &Array1<T>| vec![a.len()];
        out.push(m(&self.token_emb));
        out.push(m(&self.position_emb));
        for l in &self.layers {
            out.extend([
                m(&l.wq),
                v(&l.bq),
                m(&l.wk),
                v(&l.bk),
                m(&l.wv),
                v(&l.bv),
                m(&l.wo),
                v(&l.bo),
                v(&l.ln1_gain),
                v(&l.ln1_bias),
                m(&l.ff_w1),
                v(&l.ff_b1),
                m(&l.ff_w2),
                v(&l.ff_b2),
                v(&l.ln2_gain),
                v(&l.ln2_bias),
            ]);
        }
        out.extend([
            m(&self.span_w1),
            v(&self.span_b1),
            m(&self.span_w2),
            v(&self.span_b2),
            m(&self.bio_w),
            v(&self.bio_b),
            m(&self.entity_emb),
        ]);
        out
    }

    fn slices(&self) -> Vec<&[T]> {
        fn s2<T>(a: &Array2<T>) -> &[T] {
            a.as_slice().expect("standard layout")
        }
        fn s1<T>(a: &Array1<T>) -> &[T] {
            a.as_slice().expect("standard layout")
        }
        let mut out: Vec<&[T]> = vec![s2(&self.token_emb), s2(&self.position_emb)];
        for l in &self.layers {
            out.extend([
                s2(&l.wq),
                s1(&l.bq),
                s2(&l.wk),
                s1(&l.bk),
                s2(&l.wv),
                s1(&l.bv),
                s2(&l.wo),
                s1(&l.bo),
                s1(&l.ln1_gain),
                s1(&l.ln1_bias),
                s2(&l.ff_w1),
                s1(&l.ff_b1),
                s2(&l.ff_w2),
                s1(&l.ff_b2),
                s1(&l.ln2_gain),
                s1(&l.ln2_bias),
            ]);
        }
        out.extend([
            s2(&self.span_w1),
            s1(&self.span_b1),
            s2(&self.span_w2),
            s1(&self.span_b2),
            s2(&self.bio_w),
            s1(&self.bio_b),
            s2(&self.entity_emb),
        ]);
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [T]> {
        fn s2<T>(a: &mut Array2<T>) -> &mut [T] {
            a.as_slice_mut().expect("standard layout")
        }
        fn s1<T>(a: &mut Array1<T>) -> &mut [T] {
            a.as_slice_mut().expect("standard layout")
        }
        let mut out: Vec<&mut [T]> = vec![s2(&mut self.token_emb), s2(&mut self.position_emb)];
        for l in &mut self.layers {
            out.extend([
                s2(&mut l.wq),
                s1(&mut l.bq),
                s2(&mut l.wk),
                s1(&mut l.bk),
                s2(&mut l.wv),
                s1(&mut l.bv),
                s2(&mut l.wo),
                s1(&mut l.bo),
                s1(&mut l.ln1_gain),
                s1(&mut l.ln1_bias),
                s2(&mut l.ff_w1),
                s1(&mut l.ff_b1),
                s2(&mut l.ff_w2),
                s1(&mut l.ff_b2),
                s1(&mut l.ln2_gain),
                s1(&mut l.ln2_bias),
            ]);
        }
        out.extend([
            s2(&mut self.span_w1),
            s1(&mut self.span_b1),
            s2(&mut self.span_w2),
            s1(&mut self.span_b2),
            s2(&mut self.bio_w),
            s1(&mut self.bio_b),
            s2(&mut self.entity_emb),
        ]);
        out
    }

    fn names(&self) -> Vec<String> {
        let mut out = vec!["token_embeddings".to_string(), "position_embeddings".to_string()];
        for i in 0..self.layers.len() {
            for n in [
                "attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv", "attn.wo", "attn.bo",
                "ln1.gain", "ln1.bias", "ff.w1", "ff.b1", "ff.w2", "ff.b2", "ln2.gain", "ln2.bias",
            ] {
                out.push(format!("layer{i}.{n}"));
            }
        }
        for n in ["span.w1", "span.b1", "span.w2", "span.b2", "bio.w", "bio.b", ENTITY_EMBEDDINGS] {
            out.push(n.to_string());
        }
        out
    }

    /// Tensors in declaration order.
    pub fn tensors(&self) -> Vec<TensorRef<'_, T>> {
        self.names()
            .into_iter()
            .zip(self.shapes())
            .zip(self.slices())
            .map(|((name, shape), data)| TensorRef { name, shape, data })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_, T>> {
        let names = self.names();
        names
            .into_iter()
            .zip(self.slices_mut())
            .map(|(name, data)| TensorMut { name, data })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (a, &b) in dst.iter_mut().zip(src) {
                *a += scale * b;
            }
        }
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.tensors()
            .into_iter()
            .find(|t| t.data.iter().any(|x| !x.is_finite()))
            .map(|t| t.name)
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        let mut out = Params::<U> {
            token_emb: self.token_emb.mapv(|x| U::of(x.as_f64())),
            position_emb: self.position_emb.mapv(|x| U::of(x.as_f64())),
            layers: Vec::new(),
            span_w1: self.span_w1.mapv(|x| U::of(x.as_f64())),
            span_b1: self.span_b1.mapv(|x| U::of(x.as_f64())),
            span_w2: self.span_w2.mapv(|x| U::of(x.as_f64())),
            span_b2: self.span_b2.mapv(|x| U::of(x.as_f64())),
            bio_w: self.bio_w.mapv(|x| U::of(x.as_f64())),
            bio_b: self.bio_b.mapv(|x| U::of(x.as_f64())),
            entity_emb: self.entity_emb.mapv(|x| U::of(x.as_f64())),
        };
        let c2 = |a: &Array2<T>| a.mapv(|x| U::of(x.as_f64()));
        let c1 = |a: &Array1<T>| a.mapv(|x| U::of(x.as_f64()));
        out.layers = self
            .layers
            .iter()
            .map(|l| LayerParams {
                wq: c2(&l.wq),
                bq: c1(&l.bq),
                wk: c2(&l.wk),
                bk: c1(&l.bk),
                wv: c2(&l.wv),
                bv: c1(&l.bv),
                wo: c2(&l.wo),
                bo: c1(&l.bo),
                ln1_gain: c1(&l.ln1_gain),
                ln1_bias: c1(&l.ln1_bias),
                ff_w1: c2(&l.ff_w1),
                ff_b1: c1(&l.ff_b1),
                ff_w2: c2(&l.ff_w2),
                ff_b2: c1(&l.ff_b2),
                ln2_gain: c1(&l.ln2_gain),
                ln2_bias: c1(&l.ln2_bias),
            })
            .collect();
        out
    }
}

/// Expected tensor names and shapes for a config, in declaration order.
pub fn tensor_layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    shape_of(cfg)
}

fn truncated_normal(rng: &mut impl Rng) -> f64 {
    loop {
        let x: f64 = StandardNormal.sample(rng);
        if x.abs() <= 2.0 {
            return x;
        }
    }
}
