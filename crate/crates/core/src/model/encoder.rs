//! Post-layer-norm Transformer encoder with learned positions.

use ndarray::{s, Array2, Axis};

use super::ops::{self, LayerNormCache};
use super::params::{LayerParams, Params};
use super::Model;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-layer hidden states `H_0 ..= H_n`, each `t × d_model`.
#[derive(Clone, Debug)]
pub struct HiddenStates<T> {
    pub layers: Vec<Array2<T>>,
}

impl<T> HiddenStates<T> {
    /// `Ĥ = H_n`.
    pub fn last(&self) -> &Array2<T> {
        self.layers.last().expect("H_0 always present")
    }
}

pub(crate) struct LayerCache<T> {
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    concat: Array2<T>,
    ln1: LayerNormCache<T>,
    ff_pre: Array2<T>,
    ff_act: Array2<T>,
    ln2: LayerNormCache<T>,
}

pub(crate) struct EncoderTrace<T> {
    pub tokens: Vec<usize>,
    pub hidden: HiddenStates<T>,
    caches: Vec<LayerCache<T>>,
}

impl<T: Scalar> Model<T> {
    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.len() > self.config.max_len {
            return Err(Error::SequenceTooLong {
                len: tokens.len(),
                max_len: self.config.max_len,
            });
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::IndexOutOfRange {
                what: "token vocabulary",
                index: bad,
                size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Runs the encoder. Positions holding `pad_id` are masked out as attention keys.
    pub fn encode(&self, tokens: &[usize]) -> Result<HiddenStates<T>> {
        Ok(self.encode_traced(tokens)?.hidden)
    }

    pub(crate) fn encode_traced(&self, tokens: &[usize]) -> Result<EncoderTrace<T>> {
        self.check_tokens(tokens)?;
        let p = &self.params;
        let t = tokens.len();
        let d = self.config.d_model;
        let mut h = Array2::zeros((t, d));
        for (i, &tok) in tokens.iter().enumerate() {
            let mut row = h.row_mut(i);
            row += &p.token_emb.row(tok);
            row += &p.position_emb.row(i);
        }
        let valid: Vec<bool> = tokens.iter().map(|&x| x != self.config.pad_id).collect();
        let mut layers = vec![h];
        let mut caches = Vec::with_capacity(p.layers.len());
        for lp in &p.layers {
            let (out, cache) = self.layer_forward(lp, layers.last().unwrap(), &valid);
            layers.push(out);
            caches.push(cache);
        }
        Ok(EncoderTrace {
            tokens: tokens.to_vec(),
            hidden: HiddenStates { layers },
            caches,
        })
    }

    fn layer_forward(
        &self,
        lp: &LayerParams<T>,
        x: &Array2<T>,
        valid: &[bool],
    ) -> (Array2<T>, LayerCache<T>) {
        let eps = T::of(self.config.layer_norm_eps);
        let xv = x.view();
        let q = ops::linear(&xv, &lp.wq, &lp.bq);
        let k = ops::linear(&xv, &lp.wk, &lp.bk);
        let v = ops::linear(&xv, &lp.wv, &lp.bv);
        let t = x.nrows();
        let dh = self.config.head_dim();
        let scale = T::one() / T::of(dh as f64).sqrt();
        let mut concat = Array2::zeros(x.raw_dim());
        let mut probs = Vec::with_capacity(self.config.n_heads);
        for head in 0..self.config.n_heads {
            let cols = s![.., head * dh..(head + 1) * dh];
            let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            let mut pm = Array2::zeros((t, t));
            for i in 0..t {
                let row: Vec<T> = scores.row(i).to_vec();
                let pr = ops::masked_softmax(&row, |j| valid[j]);
                for (j, pv) in pr.into_iter().enumerate() {
                    pm[[i, j]] = pv;
                }
            }
            concat.slice_mut(cols).assign(&pm.dot(&v.slice(cols)));
            probs.push(pm);
        }
        let attn = ops::linear(&concat.view(), &lp.wo, &lp.bo);
        let (a, ln1) = ops::layer_norm(&(x + &attn), &lp.ln1_gain, &lp.ln1_bias, eps);
        let ff_pre = ops::linear(&a.view(), &lp.ff_w1, &lp.ff_b1);
        let ff_act = ff_pre.mapv(ops::gelu);
        let ff = ops::linear(&ff_act.view(), &lp.ff_w2, &lp.ff_b2);
        let (y, ln2) = ops::layer_norm(&(&a + &ff), &lp.ln2_gain, &lp.ln2_bias, eps);
        (
            y,
            LayerCache {
                q,
                k,
                v,
                probs,
                concat,
                ln1,
                ff_pre,
                ff_act,
                ln2,
            },
        )
    }

    /// Back-propagates `d_top` (gradient w.r.t. `Ĥ`) into `grads`.
    pub(crate) fn encode_backward(
        &self,
        trace: &EncoderTrace<T>,
        d_top: Array2<T>,
        grads: &mut Params<T>,
    ) {
        let mut dh = d_top;
        for (i, (lp, cache)) in self.params.layers.iter().zip(&trace.caches).enumerate().rev() {
            let x = &trace.hidden.layers[i];
            dh = self.layer_backward(lp, cache, x, dh, &mut grads.layers[i]);
        }
        for (pos, (&tok, row)) in trace.tokens.iter().zip(dh.rows()).enumerate() {
            let mut te = grads.token_emb.row_mut(tok);
            te += &row;
            let mut pe = grads.position_emb.row_mut(pos);
            pe += &row;
        }
    }

    fn layer_backward(
        &self,
        lp: &LayerParams<T>,
        c: &LayerCache<T>,
        x: &Array2<T>,
        dy: Array2<T>,
        g: &mut LayerParams<T>,
    ) -> Array2<T> {
        let d_r2 = ops::layer_norm_backward(&c.ln2, &lp.ln2_gain, &dy, &mut g.ln2_gain, &mut g.ln2_bias);
        // a = LN1 output; reconstruct from cache.
        let a = &c.ln1.xhat * &lp.ln1_gain + &lp.ln1_bias;
        let d_act = ops::linear_backward(&c.ff_act.view(), &lp.ff_w2, &d_r2, &mut g.ff_w2, &mut g.ff_b2);
        let d_pre = d_act * &c.ff_pre.mapv(ops::gelu_grad);
        let mut d_a = ops::linear_backward(&a.view(), &lp.ff_w1, &d_pre, &mut g.ff_w1, &mut g.ff_b1);
        d_a += &d_r2;
        let d_r1 = ops::layer_norm_backward(&c.ln1, &lp.ln1_gain, &d_a, &mut g.ln1_gain, &mut g.ln1_bias);

        let d_concat = ops::linear_backward(&c.concat.view(), &lp.wo, &d_r1, &mut g.wo, &mut g.bo);
        let dh = self.config.head_dim();
        let scale = T::one() / T::of(dh as f64).sqrt();
        let mut dq = Array2::zeros(c.q.raw_dim());
        let mut dk = Array2::zeros(c.k.raw_dim());
        let mut dv = Array2::zeros(c.v.raw_dim());
        for (head, pm) in c.probs.iter().enumerate() {
            let cols = s![.., head * dh..(head + 1) * dh];
            let d_o = d_concat.slice(cols);
            let d_p = d_o.dot(&c.v.slice(cols).t());
            dv.slice_mut(cols).assign(&pm.t().dot(&d_o));
            let mut d_s = pm * &d_p;
            let row_dot = d_s.sum_axis(Axis(1));
            for (mut row, (&rd, prow)) in d_s.rows_mut().into_iter().zip(row_dot.iter().zip(pm.rows())) {
                row.scaled_add(-rd, &prow);
            }
            d_s *= scale;
            dq.slice_mut(cols).assign(&d_s.dot(&c.k.slice(cols)));
            dk.slice_mut(cols).assign(&d_s.t().dot(&c.q.slice(cols)));
        }
        let xv = x.view();
        let mut dx = d_r1;
        dx += &ops::linear_backward(&xv, &lp.wq, &dq, &mut g.wq, &mut g.bq);
        dx += &ops::linear_backward(&xv, &lp.wk, &dk, &mut g.wk, &mut g.bk);
        dx += &ops::linear_backward(&xv, &lp.wv, &dv, &mut g.wv, &mut g.bv);
        dx
    }
}
