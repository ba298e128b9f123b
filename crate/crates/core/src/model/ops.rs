//! Dense building blocks and their backward passes.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use crate::scalar::Scalar;

/// `x · w + b` with `w` stored `in × out`.
pub fn linear<T: Scalar>(x: &ArrayView2<T>, w: &Array2<T>, b: &Array1<T>) -> Array2<T> {
    let mut y = x.dot(w);
    y += b;
    y
}

/// Accumulates weight/bias gradients and returns the input gradient.
pub fn linear_backward<T: Scalar>(
    x: &ArrayView2<T>,
    w: &Array2<T>,
    dy: &Array2<T>,
    dw: &mut Array2<T>,
    db: &mut Array1<T>,
) -> Array2<T> {
    dw.scaled_add(T::one(), &x.t().dot(dy));
    *db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let k = T::of(GELU_K);
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let k = T::of(GELU_K);
    let half = T::of(0.5);
    let th = (c * (x + k * x * x * x)).tanh();
    half * (T::one() + th) + half * x * (T::one() - th * th) * c * (T::one() + T::of(3.0) * k * x * x)
}

pub struct LayerNormCache<T> {
    pub xhat: Array2<T>,
    pub rstd: Array1<T>,
}

pub fn layer_norm<T: Scalar>(
    x: &Array2<T>,
    gain: &Array1<T>,
    bias: &Array1<T>,
    eps: T,
) -> (Array2<T>, LayerNormCache<T>) {
    let d = T::of(x.ncols() as f64);
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / d;
        *r = T::one() / (var + eps).sqrt();
        let s = *r;
        row.mapv_inplace(|v| v * s);
    }
    let mut y = &xhat * gain;
    y += bias;
    (y, LayerNormCache { xhat, rstd })
}

pub fn layer_norm_backward<T: Scalar>(
    cache: &LayerNormCache<T>,
    gain: &Array1<T>,
    dy: &Array2<T>,
    dgain: &mut Array1<T>,
    dbias: &mut Array1<T>,
) -> Array2<T> {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0));
    let n = dy.ncols();
    let d = T::of(n as f64);
    let dxhat = dy * gain;
    let mut dx = Array2::zeros(dy.raw_dim());
    for ((mut out, g), (xh, &r)) in dx
        .rows_mut()
        .into_iter()
        .zip(dxhat.rows())
        .zip(cache.xhat.rows().into_iter().zip(cache.rstd.iter()))
    {
        let sum_g = g.sum();
        let sum_gx = g.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum::<T>();
        Zip::from(&mut out).and(&g).and(&xh).for_each(|o, &gi, &xi| {
            *o = r / d * (d * gi - sum_g - xi * sum_gx);
        });
    }
    dx
}

/// Numerically stable softmax restricted to positions where `valid` is true;
/// other positions get probability zero. All-invalid input yields all zeros.
pub fn masked_softmax<T: Scalar>(scores: &[T], valid: impl Fn(usize) -> bool) -> Vec<T> {
    let max = scores
        .iter()
        .enumerate()
        .filter(|(i, _)| valid(*i))
        .map(|(_, &s)| s)
        .fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return vec![T::zero(); scores.len()];
    }
    let mut out: Vec<T> = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| if valid(i) { (s - max).exp() } else { T::zero() })
        .collect();
    let z: T = out.iter().copied().sum();
    for p in &mut out {
        *p /= z;
    }
    out
}

pub fn softmax<T: Scalar>(scores: &[T]) -> Vec<T> {
    masked_softmax(scores, |_| true)
}

/// `ln Σ exp(s)` with max shift.
pub fn log_sum_exp<T: Scalar>(scores: &[T]) -> T {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    max + scores.iter().map(|&s| (s - max).exp()).sum::<T>().ln()
}
