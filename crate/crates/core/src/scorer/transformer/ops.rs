//! Forward and backward passes of the building blocks, one sequence at a time.
//! Activations are `(positions, features)` matrices.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

pub(crate) struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

/// `gamma` and `beta` are `(1, d)`.
pub(crate) fn layer_norm(
    x: &Array2<f64>,
    gamma: &Array2<f64>,
    beta: &Array2<f64>,
) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mean = x.sum_axis(Axis(1)) / d;
    let centered = x - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = centered * inv_std.view().insert_axis(Axis(1));
    let y = &xhat * gamma + beta;
    (y, LnCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gamma: &Array2<f64>,
    dgamma: &mut Array2<f64>,
    dbeta: &mut Array2<f64>,
) -> Array2<f64> {
    let d = dy.ncols() as f64;
    *dgamma += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *dbeta += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = dy * gamma;
    let sum = dxhat.sum_axis(Axis(1)).insert_axis(Axis(1));
    let dot = (&dxhat * &cache.xhat).sum_axis(Axis(1)).insert_axis(Axis(1));
    let scale = cache.inv_std.view().insert_axis(Axis(1)).mapv(|s| s / d);
    (dxhat * d - sum - &cache.xhat * &dot) * scale
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub(crate) struct FfnCache {
    x: Array2<f64>,
    h: Array2<f64>,
    a: Array2<f64>,
}

pub(crate) struct FfnParams<'a> {
    pub w1: &'a Array2<f64>,
    pub b1: &'a Array2<f64>,
    pub w2: &'a Array2<f64>,
    pub b2: &'a Array2<f64>,
}

pub(crate) fn ffn(x: &Array2<f64>, p: &FfnParams) -> (Array2<f64>, FfnCache) {
    let h = x.dot(p.w1) + p.b1;
    let a = h.mapv(gelu);
    let y = a.dot(p.w2) + p.b2;
    (
        y,
        FfnCache {
            x: x.clone(),
            h,
            a,
        },
    )
}

/// Returns `dx`; `grads` is `[dw1, db1, dw2, db2]`.
pub(crate) fn ffn_backward(
    dy: &Array2<f64>,
    cache: &FfnCache,
    p: &FfnParams,
    grads: [&mut Array2<f64>; 4],
) -> Array2<f64> {
    let [dw1, db1, dw2, db2] = grads;
    *dw2 += &cache.a.t().dot(dy);
    *db2 += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let da = dy.dot(&p.w2.t());
    let mut dh = da;
    dh.zip_mut_with(&cache.h, |g, &h| *g *= gelu_grad(h));
    *dw1 += &cache.x.t().dot(&dh);
    *db1 += &dh.sum_axis(Axis(0)).insert_axis(Axis(0));
    dh.dot(&p.w1.t())
}

pub(crate) struct AttnParams<'a> {
    pub wq: &'a Array2<f64>,
    pub wk: &'a Array2<f64>,
    pub wv: &'a Array2<f64>,
    pub wo: &'a Array2<f64>,
    pub heads: usize,
    pub d_kv: usize,
}

pub(crate) struct AttnCache {
    xq: Array2<f64>,
    xkv: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    concat: Array2<f64>,
}

/// Multi-head scaled dot-product attention of `xq` over `xkv`. With `causal`,
/// position `i` only sees positions `<= i`.
pub(crate) fn attention(
    xq: &Array2<f64>,
    xkv: &Array2<f64>,
    p: &AttnParams,
    causal: bool,
) -> (Array2<f64>, AttnCache) {
    let q = xq.dot(p.wq);
    let k = xkv.dot(p.wk);
    let v = xkv.dot(p.wv);
    let scale = 1.0 / (p.d_kv as f64).sqrt();
    let mut concat = Array2::zeros((xq.nrows(), p.heads * p.d_kv));
    let mut probs = Vec::with_capacity(p.heads);
    for h in 0..p.heads {
        let cols = s![.., h * p.d_kv..(h + 1) * p.d_kv];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        if causal {
            for ((i, j), s) in scores.indexed_iter_mut() {
                if j > i {
                    *s = f64::NEG_INFINITY;
                }
            }
        }
        softmax_rows(&mut scores);
        concat.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        probs.push(scores);
    }
    let y = concat.dot(p.wo);
    (
        y,
        AttnCache {
            xq: xq.clone(),
            xkv: xkv.clone(),
            q,
            k,
            v,
            probs,
            concat,
        },
    )
}

/// Returns `(dxq, dxkv)`; `grads` is `[dwq, dwk, dwv, dwo]`.
pub(crate) fn attention_backward(
    dy: &Array2<f64>,
    cache: &AttnCache,
    p: &AttnParams,
    grads: [&mut Array2<f64>; 4],
) -> (Array2<f64>, Array2<f64>) {
    let [dwq, dwk, dwv, dwo] = grads;
    *dwo += &cache.concat.t().dot(dy);
    let dconcat = dy.dot(&p.wo.t());
    let scale = 1.0 / (p.d_kv as f64).sqrt();
    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dk = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for h in 0..p.heads {
        let cols = s![.., h * p.d_kv..(h + 1) * p.d_kv];
        let probs = &cache.probs[h];
        let dout = dconcat.slice(cols);
        dv.slice_mut(cols).assign(&probs.t().dot(&dout));
        let dprobs = dout.dot(&cache.v.slice(cols).t());
        let row_dot = (&dprobs * probs).sum_axis(Axis(1)).insert_axis(Axis(1));
        let dscores = (dprobs - row_dot) * probs * scale;
        dq.slice_mut(cols).assign(&dscores.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&dscores.t().dot(&cache.q.slice(cols)));
    }
    *dwq += &cache.xq.t().dot(&dq);
    *dwk += &cache.xkv.t().dot(&dk);
    *dwv += &cache.xkv.t().dot(&dv);
    let dxq = dq.dot(&p.wq.t());
    let dxkv = dk.dot(&p.wk.t()) + dv.dot(&p.wv.t());
    (dxq, dxkv)
}

pub(crate) fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Inverted dropout mask, or `None` when dropout is inactive.
pub(crate) fn dropout_mask(
    shape: (usize, usize),
    rate: f64,
    rng: Option<&mut impl Rng>,
) -> Option<Array2<f64>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(Array2::from_shape_fn(shape, |_| {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}

pub(crate) fn apply_mask(x: Array2<f64>, mask: &Option<Array2<f64>>) -> Array2<f64> {
    match mask {
        Some(m) => x * m,
        None => x,
    }
}

/// Sinusoidal position encodings for positions `0..len`.
pub(crate) fn positional_encoding(len: usize, d_model: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, d_model), |(pos, j)| {
        let exponent = (2 * (j / 2)) as f64 / d_model as f64;
        let angle = pos as f64 / 10_000f64.powf(exponent);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Rows of `table` selected by `ids`.
pub(crate) fn gather_rows(table: ArrayView2<f64>, ids: &[usize]) -> Array2<f64> {
    table.select(Axis(0), ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_grad(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-5;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn gelu_derivative() {
        for x in [-3.0, -0.5, 0.0, 0.7, 2.5] {
            assert!((gelu_grad(x) - numeric_grad(gelu, x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardised() {
        let x = Array2::from_shape_vec((2, 4), vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 5.0, 9.0])
            .unwrap();
        let g = Array2::ones((1, 4));
        let b = Array2::zeros((1, 4));
        let (y, _) = layer_norm(&x, &g, &b);
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-9);
            assert!((row.mapv(|v| v * v).sum() / 4.0 - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn causal_attention_ignores_future() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        use rand::SeedableRng;
        let w = |rng: &mut rand_chacha::ChaCha8Rng| {
            Array2::from_shape_fn((4, 4), |_| rng.random::<f64>() - 0.5)
        };
        let (wq, wk, wv, wo) = (w(&mut rng), w(&mut rng), w(&mut rng), w(&mut rng));
        let p = AttnParams {
            wq: &wq,
            wk: &wk,
            wv: &wv,
            wo: &wo,
            heads: 2,
            d_kv: 2,
        };
        let x = Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f64 / 10.0);
        let mut x2 = x.clone();
        x2.row_mut(2).fill(9.0);
        let (a, _) = attention(&x, &x, &p, true);
        let (b, _) = attention(&x2, &x2, &p, true);
        assert!((&a.slice(s![..2, ..]) - &b.slice(s![..2, ..]))
            .iter()
            .all(|d| d.abs() < 1e-12));
    }
}
