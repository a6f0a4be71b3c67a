//! Parameter layout and the full encoder-decoder forward/backward pass.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};

use super::ops::{
    apply_mask, attention, attention_backward, dropout_mask, ffn, ffn_backward, gather_rows,
    layer_norm, layer_norm_backward, positional_encoding, AttnCache, AttnParams, FfnCache,
    FfnParams, LnCache,
};
use super::TransformerConfig;

#[derive(Debug, Clone, Copy)]
struct Ln {
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone, Copy)]
struct Attn {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
}

#[derive(Debug, Clone, Copy)]
struct Ffn {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone, Copy)]
struct EncLayer {
    ln1: Ln,
    attn: Attn,
    ln2: Ln,
    ffn: Ffn,
}

#[derive(Debug, Clone, Copy)]
struct DecLayer {
    ln1: Ln,
    self_attn: Attn,
    ln2: Ln,
    cross: Attn,
    ln3: Ln,
    ffn: Ffn,
}

/// Where each tensor lives in the flat parameter list.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    embed: usize,
    enc: Vec<EncLayer>,
    enc_ln: Ln,
    dec: Vec<DecLayer>,
    dec_ln: Ln,
    out_w: usize,
    out_b: usize,
    pub(crate) names: Vec<String>,
    pub(crate) shapes: Vec<(usize, usize)>,
    /// Whether weight decay applies (matrices yes, biases and norms no).
    pub(crate) decay: Vec<bool>,
}

#[derive(Clone, Copy)]
enum Init {
    Zeros,
    Ones,
    Normal(f64),
}

struct Builder {
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
    decay: Vec<bool>,
    inits: Vec<Init>,
}

impl Builder {
    fn push(&mut self, name: String, shape: (usize, usize), init: Init, decay: bool) -> usize {
        self.names.push(name);
        self.shapes.push(shape);
        self.inits.push(init);
        self.decay.push(decay);
        self.names.len() - 1
    }

    fn matrix(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let std = (1.0 / rows as f64).sqrt();
        self.push(name, (rows, cols), Init::Normal(std), true)
    }

    fn bias(&mut self, name: String, cols: usize) -> usize {
        self.push(name, (1, cols), Init::Zeros, false)
    }

    fn ln(&mut self, name: &str, d: usize) -> Ln {
        Ln {
            gamma: self.push(format!("{name}.gamma"), (1, d), Init::Ones, false),
            beta: self.push(format!("{name}.beta"), (1, d), Init::Zeros, false),
        }
    }

    fn attn(&mut self, name: &str, c: &TransformerConfig) -> Attn {
        let inner = c.heads * c.d_kv;
        Attn {
            wq: self.matrix(format!("{name}.wq"), c.d_model, inner),
            wk: self.matrix(format!("{name}.wk"), c.d_model, inner),
            wv: self.matrix(format!("{name}.wv"), c.d_model, inner),
            wo: self.matrix(format!("{name}.wo"), inner, c.d_model),
        }
    }

    fn ffn(&mut self, name: &str, c: &TransformerConfig) -> Ffn {
        Ffn {
            w1: self.matrix(format!("{name}.w1"), c.d_model, c.d_ff),
            b1: self.bias(format!("{name}.b1"), c.d_ff),
            w2: self.matrix(format!("{name}.w2"), c.d_ff, c.d_model),
            b2: self.bias(format!("{name}.b2"), c.d_model),
        }
    }
}

impl Layout {
    pub(crate) fn new(c: &TransformerConfig, vocab_size: usize) -> Self {
        Layout::with_inits(c, vocab_size).0
    }

    fn with_inits(c: &TransformerConfig, vocab_size: usize) -> (Self, Vec<Init>) {
        let mut b = Builder {
            names: Vec::new(),
            shapes: Vec::new(),
            decay: Vec::new(),
            inits: Vec::new(),
        };
        let embed = b.push("embed".into(), (vocab_size, c.d_model), Init::Normal(1.0), true);
        let enc = (0..c.layers)
            .map(|i| EncLayer {
                ln1: b.ln(&format!("enc{i}.ln1"), c.d_model),
                attn: b.attn(&format!("enc{i}.attn"), c),
                ln2: b.ln(&format!("enc{i}.ln2"), c.d_model),
                ffn: b.ffn(&format!("enc{i}.ffn"), c),
            })
            .collect();
        let enc_ln = b.ln("enc.ln", c.d_model);
        let dec = (0..c.layers)
            .map(|i| DecLayer {
                ln1: b.ln(&format!("dec{i}.ln1"), c.d_model),
                self_attn: b.attn(&format!("dec{i}.self"), c),
                ln2: b.ln(&format!("dec{i}.ln2"), c.d_model),
                cross: b.attn(&format!("dec{i}.cross"), c),
                ln3: b.ln(&format!("dec{i}.ln3"), c.d_model),
                ffn: b.ffn(&format!("dec{i}.ffn"), c),
            })
            .collect();
        let dec_ln = b.ln("dec.ln", c.d_model);
        let out_w = b.matrix("out.w".into(), c.d_model, vocab_size);
        let out_b = b.bias("out.b".into(), vocab_size);
        let layout = Layout {
            embed,
            enc,
            enc_ln,
            dec,
            dec_ln,
            out_w,
            out_b,
            names: b.names,
            shapes: b.shapes,
            decay: b.decay,
        };
        (layout, b.inits)
    }

    pub(crate) fn init_params(
        c: &TransformerConfig,
        vocab_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> (Self, Vec<Array2<f64>>) {
        let (layout, inits) = Layout::with_inits(c, vocab_size);
        let params = layout
            .shapes
            .iter()
            .zip(inits)
            .map(|(&shape, init)| match init {
                Init::Zeros => Array2::zeros(shape),
                Init::Ones => Array2::ones(shape),
                Init::Normal(std) => {
                    let normal = Normal::new(0.0, std).expect("positive std");
                    Array2::from_shape_fn(shape, |_| normal.sample(rng))
                }
            })
            .collect();
        (layout, params)
    }

    pub(crate) fn zeros(&self) -> Vec<Array2<f64>> {
        self.shapes.iter().map(|&s| Array2::zeros(s)).collect()
    }
}

struct EncCache {
    ln1: LnCache,
    attn: AttnCache,
    drop1: Option<Array2<f64>>,
    ln2: LnCache,
    ffn: FfnCache,
    drop2: Option<Array2<f64>>,
}

struct DecCache {
    ln1: LnCache,
    self_attn: AttnCache,
    drop1: Option<Array2<f64>>,
    ln2: LnCache,
    cross: AttnCache,
    drop2: Option<Array2<f64>>,
    ln3: LnCache,
    ffn: FfnCache,
    drop3: Option<Array2<f64>>,
}

pub(crate) struct Cache {
    src: Vec<usize>,
    tgt: Vec<usize>,
    src_drop: Option<Array2<f64>>,
    tgt_drop: Option<Array2<f64>>,
    enc: Vec<EncCache>,
    enc_ln: LnCache,
    dec: Vec<DecCache>,
    dec_ln: LnCache,
    /// Final normalised decoder states, `(tgt_len, d_model)`.
    pub(crate) hidden: Array2<f64>,
}

/// Borrowed model: configuration, layout and parameters.
pub(crate) struct Model<'a> {
    pub config: &'a TransformerConfig,
    pub layout: &'a Layout,
    pub params: &'a [Array2<f64>],
}

impl Model<'_> {
    fn p(&self, i: usize) -> &Array2<f64> {
        &self.params[i]
    }

    fn attn_params(&self, a: Attn) -> AttnParams<'_> {
        AttnParams {
            wq: self.p(a.wq),
            wk: self.p(a.wk),
            wv: self.p(a.wv),
            wo: self.p(a.wo),
            heads: self.config.heads,
            d_kv: self.config.d_kv,
        }
    }

    fn ffn_params(&self, f: Ffn) -> FfnParams<'_> {
        FfnParams {
            w1: self.p(f.w1),
            b1: self.p(f.b1),
            w2: self.p(f.w2),
            b2: self.p(f.b2),
        }
    }

    fn embed(&self, ids: &[usize]) -> Array2<f64> {
        gather_rows(self.p(self.layout.embed).view(), ids)
            + positional_encoding(ids.len(), self.config.d_model)
    }

    /// Runs encoder and decoder. `rng` enables dropout.
    pub(crate) fn forward(
        &self,
        src: &[usize],
        tgt: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Cache {
        let l = self.layout;
        let rate = self.config.dropout;
        let d = self.config.d_model;

        let src_drop = dropout_mask((src.len(), d), rate, rng.as_deref_mut());
        let mut x = apply_mask(self.embed(src), &src_drop);
        let mut enc = Vec::with_capacity(l.enc.len());
        for layer in &l.enc {
            let (n1, ln1) = layer_norm(&x, self.p(layer.ln1.gamma), self.p(layer.ln1.beta));
            let (a, attn) = attention(&n1, &n1, &self.attn_params(layer.attn), false);
            let drop1 = dropout_mask(a.dim(), rate, rng.as_deref_mut());
            x = x + apply_mask(a, &drop1);
            let (n2, ln2) = layer_norm(&x, self.p(layer.ln2.gamma), self.p(layer.ln2.beta));
            let (f, ffn_cache) = ffn(&n2, &self.ffn_params(layer.ffn));
            let drop2 = dropout_mask(f.dim(), rate, rng.as_deref_mut());
            x = x + apply_mask(f, &drop2);
            enc.push(EncCache {
                ln1,
                attn,
                drop1,
                ln2,
                ffn: ffn_cache,
                drop2,
            });
        }
        let (memory, enc_ln) = layer_norm(&x, self.p(l.enc_ln.gamma), self.p(l.enc_ln.beta));

        let tgt_drop = dropout_mask((tgt.len(), d), rate, rng.as_deref_mut());
        let mut y = apply_mask(self.embed(tgt), &tgt_drop);
        let mut dec = Vec::with_capacity(l.dec.len());
        for layer in &l.dec {
            let (n1, ln1) = layer_norm(&y, self.p(layer.ln1.gamma), self.p(layer.ln1.beta));
            let (a, self_attn) = attention(&n1, &n1, &self.attn_params(layer.self_attn), true);
            let drop1 = dropout_mask(a.dim(), rate, rng.as_deref_mut());
            y = y + apply_mask(a, &drop1);
            let (n2, ln2) = layer_norm(&y, self.p(layer.ln2.gamma), self.p(layer.ln2.beta));
            let (c, cross) = attention(&n2, &memory, &self.attn_params(layer.cross), false);
            let drop2 = dropout_mask(c.dim(), rate, rng.as_deref_mut());
            y = y + apply_mask(c, &drop2);
            let (n3, ln3) = layer_norm(&y, self.p(layer.ln3.gamma), self.p(layer.ln3.beta));
            let (f, ffn_cache) = ffn(&n3, &self.ffn_params(layer.ffn));
            let drop3 = dropout_mask(f.dim(), rate, rng.as_deref_mut());
            y = y + apply_mask(f, &drop3);
            dec.push(DecCache {
                ln1,
                self_attn,
                drop1,
                ln2,
                cross,
                drop2,
                ln3,
                ffn: ffn_cache,
                drop3,
            });
        }
        let (hidden, dec_ln) = layer_norm(&y, self.p(l.dec_ln.gamma), self.p(l.dec_ln.beta));
        Cache {
            src: src.to_vec(),
            tgt: tgt.to_vec(),
            src_drop,
            tgt_drop,
            enc,
            enc_ln,
            dec,
            dec_ln,
            hidden,
        }
    }

    /// Output logits for the given hidden rows.
    pub(crate) fn logits(&self, hidden: &Array2<f64>) -> Array2<f64> {
        hidden.dot(self.p(self.layout.out_w)) + self.p(self.layout.out_b)
    }

    /// Accumulates parameter gradients of a loss whose gradient with respect
    /// to the logits is `dlogits`.
    pub(crate) fn backward(&self, cache: &Cache, dlogits: &Array2<f64>, grads: &mut [Array2<f64>]) {
        let l = self.layout;
        grads[l.out_w] += &cache.hidden.t().dot(dlogits);
        grads[l.out_b] += &dlogits.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dhidden = dlogits.dot(&self.p(l.out_w).t());
        let mut dy = self.ln_backward(&dhidden, &cache.dec_ln, l.dec_ln, grads);

        let mut dmemory = Array2::zeros((cache.src.len(), self.config.d_model));
        for (layer, c) in l.dec.iter().zip(&cache.dec).rev() {
            let df = apply_mask(dy.clone(), &c.drop3);
            let dn3 = self.ffn_backward(&df, &c.ffn, layer.ffn, grads);
            dy += &self.ln_backward(&dn3, &c.ln3, layer.ln3, grads);

            let dc = apply_mask(dy.clone(), &c.drop2);
            let (dn2, dmem) = self.attn_backward(&dc, &c.cross, layer.cross, grads);
            dmemory += &dmem;
            dy += &self.ln_backward(&dn2, &c.ln2, layer.ln2, grads);

            let da = apply_mask(dy.clone(), &c.drop1);
            let (dq, dkv) = self.attn_backward(&da, &c.self_attn, layer.self_attn, grads);
            dy += &self.ln_backward(&(dq + dkv), &c.ln1, layer.ln1, grads);
        }
        let dtgt = apply_mask(dy, &cache.tgt_drop);
        self.embed_backward(&cache.tgt, &dtgt, grads);

        let mut dx = self.ln_backward(&dmemory, &cache.enc_ln, l.enc_ln, grads);
        for (layer, c) in l.enc.iter().zip(&cache.enc).rev() {
            let df = apply_mask(dx.clone(), &c.drop2);
            let dn2 = self.ffn_backward(&df, &c.ffn, layer.ffn, grads);
            dx += &self.ln_backward(&dn2, &c.ln2, layer.ln2, grads);

            let da = apply_mask(dx.clone(), &c.drop1);
            let (dq, dkv) = self.attn_backward(&da, &c.attn, layer.attn, grads);
            dx += &self.ln_backward(&(dq + dkv), &c.ln1, layer.ln1, grads);
        }
        let dsrc = apply_mask(dx, &cache.src_drop);
        self.embed_backward(&cache.src, &dsrc, grads);
    }

    fn embed_backward(&self, ids: &[usize], dx: &Array2<f64>, grads: &mut [Array2<f64>]) {
        let g = &mut grads[self.layout.embed];
        for (row, &id) in dx.rows().into_iter().zip(ids) {
            let mut target = g.row_mut(id);
            target += &row;
        }
    }

    fn ln_backward(
        &self,
        dy: &Array2<f64>,
        cache: &LnCache,
        ln: Ln,
        grads: &mut [Array2<f64>],
    ) -> Array2<f64> {
        let (dgamma, dbeta) = pair_mut(grads, ln.gamma, ln.beta);
        layer_norm_backward(dy, cache, self.p(ln.gamma), dgamma, dbeta)
    }

    fn ffn_backward(
        &self,
        dy: &Array2<f64>,
        cache: &FfnCache,
        f: Ffn,
        grads: &mut [Array2<f64>],
    ) -> Array2<f64> {
        let [w1, b1, w2, b2] = quad_mut(grads, [f.w1, f.b1, f.w2, f.b2]);
        ffn_backward(dy, cache, &self.ffn_params(f), [w1, b1, w2, b2])
    }

    fn attn_backward(
        &self,
        dy: &Array2<f64>,
        cache: &AttnCache,
        a: Attn,
        grads: &mut [Array2<f64>],
    ) -> (Array2<f64>, Array2<f64>) {
        let [wq, wk, wv, wo] = quad_mut(grads, [a.wq, a.wk, a.wv, a.wo]);
        attention_backward(dy, cache, &self.attn_params(a), [wq, wk, wv, wo])
    }
}

fn pair_mut<T>(xs: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    let [x, y] = xs.get_disjoint_mut([a, b]).expect("distinct indices");
    (x, y)
}

fn quad_mut<T>(xs: &mut [T], idx: [usize; 4]) -> [&mut T; 4] {
    xs.get_disjoint_mut(idx).expect("distinct indices")
}

/// Draws a fresh seed for one example's dropout masks.
pub(crate) fn fork(rng: &mut ChaCha8Rng) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(rng.random())
}
