//! Forward and backward passes of the clustering transformer.
//!
//! Token layout: `n` object tokens plus one count token. Object tokens attend
//! only to object tokens; the count token attends to every object token and
//! to itself. The two streams are therefore kept as separate buffers: the
//! object stream never reads anything derived from the count token, while the
//! count token reads the object keys and values of every layer.
//!
//! Each encoder block is post-norm:
//! `h = LN1(x + MHA(x)); y = LN2(h + FFN(h))`.

use ndarray::Array2;

use super::ops::{
    gemm, layer_norm, layer_norm_backward, linear, linear_backward, log_sum_exp, relu,
    relu_backward, softmax_backward_in_place, softmax_in_place, Real, View, ViewMut,
};
use super::params::{Layout, MlpSlots, ModelConfig, Parameters};
use crate::error::{Error, Result};

/// Raw network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<F> {
    /// `n x k_max` assignment logits, row-major.
    pub assign_logits: Vec<F>,
    /// Count logits; class `j` stands for `j + 1` clusters.
    pub count_logits: Vec<F>,
    pub n: usize,
    pub k_max: usize,
}

/// Inputs ready for the network: missing entries already substituted.
#[derive(Debug, Clone)]
pub struct EncodedInput<F> {
    pub values: Vec<F>,
    pub n: usize,
}

/// The two loss terms of one dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub assign: f64,
    pub count: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.assign + self.count
    }
}

struct MlpCache<F> {
    input: Vec<F>,
    pre: Vec<F>,
    act: Vec<F>,
}

struct StreamLayerCache<F> {
    x: Vec<F>,
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    attn: Vec<F>,
    ln1_hat: Vec<F>,
    ln1_rstd: Vec<F>,
    h1: Vec<F>,
    ff_pre: Vec<F>,
    ff_act: Vec<F>,
    ln2_hat: Vec<F>,
    ln2_rstd: Vec<F>,
}

struct LayerCache<F> {
    objects: StreamLayerCache<F>,
    token: Option<StreamLayerCache<F>>,
    /// Per head `n x n` object attention weights.
    probs: Vec<F>,
    /// Per head `n + 1` count-token attention weights.
    token_probs: Vec<F>,
}

/// Activations retained by [`Network::forward_cached`] for backprop.
pub struct Cache<F> {
    n: usize,
    object_embed: MlpCache<F>,
    condition_embed: MlpCache<F>,
    token_embed: Option<MlpCache<F>>,
    layers: Vec<LayerCache<F>>,
    final_objects: Vec<F>,
    final_token: Option<Vec<F>>,
    count_head: Option<MlpCache<F>>,
}

impl<F: Real> Cache<F> {
    /// Object-token input to the first encoder layer (`n x d_embed`).
    pub fn layer0_objects(&self) -> &[F] {
        &self.layers.first().map(|l| &l.objects.x).unwrap_or(&self.final_objects)[..]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sign pattern of every ReLU pre-activation in the pass.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        let mut push = |v: &[F]| out.extend(v.iter().map(|&x| x > F::zero()));
        push(&self.object_embed.pre);
        push(&self.condition_embed.pre);
        if let Some(t) = &self.token_embed {
            push(&t.pre);
        }
        for l in &self.layers {
            push(&l.objects.ff_pre);
            if let Some(t) = &l.token {
                push(&t.ff_pre);
            }
        }
        if let Some(c) = &self.count_head {
            push(&c.pre);
        }
        out
    }
}

/// Configuration, layout and weights bundled together.
#[derive(Debug, Clone)]
pub struct Network<F> {
    pub cfg: ModelConfig,
    pub layout: Layout,
    pub params: Parameters<F>,
}

fn split2<F>(g: &mut [F], a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> (&mut [F], &mut [F]) {
    assert!(a.end <= b.start);
    let (lo, hi) = g.split_at_mut(b.start);
    (&mut lo[a], &mut hi[..b.end - b.start])
}

impl<F: Real> Network<F> {
    pub fn new(cfg: ModelConfig, params: Parameters<F>) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(&cfg);
        if params.data.len() != layout.total {
            return Err(Error::Config(format!(
                "parameter vector has {} entries, layout needs {}",
                params.data.len(),
                layout.total
            )));
        }
        Ok(Network { cfg, layout, params })
    }

    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let params = Parameters::init(&cfg, seed)?;
        Network::new(cfg, params)
    }

    fn p(&self, r: &std::ops::Range<usize>) -> &[F] {
        &self.params.data[r.clone()]
    }

    /// Substitutes missing entries and validates the feature matrix.
    pub fn encode(&self, x: &Array2<f64>, mask: &Array2<bool>) -> Result<EncodedInput<F>> {
        let (n, d) = x.dim();
        if d != self.cfg.d_in {
            return Err(Error::Argument(format!(
                "model expects {} features, got {d}",
                self.cfg.d_in
            )));
        }
        if mask.dim() != x.dim() {
            return Err(Error::Argument("mask shape differs from data".into()));
        }
        if n == 0 {
            return Err(Error::Argument("empty dataset".into()));
        }
        let mut values = Vec::with_capacity(n * d);
        for (v, &m) in x.iter().zip(mask.iter()) {
            if m {
                if !v.is_finite() {
                    return Err(Error::Data("non-finite observed input".into()));
                }
                values.push(F::cast(*v));
            } else {
                values.push(F::cast(self.cfg.missing_fill));
            }
        }
        Ok(EncodedInput { values, n })
    }

    fn mlp_forward(&self, slots: &MlpSlots, input: Vec<F>, rows: usize, din: usize, dmid: usize, dout: usize) -> (Vec<F>, MlpCache<F>) {
        let pre = linear(&input, rows, din, self.p(&slots.w1), self.p(&slots.b1), dmid);
        let act = relu(&pre);
        let out = linear(&act, rows, dmid, self.p(&slots.w2), self.p(&slots.b2), dout);
        (out, MlpCache { input, pre, act })
    }

    #[allow(clippy::too_many_arguments)]
    fn mlp_backward(&self, slots: &MlpSlots, cache: &MlpCache<F>, rows: usize, din: usize, dmid: usize, dout: usize, dout_grad: &[F], grads: &mut [F], want_dx: bool) -> Option<Vec<F>> {
        let (dw2, db2) = split2(grads, slots.w2.clone(), slots.b2.clone());
        let mut dact = linear_backward(&cache.act, rows, dmid, self.p(&slots.w2), dout_grad, dout, dw2, db2, true).unwrap();
        relu_backward(&cache.pre, &mut dact);
        let (dw1, db1) = split2(grads, slots.w1.clone(), slots.b1.clone());
        linear_backward(&cache.input, rows, din, self.p(&slots.w1), &dact, dmid, dw1, db1, want_dx)
    }

    /// Runs the network. `k_cond = 0` asks for the count posterior.
    pub fn forward(&self, input: &EncodedInput<F>, k_cond: usize) -> Result<ForwardOutput<F>> {
        self.forward_cached(input, k_cond, true).map(|(out, _)| out)
    }

    /// Forward pass that also returns the activation cache.
    ///
    /// With `with_token = false` the count token is dropped entirely and
    /// `count_logits` is empty; object outputs are unchanged.
    pub fn forward_cached(&self, input: &EncodedInput<F>, k_cond: usize, with_token: bool) -> Result<(ForwardOutput<F>, Cache<F>)> {
        let cfg = &self.cfg;
        let (n, d, e, h, kmax) = (input.n, cfg.d_in, cfg.d_embed, cfg.d_hidden, cfg.k_max);
        if n == 0 {
            return Err(Error::Argument("empty dataset".into()));
        }
        if input.values.len() != n * d {
            return Err(Error::Argument("encoded input has the wrong size".into()));
        }
        if k_cond > kmax {
            return Err(Error::Argument(format!("k_cond {k_cond} exceeds k_max {kmax}")));
        }
        if input.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite model input".into()));
        }
        let l = &self.layout;

        let (mut x, object_embed) = self.mlp_forward(&l.object, input.values.clone(), n, d, e, e);
        let cond_in = vec![F::cast(k_cond as f64 / kmax as f64)];
        let (cond, condition_embed) = self.mlp_forward(&l.condition, cond_in, 1, 1, e, e);
        for row in x.chunks_exact_mut(e) {
            for (v, c) in row.iter_mut().zip(&cond) {
                *v += *c;
            }
        }
        let (mut xt, token_embed) = if with_token {
            let (t, c) = self.mlp_forward(&l.token, vec![F::cast(cfg.sentinel); d], 1, d, e, e);
            (Some(t), Some(c))
        } else {
            (None, None)
        };

        let mut layers = Vec::with_capacity(cfg.n_layers);
        for slots in &l.layers {
            let proj = |inp: &[F], rows: usize| {
                (
                    linear(inp, rows, e, self.p(&slots.wq), self.p(&slots.bq), e),
                    linear(inp, rows, e, self.p(&slots.wk), self.p(&slots.bk), e),
                    linear(inp, rows, e, self.p(&slots.wv), self.p(&slots.bv), e),
                )
            };
            let (q, k, v) = proj(&x, n);
            let (probs, attn) = self.object_attention(&q, &k, &v, n);
            let token_parts = xt.as_ref().map(|t| {
                let (qt, kt, vt) = proj(t, 1);
                let (tp, at) = self.token_attention(&qt, &kt, &vt, &k, &v, n);
                (qt, kt, vt, tp, at)
            });

            let block = |xin: Vec<F>, q: Vec<F>, k: Vec<F>, v: Vec<F>, attn: Vec<F>, rows: usize| {
                let o = linear(&attn, rows, e, self.p(&slots.wo), self.p(&slots.bo), e);
                let r1: Vec<F> = xin.iter().zip(&o).map(|(&a, &b)| a + b).collect();
                let (h1, ln1_hat, ln1_rstd) = layer_norm(&r1, e, self.p(&slots.ln1_g), self.p(&slots.ln1_b));
                let ff_pre = linear(&h1, rows, e, self.p(&slots.ff_w1), self.p(&slots.ff_b1), h);
                let ff_act = relu(&ff_pre);
                let f = linear(&ff_act, rows, h, self.p(&slots.ff_w2), self.p(&slots.ff_b2), e);
                let r2: Vec<F> = h1.iter().zip(&f).map(|(&a, &b)| a + b).collect();
                let (y, ln2_hat, ln2_rstd) = layer_norm(&r2, e, self.p(&slots.ln2_g), self.p(&slots.ln2_b));
                (
                    y,
                    StreamLayerCache { x: xin, q, k, v, attn, ln1_hat, ln1_rstd, h1, ff_pre, ff_act, ln2_hat, ln2_rstd },
                )
            };

            let (y, objects) = block(x, q, k, v, attn, n);
            x = y;
            let (token, token_probs) = match (token_parts, xt.take()) {
                (Some((qt, kt, vt, tp, at)), Some(t)) => {
                    let (yt, c) = block(t, qt, kt, vt, at, 1);
                    xt = Some(yt);
                    (Some(c), tp)
                }
                _ => (None, Vec::new()),
            };
            layers.push(LayerCache { objects, token, probs, token_probs });
        }

        let assign_logits = linear(&x, n, e, self.p(&l.assign_w), self.p(&l.assign_b), kmax);
        let (count_logits, count_head) = match &xt {
            Some(t) => {
                let (c, cache) = self.mlp_forward(&l.count, t.clone(), 1, e, e, kmax);
                (c, Some(cache))
            }
            None => (Vec::new(), None),
        };
        let out = ForwardOutput { assign_logits, count_logits, n, k_max: kmax };
        let cache = Cache {
            n,
            object_embed,
            condition_embed,
            token_embed,
            layers,
            final_objects: x,
            final_token: xt,
            count_head,
        };
        Ok((out, cache))
    }

    fn scale(&self) -> F {
        F::cast(1.0 / (self.cfg.head_dim() as f64).sqrt())
    }

    /// Returns per-head probabilities (`heads x n x n`) and the concatenated
    /// head outputs (`n x e`).
    fn object_attention(&self, q: &[F], k: &[F], v: &[F], n: usize) -> (Vec<F>, Vec<F>) {
        let (e, dh) = (self.cfg.d_embed, self.cfg.head_dim());
        let mut probs = vec![F::zero(); self.cfg.n_heads * n * n];
        let mut attn = vec![F::zero(); n * e];
        for (hd, p) in probs.chunks_exact_mut(n * n).enumerate() {
            let c0 = hd * dh;
            gemm(self.scale(), View::cols(q, n, e, c0, dh), View::cols(k, n, e, c0, dh).t(), F::zero(), ViewMut::new(p, n, n));
            p.chunks_exact_mut(n).for_each(softmax_in_place);
            gemm(F::one(), View::new(p, n, n), View::cols(v, n, e, c0, dh), F::zero(), ViewMut::cols(&mut attn, n, e, c0, dh));
        }
        (probs, attn)
    }

    /// Count-token attention over the `n` object keys plus its own key.
    fn token_attention(&self, qt: &[F], kt: &[F], vt: &[F], k: &[F], v: &[F], n: usize) -> (Vec<F>, Vec<F>) {
        let (e, dh) = (self.cfg.d_embed, self.cfg.head_dim());
        let scale = self.scale();
        let mut probs = vec![F::zero(); self.cfg.n_heads * (n + 1)];
        let mut attn = vec![F::zero(); e];
        for (hd, p) in probs.chunks_exact_mut(n + 1).enumerate() {
            let cols = hd * dh..(hd + 1) * dh;
            let qh = &qt[cols.clone()];
            for (j, krow) in k.chunks_exact(e).enumerate() {
                p[j] = scale * dot(qh, &krow[cols.clone()]);
            }
            p[n] = scale * dot(qh, &kt[cols.clone()]);
            softmax_in_place(p);
            let out = &mut attn[cols.clone()];
            for (j, vrow) in v.chunks_exact(e).enumerate() {
                axpy(p[j], &vrow[cols.clone()], out);
            }
            axpy(p[n], &vt[cols.clone()], out);
        }
        (probs, attn)
    }

    /// Backpropagates output gradients, accumulating into `grads`.
    pub fn backward(&self, cache: &Cache<F>, d_assign: &[F], d_count: &[F], grads: &mut [F]) {
        let cfg = &self.cfg;
        let (n, d, e, h, kmax) = (cache.n, cfg.d_in, cfg.d_embed, cfg.d_hidden, cfg.k_max);
        let l = &self.layout;
        assert_eq!(grads.len(), l.total);

        let (dw, db) = split2(grads, l.assign_w.clone(), l.assign_b.clone());
        let mut dx = linear_backward(&cache.final_objects, n, e, self.p(&l.assign_w), d_assign, kmax, dw, db, true).unwrap();
        let mut dxt = match (&cache.count_head, cache.final_token.as_ref()) {
            (Some(ch), Some(_)) => self.mlp_backward(&l.count, ch, 1, e, e, kmax, d_count, grads, true),
            _ => None,
        };

        for (slots, lc) in l.layers.iter().zip(&cache.layers).rev() {
            // Post-attention part of the block, per stream.
            let block_back = |sc: &StreamLayerCache<F>, dy: &[F], rows: usize, grads: &mut [F]| -> (Vec<F>, Vec<F>) {
                let (dg, dbb) = split2(grads, slots.ln2_g.clone(), slots.ln2_b.clone());
                let dr2 = layer_norm_backward(&sc.ln2_hat, &sc.ln2_rstd, e, self.p(&slots.ln2_g), dy, dg, dbb);
                let (dw2, db2) = split2(grads, slots.ff_w2.clone(), slots.ff_b2.clone());
                let mut dact = linear_backward(&sc.ff_act, rows, h, self.p(&slots.ff_w2), &dr2, e, dw2, db2, true).unwrap();
                relu_backward(&sc.ff_pre, &mut dact);
                let (dw1, db1) = split2(grads, slots.ff_w1.clone(), slots.ff_b1.clone());
                let dh1_ff = linear_backward(&sc.h1, rows, e, self.p(&slots.ff_w1), &dact, h, dw1, db1, true).unwrap();
                let dh1: Vec<F> = dr2.iter().zip(&dh1_ff).map(|(&a, &b)| a + b).collect();
                let (dg, dbb) = split2(grads, slots.ln1_g.clone(), slots.ln1_b.clone());
                let dr1 = layer_norm_backward(&sc.ln1_hat, &sc.ln1_rstd, e, self.p(&slots.ln1_g), &dh1, dg, dbb);
                let (dwo, dbo) = split2(grads, slots.wo.clone(), slots.bo.clone());
                let dattn = linear_backward(&sc.attn, rows, e, self.p(&slots.wo), &dr1, e, dwo, dbo, true).unwrap();
                (dr1, dattn)
            };

            let (dres, dattn) = block_back(&lc.objects, &dx, n, grads);
            let token_back = match (&lc.token, &dxt) {
                (Some(tc), Some(dy)) => Some(block_back(tc, dy, 1, grads)),
                _ => None,
            };

            let mut dq = vec![F::zero(); n * e];
            let mut dk = vec![F::zero(); n * e];
            let mut dv = vec![F::zero(); n * e];
            self.object_attention_backward(&lc.objects, &lc.probs, &dattn, n, &mut dq, &mut dk, &mut dv);

            let mut token_grads = None;
            if let (Some(tc), Some((dres_t, dattn_t))) = (&lc.token, token_back) {
                let (dqt, dkt, dvt) = self.token_attention_backward(tc, &lc.objects, &lc.token_probs, &dattn_t, n, &mut dk, &mut dv);
                token_grads = Some((tc, dres_t, dqt, dkt, dvt));
            }

            let proj_back = |xin: &[F], rows: usize, dq: &[F], dk: &[F], dv: &[F], mut dres: Vec<F>, grads: &mut [F]| {
                for (w, b, dproj) in [
                    (&slots.wq, &slots.bq, dq),
                    (&slots.wk, &slots.bk, dk),
                    (&slots.wv, &slots.bv, dv),
                ] {
                    let (dw, db) = split2(grads, w.clone(), b.clone());
                    let dxin = linear_backward(xin, rows, e, self.p(w), dproj, e, dw, db, true).unwrap();
                    dres.iter_mut().zip(&dxin).for_each(|(a, &b)| *a += b);
                }
                dres
            };
            dx = proj_back(&lc.objects.x, n, &dq, &dk, &dv, dres, grads);
            dxt = token_grads.map(|(tc, dres_t, dqt, dkt, dvt)| proj_back(&tc.x, 1, &dqt, &dkt, &dvt, dres_t, grads));
        }

        // Embedders.
        let mut dcond = vec![F::zero(); e];
        for row in dx.chunks_exact(e) {
            dcond.iter_mut().zip(row).for_each(|(a, &b)| *a += b);
        }
        self.mlp_backward(&l.condition, &cache.condition_embed, 1, 1, e, e, &dcond, grads, false);
        self.mlp_backward(&l.object, &cache.object_embed, n, d, e, e, &dx, grads, false);
        if let (Some(tcache), Some(dt)) = (&cache.token_embed, &dxt) {
            self.mlp_backward(&l.token, tcache, 1, d, e, e, dt, grads, false);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn object_attention_backward(&self, sc: &StreamLayerCache<F>, probs: &[F], dattn: &[F], n: usize, dq: &mut [F], dk: &mut [F], dv: &mut [F]) {
        let (e, dh) = (self.cfg.d_embed, self.cfg.head_dim());
        let scale = self.scale();
        let mut dp = vec![F::zero(); n * n];
        for (hd, p) in probs.chunks_exact(n * n).enumerate() {
            let c0 = hd * dh;
            gemm(F::one(), View::cols(dattn, n, e, c0, dh), View::cols(&sc.v, n, e, c0, dh).t(), F::zero(), ViewMut::new(&mut dp, n, n));
            gemm(F::one(), View::new(p, n, n).t(), View::cols(dattn, n, e, c0, dh), F::one(), ViewMut::cols(dv, n, e, c0, dh));
            for (prow, drow) in p.chunks_exact(n).zip(dp.chunks_exact_mut(n)) {
                softmax_backward_in_place(prow, drow);
            }
            gemm(scale, View::new(&dp, n, n), View::cols(&sc.k, n, e, c0, dh), F::one(), ViewMut::cols(dq, n, e, c0, dh));
            gemm(scale, View::new(&dp, n, n).t(), View::cols(&sc.q, n, e, c0, dh), F::one(), ViewMut::cols(dk, n, e, c0, dh));
        }
    }

    /// Returns `(dq_t, dk_t, dv_t)` and accumulates into the object `dk`, `dv`.
    #[allow(clippy::too_many_arguments)]
    fn token_attention_backward(&self, tc: &StreamLayerCache<F>, oc: &StreamLayerCache<F>, probs: &[F], dattn_t: &[F], n: usize, dk: &mut [F], dv: &mut [F]) -> (Vec<F>, Vec<F>, Vec<F>) {
        let (e, dh) = (self.cfg.d_embed, self.cfg.head_dim());
        let scale = self.scale();
        let mut dqt = vec![F::zero(); e];
        let mut dkt = vec![F::zero(); e];
        let mut dvt = vec![F::zero(); e];
        let mut dp = vec![F::zero(); n + 1];
        for (hd, p) in probs.chunks_exact(n + 1).enumerate() {
            let cols = hd * dh..(hd + 1) * dh;
            let da = &dattn_t[cols.clone()];
            for (j, vrow) in oc.v.chunks_exact(e).enumerate() {
                dp[j] = dot(da, &vrow[cols.clone()]);
            }
            dp[n] = dot(da, &tc.v[cols.clone()]);
            for (j, dvrow) in dv.chunks_exact_mut(e).enumerate() {
                axpy(p[j], da, &mut dvrow[cols.clone()]);
            }
            axpy(p[n], da, &mut dvt[cols.clone()]);
            softmax_backward_in_place(p, &mut dp);
            let qh = &tc.q[cols.clone()];
            for (j, (krow, dkrow)) in oc.k.chunks_exact(e).zip(dk.chunks_exact_mut(e)).enumerate() {
                axpy(scale * dp[j], &krow[cols.clone()], &mut dqt[cols.clone()]);
                axpy(scale * dp[j], qh, &mut dkrow[cols.clone()]);
            }
            axpy(scale * dp[n], &tc.k[cols.clone()], &mut dqt[cols.clone()]);
            axpy(scale * dp[n], qh, &mut dkt[cols.clone()]);
        }
        (dqt, dkt, dvt)
    }

    /// Loss of one dataset plus output gradients scaled by `weight`.
    pub fn loss_with_grads(out: &ForwardOutput<F>, z: &[usize], k_true: usize, weight: F) -> Result<(LossParts, Vec<F>, Vec<F>)> {
        let kmax = out.k_max;
        if z.len() != out.n {
            return Err(Error::Argument(format!("{} labels for {} points", z.len(), out.n)));
        }
        if k_true == 0 || k_true > kmax {
            return Err(Error::Argument(format!("k_true {k_true} outside 1..={kmax}")));
        }
        let nf = F::from_usize(out.n).unwrap();
        let mut d_assign = out.assign_logits.clone();
        let mut assign = 0.0;
        for (row, &label) in d_assign.chunks_exact_mut(kmax).zip(z) {
            if label >= kmax {
                return Err(Error::Argument(format!("label {label} outside 0..{kmax}")));
            }
            assign += (log_sum_exp(row) - row[label]).to_f64().unwrap();
            softmax_in_place(row);
            row[label] -= F::one();
            row.iter_mut().for_each(|g| *g = *g * weight / nf);
        }
        assign /= out.n as f64;
        let mut d_count = out.count_logits.clone();
        let mut count = 0.0;
        if !d_count.is_empty() {
            count = (log_sum_exp(&d_count) - d_count[k_true - 1]).to_f64().unwrap();
            softmax_in_place(&mut d_count);
            d_count[k_true - 1] -= F::one();
            d_count.iter_mut().for_each(|g| *g *= weight);
        }
        Ok((LossParts { assign, count }, d_assign, d_count))
    }

    /// Forward, loss and accumulated parameter gradients for one dataset.
    pub fn loss_and_grad(&self, input: &EncodedInput<F>, k_cond: usize, z: &[usize], k_true: usize, weight: F, grads: &mut [F]) -> Result<LossParts> {
        let (out, cache) = self.forward_cached(input, k_cond, true)?;
        let (parts, da, dc) = Self::loss_with_grads(&out, z, k_true, weight)?;
        self.backward(&cache, &da, &dc, grads);
        Ok(parts)
    }
}

/// Mean cross-entropy over objects plus the count cross-entropy.
pub fn loss<F: Real>(out: &ForwardOutput<F>, z: &[usize], k_true: usize) -> Result<LossParts> {
    Network::<F>::loss_with_grads(out, z, k_true, F::one()).map(|(p, _, _)| p)
}

fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn axpy<F: Real>(alpha: F, x: &[F], y: &mut [F]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
