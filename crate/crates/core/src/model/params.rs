use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Input feature width, padding included.
    pub d_in: usize,
    /// Number of output classes for both heads.
    pub k_max: usize,
    pub d_embed: usize,
    /// Width of the position-wise feed-forward layer.
    pub d_hidden: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    /// Feature value of the count token.
    pub sentinel: f64,
    /// Value substituted for missing inputs.
    pub missing_fill: f64,
}

impl ModelConfig {
    /// Full-size architecture: 256-wide embeddings, 512-wide feed-forward,
    /// 4 heads, 4 layers, 10 classes.
    pub fn full(d_in: usize) -> Self {
        ModelConfig {
            d_in,
            k_max: 10,
            d_embed: 256,
            d_hidden: 512,
            n_heads: 4,
            n_layers: 4,
            sentinel: -1.0,
            missing_fill: -1.0,
        }
    }

    /// Reduced architecture for CPU training.
    pub fn desk(d_in: usize) -> Self {
        ModelConfig {
            d_embed: 128,
            d_hidden: 256,
            n_layers: 2,
            ..ModelConfig::full(d_in)
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_embed / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_embed == 0 || self.d_hidden == 0 || self.n_heads == 0 {
            return Err(Error::Config("model widths and head count must be positive".into()));
        }
        if self.d_embed % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_embed {} not divisible by n_heads {}",
                self.d_embed, self.n_heads
            )));
        }
        if self.k_max == 0 {
            return Err(Error::Config("k_max must be >= 1".into()));
        }
        Ok(())
    }

    /// Closed-form parameter count.
    ///
    /// ```text
    /// object / count-token embedders: 2 * (d_in*e + e + e*e + e)
    /// condition embedder:             e + e + e*e + e
    /// per layer:                      4*(e*e + e) + (e*h + h + h*e + e) + 4*e
    /// assignment head:                e*K + K
    /// count head:                     e*e + e + e*K + K
    /// ```
    pub fn param_count(&self) -> usize {
        let (d, e, h, k) = (self.d_in, self.d_embed, self.d_hidden, self.k_max);
        let embedders = 2 * (d * e + e + e * e + e) + (e + e + e * e + e);
        let layer = 4 * (e * e + e) + (e * h + h + h * e + e) + 4 * e;
        embedders + self.n_layers * layer + (e * k + k) + (e * e + e + e * k + k)
    }
}

/// Location and shape of one tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub name: String,
    pub shape: Vec<usize>,
    pub range: Range<usize>,
    init: Init,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    FanIn(usize),
    Zero,
    One,
}

/// Two-layer perceptron `in -> e -> e` (or `e -> K` for the count head).
#[derive(Debug, Clone)]
pub struct MlpSlots {
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct LayerSlots {
    pub wq: Range<usize>,
    pub bq: Range<usize>,
    pub wk: Range<usize>,
    pub bk: Range<usize>,
    pub wv: Range<usize>,
    pub bv: Range<usize>,
    pub wo: Range<usize>,
    pub bo: Range<usize>,
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub ff_w1: Range<usize>,
    pub ff_b1: Range<usize>,
    pub ff_w2: Range<usize>,
    pub ff_b2: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
}

/// Named layout of every parameter tensor.
#[derive(Debug, Clone)]
pub struct Layout {
    pub slots: Vec<Slot>,
    pub object: MlpSlots,
    pub token: MlpSlots,
    pub condition: MlpSlots,
    pub layers: Vec<LayerSlots>,
    pub assign_w: Range<usize>,
    pub assign_b: Range<usize>,
    pub count: MlpSlots,
    pub total: usize,
}

struct Builder {
    slots: Vec<Slot>,
    offset: usize,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> Range<usize> {
        let size: usize = shape.iter().product();
        let range = self.offset..self.offset + size;
        self.offset += size;
        self.slots.push(Slot { name, shape, range: range.clone(), init });
        range
    }

    fn weight(&mut self, name: String, rows: usize, cols: usize) -> Range<usize> {
        self.add(name, vec![rows, cols], Init::FanIn(rows))
    }

    fn bias(&mut self, name: String, len: usize) -> Range<usize> {
        self.add(name, vec![len], Init::Zero)
    }

    fn mlp(&mut self, prefix: &str, din: usize, dmid: usize, dout: usize) -> MlpSlots {
        MlpSlots {
            w1: self.weight(format!("{prefix}.w1"), din, dmid),
            b1: self.bias(format!("{prefix}.b1"), dmid),
            w2: self.weight(format!("{prefix}.w2"), dmid, dout),
            b2: self.bias(format!("{prefix}.b2"), dout),
        }
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (d, e, h, k) = (cfg.d_in, cfg.d_embed, cfg.d_hidden, cfg.k_max);
        let mut b = Builder { slots: Vec::new(), offset: 0 };
        let object = b.mlp("object_embed", d, e, e);
        let token = b.mlp("count_token_embed", d, e, e);
        let condition = b.mlp("condition_embed", 1, e, e);
        let layers = (0..cfg.n_layers)
            .map(|l| {
                let p = format!("layer{l}");
                LayerSlots {
                    wq: b.weight(format!("{p}.attn.wq"), e, e),
                    bq: b.bias(format!("{p}.attn.bq"), e),
                    wk: b.weight(format!("{p}.attn.wk"), e, e),
                    bk: b.bias(format!("{p}.attn.bk"), e),
                    wv: b.weight(format!("{p}.attn.wv"), e, e),
                    bv: b.bias(format!("{p}.attn.bv"), e),
                    wo: b.weight(format!("{p}.attn.wo"), e, e),
                    bo: b.bias(format!("{p}.attn.bo"), e),
                    ln1_g: b.add(format!("{p}.ln1.gain"), vec![e], Init::One),
                    ln1_b: b.bias(format!("{p}.ln1.bias"), e),
                    ff_w1: b.weight(format!("{p}.ff.w1"), e, h),
                    ff_b1: b.bias(format!("{p}.ff.b1"), h),
                    ff_w2: b.weight(format!("{p}.ff.w2"), h, e),
                    ff_b2: b.bias(format!("{p}.ff.b2"), e),
                    ln2_g: b.add(format!("{p}.ln2.gain"), vec![e], Init::One),
                    ln2_b: b.bias(format!("{p}.ln2.bias"), e),
                }
            })
            .collect();
        let assign_w = b.weight("assign_head.w".into(), e, k);
        let assign_b = b.bias("assign_head.b".into(), k);
        let count = b.mlp("count_head", e, e, k);
        Layout {
            slots: b.slots,
            object,
            token,
            condition,
            layers,
            assign_w,
            assign_b,
            count,
            total: b.offset,
        }
    }
}

/// Flat parameter (or gradient) storage with its layout.
#[derive(Debug, Clone)]
pub struct Parameters<F> {
    pub data: Vec<F>,
}

impl<F: Real> Parameters<F> {
    pub fn zeros(layout: &Layout) -> Self {
        Parameters { data: vec![F::zero(); layout.total] }
    }

    /// Fan-in scaled uniform init: weights `U(-sqrt(3/fan_in), sqrt(3/fan_in))`
    /// (unit output variance for unit-variance inputs), biases and
    /// layer-norm offsets 0, layer-norm gains 1.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![F::zero(); layout.total];
        for slot in &layout.slots {
            match slot.init {
                Init::Zero => {}
                Init::One => data[slot.range.clone()].iter_mut().for_each(|v| *v = F::one()),
                Init::FanIn(fan_in) => {
                    let bound = (3.0 / fan_in as f64).sqrt();
                    for v in &mut data[slot.range.clone()] {
                        *v = F::cast(rng.random_range(-bound..bound));
                    }
                }
            }
        }
        Ok(Parameters { data })
    }

    pub fn cast<G: Real>(&self) -> Parameters<G> {
        Parameters { data: self.data.iter().map(|v| G::cast(v.to_f64().unwrap())).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
