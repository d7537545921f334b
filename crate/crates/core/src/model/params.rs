use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::prob::EmbeddingCodebook;
use crate::rng::{stream, substream};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Predictable vocabulary size (the mask token is extra).
    pub vocab: usize,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff: usize,
    pub max_len: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self { vocab: 64, dim: 64, layers: 4, heads: 4, ff: 256, max_len: 512 }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 {
            return invalid("vocab must be at least 2");
        }
        if self.dim == 0 || self.heads == 0 || self.ff == 0 || self.max_len == 0 {
            return invalid("model dimensions must be positive");
        }
        if !self.dim.is_multiple_of(self.heads) {
            return invalid(format!("dim {} not divisible by heads {}", self.dim, self.heads));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub norm1_gain: Vec<f64>,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
    pub norm2_gain: Vec<f64>,
    /// `dim x ff`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `ff x dim`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl LayerParams {
    fn zeros(d: usize, f: usize) -> Self {
        Self {
            norm1_gain: vec![0.0; d],
            wq: vec![0.0; d * d],
            wk: vec![0.0; d * d],
            wv: vec![0.0; d * d],
            wo: vec![0.0; d * d],
            norm2_gain: vec![0.0; d],
            w1: vec![0.0; d * f],
            b1: vec![0.0; f],
            w2: vec![0.0; f * d],
            b2: vec![0.0; d],
        }
    }
}

/// All trainable parameters of a denoiser. Also used as the gradient
/// container, since gradients share the parameter shapes.
#[derive(Debug, Clone)]
pub struct DenoiserParams {
    pub dims: ModelDims,
    pub input_codebook: EmbeddingCodebook,
    /// `max_len x dim`
    pub positional: Vec<f64>,
    pub layers: Vec<LayerParams>,
    pub final_norm_gain: Vec<f64>,
    /// `dim x vocab`, independent of the input codebook.
    pub lm_head: Vec<f64>,
    /// Bumped by every optimizer update; forward traces remember it.
    pub(crate) epoch: u64,
}

/// Equal when dimensions and every value agree; the update counter is ignored.
impl PartialEq for DenoiserParams {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.tensors() == other.tensors()
    }
}

impl DenoiserParams {
    /// Every tensor set to zero, norm gains included.
    pub fn zeros(dims: ModelDims) -> Result<Self> {
        dims.validate()?;
        let ModelDims { vocab: v, dim: d, layers, ff: f, max_len, .. } = dims;
        Ok(Self {
            dims,
            input_codebook: EmbeddingCodebook::zeros(v, d),
            positional: vec![0.0; max_len * d],
            layers: (0..layers).map(|_| LayerParams::zeros(d, f)).collect(),
            final_norm_gain: vec![0.0; d],
            lm_head: vec![0.0; d * v],
            epoch: 0,
        })
    }

    /// Gaussian initialization from the `init` stream of `seed`.
    pub fn init(dims: ModelDims, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        let mut rng = substream(seed, stream::INIT);
        let std = 0.02;
        let out_std = std / (2.0 * dims.layers.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        let out_normal = Normal::new(0.0, out_std).expect("valid std");
        let fill = |xs: &mut [f64], dist: &Normal<f64>, rng: &mut crate::rng::Rng| {
            xs.iter_mut().for_each(|x| *x = dist.sample(rng));
        };
        fill(p.input_codebook.rows_mut(), &normal, &mut rng);
        fill(p.input_codebook.mask_row_mut(), &normal, &mut rng);
        fill(&mut p.positional, &normal, &mut rng);
        for layer in &mut p.layers {
            layer.norm1_gain.iter_mut().for_each(|g| *g = 1.0);
            layer.norm2_gain.iter_mut().for_each(|g| *g = 1.0);
            fill(&mut layer.wq, &normal, &mut rng);
            fill(&mut layer.wk, &normal, &mut rng);
            fill(&mut layer.wv, &normal, &mut rng);
            fill(&mut layer.wo, &out_normal, &mut rng);
            fill(&mut layer.w1, &normal, &mut rng);
            fill(&mut layer.w2, &out_normal, &mut rng);
        }
        p.final_norm_gain.iter_mut().for_each(|g| *g = 1.0);
        fill(&mut p.lm_head, &normal, &mut rng);
        Ok(p)
    }

    /// Zero tensor set with the same shapes, for accumulating gradients.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims).expect("dims already validated")
    }

    /// Named tensors with their shapes, in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let ModelDims { vocab: v, dim: d, ff: f, max_len, .. } = self.dims;
        let mut out: Vec<(String, Vec<usize>, &[f64])> = vec![
            ("tok_emb".into(), vec![v, d], self.input_codebook.rows()),
            ("mask_emb".into(), vec![d], self.input_codebook.mask_row()),
            ("pos_emb".into(), vec![max_len, d], &self.positional),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let name = |s: &str| format!("layers.{i}.{s}");
            out.push((name("norm1.gain"), vec![d], &l.norm1_gain));
            out.push((name("attn.wq"), vec![d, d], &l.wq));
            out.push((name("attn.wk"), vec![d, d], &l.wk));
            out.push((name("attn.wv"), vec![d, d], &l.wv));
            out.push((name("attn.wo"), vec![d, d], &l.wo));
            out.push((name("norm2.gain"), vec![d], &l.norm2_gain));
            out.push((name("ff.w1"), vec![d, f], &l.w1));
            out.push((name("ff.b1"), vec![f], &l.b1));
            out.push((name("ff.w2"), vec![f, d], &l.w2));
            out.push((name("ff.b2"), vec![d], &l.b2));
        }
        out.push(("final_norm.gain".into(), vec![d], &self.final_norm_gain));
        out.push(("lm_head".into(), vec![d, v], &self.lm_head));
        out
    }

    /// Mutable views in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let (rows, mask) = self.input_codebook.buffers_mut();
        let mut out: Vec<&mut [f64]> = vec![rows, mask, &mut self.positional];
        for l in &mut self.layers {
            out.push(&mut l.norm1_gain);
            out.push(&mut l.wq);
            out.push(&mut l.wk);
            out.push(&mut l.wv);
            out.push(&mut l.wo);
            out.push(&mut l.norm2_gain);
            out.push(&mut l.w1);
            out.push(&mut l.b1);
            out.push(&mut l.w2);
            out.push(&mut l.b2);
        }
        out.push(&mut self.final_norm_gain);
        out.push(&mut self.lm_head);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Self) {
        let src: Vec<&[f64]> = other.tensors().into_iter().map(|(_, _, t)| t).collect();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            crate::tensor::add_assign(dst, src);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Rounds every value to the nearest `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
        self.epoch += 1;
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, t)| t.iter().all(|x| x.is_finite()))
    }

    pub(crate) fn bump_epoch(&mut self) {
        self.epoch += 1;
    }
}
