//! Distribution kernels: temperature softmax, normalized entropy, soft-token
//! residual vectors and the masked-slot embedding blend.
//!
//! All functions are pure. The `*_into` variants write into caller buffers
//! and skip validation; they back the decode and training hot paths.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, RcdError, Result};

/// Tolerance on the sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Probability vector over the predictable vocabulary (the mask token is not
/// part of it).
#[derive(Debug, Clone, PartialEq)]
pub struct VocabDistribution {
    probs: Vec<f64>,
}

impl VocabDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return invalid("empty distribution");
        }
        if let Some((j, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return invalid(format!("probability {p} at index {j} is not a valid mass"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return invalid(format!("probabilities sum to {sum}"));
        }
        Ok(Self { probs })
    }

    pub fn uniform(v: usize) -> Self {
        Self { probs: vec![1.0 / v as f64; v] }
    }

    pub fn one_hot(v: usize, index: usize) -> Self {
        let mut probs = vec![0.0; v];
        probs[index] = 1.0;
        Self { probs }
    }

    /// Wraps a vector produced by one of the kernels in this module.
    pub(crate) fn from_kernel(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    /// Largest probability (the confidence score).
    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }
}

/// Unnormalized scores over the predictable vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    values: Vec<f64>,
}

impl Logits {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return invalid("empty logits");
        }
        if let Some(j) = values.iter().position(|z| !z.is_finite()) {
            return invalid(format!("non-finite logit at index {j}"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Input embedding table: one row per predictable token plus the mask row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCodebook {
    vocab: usize,
    dim: usize,
    /// Row-major `vocab x dim`.
    rows: Vec<f64>,
    mask_row: Vec<f64>,
}

impl EmbeddingCodebook {
    pub fn new(vocab: usize, dim: usize, rows: Vec<f64>, mask_row: Vec<f64>) -> Result<Self> {
        if vocab == 0 || dim == 0 {
            return invalid("codebook needs positive vocab and dim");
        }
        if rows.len() != vocab * dim {
            return Err(RcdError::DimensionMismatch(format!(
                "codebook rows have {} entries, expected {vocab}x{dim}",
                rows.len()
            )));
        }
        if mask_row.len() != dim {
            return Err(RcdError::DimensionMismatch(format!(
                "mask row has length {}, expected {dim}",
                mask_row.len()
            )));
        }
        if rows.iter().chain(&mask_row).any(|x| !x.is_finite()) {
            return invalid("codebook contains non-finite entries");
        }
        Ok(Self { vocab, dim, rows, mask_row })
    }

    pub fn zeros(vocab: usize, dim: usize) -> Self {
        Self { vocab, dim, rows: vec![0.0; vocab * dim], mask_row: vec![0.0; dim] }
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.dim..(j + 1) * self.dim]
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [f64] {
        &mut self.rows
    }

    pub fn mask_row(&self) -> &[f64] {
        &self.mask_row
    }

    pub fn mask_row_mut(&mut self) -> &mut [f64] {
        &mut self.mask_row
    }

    /// Token rows and mask row, mutably.
    pub fn buffers_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.rows, &mut self.mask_row)
    }

    /// Per-coordinate `(min, max)` over the token rows.
    pub fn coordinate_bounds(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|c| {
                (0..self.vocab).map(|j| self.rows[j * self.dim + c]).fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), x| (lo.min(x), hi.max(x)),
                )
            })
            .collect()
    }
}

/// Residual carried by a masked position into the next denoising step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualState {
    pub delta: Vec<f64>,
    pub alpha: f64,
}

impl ResidualState {
    pub fn new(delta: Vec<f64>, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return invalid(format!("alpha {alpha} outside [0, 1]"));
        }
        if delta.iter().any(|x| !x.is_finite()) {
            return invalid("residual vector has non-finite entries");
        }
        Ok(Self { delta, alpha })
    }

    /// The "no residual" state: blending with it reproduces the mask row.
    pub fn zero(dim: usize) -> Self {
        Self { delta: vec![0.0; dim], alpha: 0.0 }
    }

    /// Whether `delta` lies in the coordinatewise hull of the codebook rows.
    pub fn within_codebook_hull(&self, codebook: &EmbeddingCodebook, tol: f64) -> bool {
        self.delta.len() == codebook.dim()
            && self
                .delta
                .iter()
                .zip(codebook.coordinate_bounds())
                .all(|(x, (lo, hi))| *x >= lo - tol && *x <= hi + tol)
    }
}

/// Writes `softmax(z / temperature)` into `out`, subtracting the max first.
pub fn softmax_into(logits: &[f64], temperature: f64, out: &mut [f64]) {
    debug_assert_eq!(logits.len(), out.len());
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, z) in out.iter_mut().zip(logits) {
        let e = ((z - max) / temperature).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `softmax(z / T_res)`.
pub fn softmax_with_temperature(logits: &Logits, t_res: f64) -> Result<VocabDistribution> {
    if !(t_res > 0.0) || !t_res.is_finite() {
        return invalid(format!("temperature must be positive and finite, got {t_res}"));
    }
    let mut out = vec![0.0; logits.values.len()];
    softmax_into(&logits.values, t_res, &mut out);
    Ok(VocabDistribution::from_kernel(out))
}

/// Shannon entropy in nats with `0 log 0 = 0`.
pub fn entropy_nats(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// `H(p) / log V` on raw probabilities, clamped to `[0, 1]`. Requires `V >= 2`.
pub fn normalized_entropy_of(probs: &[f64]) -> f64 {
    (entropy_nats(probs) / (probs.len() as f64).ln()).clamp(0.0, 1.0)
}

/// Normalized Shannon entropy `H(p) / log V` in `[0, 1]`.
pub fn normalized_entropy(p: &VocabDistribution) -> Result<f64> {
    if p.len() < 2 {
        return invalid("normalized entropy undefined for a single-token vocabulary");
    }
    Ok(normalized_entropy_of(&p.probs))
}

/// Same quantity computed with an explicit logarithm base.
pub fn normalized_entropy_base(p: &VocabDistribution, base: f64) -> Result<f64> {
    if p.len() < 2 {
        return invalid("normalized entropy undefined for a single-token vocabulary");
    }
    if !(base > 0.0) || base == 1.0 {
        return invalid(format!("invalid logarithm base {base}"));
    }
    let h: f64 = -p
        .probs
        .iter()
        .filter(|x| **x > 0.0)
        .map(|x| x * x.log(base))
        .sum::<f64>();
    Ok((h / (p.len() as f64).log(base)).clamp(0.0, 1.0))
}

/// Writes `sum_j p_j * E[j, :]` into `out`.
pub fn residual_vector_into(probs: &[f64], codebook: &EmbeddingCodebook, out: &mut [f64]) {
    debug_assert_eq!(probs.len(), codebook.vocab);
    out.iter_mut().for_each(|x| *x = 0.0);
    for (j, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (o, e) in out.iter_mut().zip(codebook.row(j)) {
            *o += p * e;
        }
    }
}

/// Soft token: the probability-weighted sum of codebook rows.
pub fn residual_vector(p: &VocabDistribution, codebook: &EmbeddingCodebook) -> Result<Vec<f64>> {
    if p.len() != codebook.vocab() {
        return invalid(format!(
            "distribution has {} entries but codebook has {} rows",
            p.len(),
            codebook.vocab()
        ));
    }
    let mut out = vec![0.0; codebook.dim()];
    residual_vector_into(&p.probs, codebook, &mut out);
    Ok(out)
}

/// Input embedding of one position: masked slots interpolate toward the
/// previous step's residual, unmasked slots pass through unchanged.
pub fn blend_embedding(
    token_is_masked: bool,
    token_embedding: &[f64],
    prev_residual: &ResidualState,
) -> Result<Vec<f64>> {
    let alpha = prev_residual.alpha;
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("alpha {alpha} outside [0, 1]"));
    }
    if !token_is_masked {
        return Ok(token_embedding.to_vec());
    }
    if prev_residual.delta.len() != token_embedding.len() {
        return invalid(format!(
            "residual has dimension {}, embedding has {}",
            prev_residual.delta.len(),
            token_embedding.len()
        ));
    }
    Ok(token_embedding
        .iter()
        .zip(&prev_residual.delta)
        .map(|(e, d)| (1.0 - alpha) * e + alpha * d)
        .collect())
}
