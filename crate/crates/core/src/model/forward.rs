//! Embedding, forward pass and reverse-mode gradients.
//!
//! Attention is block-causal: the committed prefix attends to itself, the
//! block under denoising attends to prefix and block, and anything past the
//! block is invisible to both.

use crate::error::{invalid, RcdError, Result};
use crate::prob::ResidualState;
use crate::tensor::{add_assign, matmul, matmul_a_bt, matmul_acc, matmul_at_b_acc};

use super::params::{DenoiserParams, LayerParams, ModelDims};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// One input position: a known token or the mask token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Token(u32),
    Mask,
}

impl Slot {
    pub fn is_mask(self) -> bool {
        matches!(self, Slot::Mask)
    }

    pub fn token(self) -> Option<u32> {
        match self {
            Slot::Token(t) => Some(t),
            Slot::Mask => None,
        }
    }
}

/// Residual given as a distribution, so the soft token is rebuilt from the
/// live codebook and gradients reach the codebook rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftResidual {
    pub alpha: f64,
    pub probs: Vec<f64>,
}

/// Which positions are committed context and which form the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionScheme {
    pub committed_prefix_len: usize,
    /// Half-open `[start, end)`.
    pub block_span: (usize, usize),
}

impl AttentionScheme {
    /// Prefix `[0, prefix_len)` followed by a block of `block_len` positions.
    pub fn new(prefix_len: usize, block_len: usize) -> Self {
        Self { committed_prefix_len: prefix_len, block_span: (prefix_len, prefix_len + block_len) }
    }

    pub fn block_len(&self) -> usize {
        self.block_span.1 - self.block_span.0
    }

    pub fn validate(&self, seq_len: usize) -> Result<()> {
        let (start, end) = self.block_span;
        if start != self.committed_prefix_len {
            return invalid(format!(
                "block starts at {start} but prefix has length {}",
                self.committed_prefix_len
            ));
        }
        if end <= start {
            return invalid("empty block span");
        }
        if end > seq_len {
            return Err(RcdError::DimensionMismatch(format!(
                "block ends at {end} but sequence has {seq_len} positions"
            )));
        }
        Ok(())
    }

    fn segment(&self, pos: usize) -> u8 {
        if pos < self.committed_prefix_len {
            0
        } else if pos < self.block_span.1 {
            1
        } else {
            2
        }
    }

    /// Whether `query` may attend to `key`.
    pub fn visible(&self, query: usize, key: usize) -> bool {
        self.segment(key) <= self.segment(query)
    }
}

fn check_token(id: u32, vocab: usize, pos: usize) -> Result<usize> {
    let id = id as usize;
    if id >= vocab {
        return invalid(format!("token id {id} at position {pos} is outside vocabulary of {vocab}"));
    }
    Ok(id)
}

fn check_len(dims: &ModelDims, len: usize) -> Result<()> {
    if len == 0 {
        return invalid("empty input sequence");
    }
    if len > dims.max_len {
        return invalid(format!("sequence length {len} exceeds max_len {}", dims.max_len));
    }
    Ok(())
}

/// Input embeddings (`len x dim`, row-major).
///
/// Masked positions blend the mask row with their residual when one is given;
/// unmasked positions always get their token row. Positional rows are added
/// everywhere.
pub fn embed(
    params: &DenoiserParams,
    slots: &[Slot],
    residuals: Option<&[Option<ResidualState>]>,
) -> Result<Vec<f64>> {
    let dims = &params.dims;
    let d = dims.dim;
    check_len(dims, slots.len())?;
    if let Some(r) = residuals {
        if r.len() != slots.len() {
            return invalid(format!("{} residual slots for {} positions", r.len(), slots.len()));
        }
    }
    let cb = &params.input_codebook;
    let mut out = vec![0.0; slots.len() * d];
    for (i, slot) in slots.iter().enumerate() {
        let row = &mut out[i * d..(i + 1) * d];
        match *slot {
            Slot::Token(id) => row.copy_from_slice(cb.row(check_token(id, dims.vocab, i)?)),
            Slot::Mask => match residuals.and_then(|r| r[i].as_ref()) {
                Some(res) => {
                    if res.delta.len() != d {
                        return invalid(format!(
                            "residual at position {i} has dimension {}, model has {d}",
                            res.delta.len()
                        ));
                    }
                    if !(0.0..=1.0).contains(&res.alpha) {
                        return invalid(format!("alpha {} outside [0, 1]", res.alpha));
                    }
                    let a = res.alpha;
                    for ((o, m), r) in row.iter_mut().zip(cb.mask_row()).zip(&res.delta) {
                        *o = (1.0 - a) * m + a * r;
                    }
                }
                None => row.copy_from_slice(cb.mask_row()),
            },
        }
        add_assign(row, &params.positional[i * d..(i + 1) * d]);
    }
    Ok(out)
}

/// Like [`embed`], with residuals given as distributions over the codebook.
pub fn embed_soft(
    params: &DenoiserParams,
    slots: &[Slot],
    soft: &[Option<SoftResidual>],
) -> Result<Vec<f64>> {
    let dims = &params.dims;
    if soft.len() != slots.len() {
        return invalid(format!("{} residual slots for {} positions", soft.len(), slots.len()));
    }
    let mut residuals = Vec::with_capacity(slots.len());
    for (slot, s) in slots.iter().zip(soft) {
        residuals.push(match (slot, s) {
            (Slot::Mask, Some(s)) => {
                if s.probs.len() != dims.vocab {
                    return invalid("soft residual width differs from vocabulary");
                }
                let mut delta = vec![0.0; dims.dim];
                crate::prob::residual_vector_into(&s.probs, &params.input_codebook, &mut delta);
                Some(ResidualState { delta, alpha: s.alpha })
            }
            _ => None,
        });
    }
    embed(params, slots, Some(&residuals))
}

/// Accumulates `d loss / d embeddings` into the codebook and positional
/// gradients. Soft residuals route gradient into every codebook row they mix.
pub fn embed_backward(
    grads: &mut DenoiserParams,
    slots: &[Slot],
    soft: Option<&[Option<SoftResidual>]>,
    d_emb: &[f64],
) {
    let d = grads.dims.dim;
    for (i, slot) in slots.iter().enumerate() {
        let g = &d_emb[i * d..(i + 1) * d];
        add_assign(&mut grads.positional[i * d..(i + 1) * d], g);
        match *slot {
            Slot::Token(id) => {
                let id = id as usize;
                add_assign(&mut grads.input_codebook.rows_mut()[id * d..(id + 1) * d], g);
            }
            Slot::Mask => {
                let residual = soft.and_then(|s| s[i].as_ref());
                let alpha = residual.map_or(0.0, |r| r.alpha);
                let (rows, mask) = grads.input_codebook.buffers_mut();
                for (m, gv) in mask.iter_mut().zip(g) {
                    *m += (1.0 - alpha) * gv;
                }
                if let Some(r) = residual {
                    for (j, &p) in r.probs.iter().enumerate() {
                        let w = alpha * p;
                        if w == 0.0 {
                            continue;
                        }
                        for (e, gv) in rows[j * d..(j + 1) * d].iter_mut().zip(g) {
                            *e += w * gv;
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct NormCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    norm1: NormCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `heads x seq x seq` attention weights.
    probs: Vec<f64>,
    o: Vec<f64>,
    norm2: NormCache,
    f_in: Vec<f64>,
    u: Vec<f64>,
    act: Vec<f64>,
}

/// Activations recorded by [`forward`] for use by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    epoch: u64,
    dims: ModelDims,
    scheme: AttentionScheme,
    seq_len: usize,
    input: Vec<f64>,
    layers: Vec<LayerCache>,
    final_norm: NormCache,
    final_out: Vec<f64>,
    logits: Vec<f64>,
}

impl ForwardTrace {
    pub fn input(&self) -> &[f64] {
        &self.input
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn scheme(&self) -> AttentionScheme {
        self.scheme
    }
}

fn layer_norm(x: &[f64], gain: &[f64], rows: usize, d: usize) -> (Vec<f64>, NormCache) {
    let mut y = vec![0.0; rows * d];
    let mut xhat = vec![0.0; rows * d];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for c in 0..d {
            let h = (xr[c] - mean) * rs;
            xhat[r * d + c] = h;
            y[r * d + c] = h * gain[c];
        }
    }
    (y, NormCache { xhat, rstd })
}

/// Returns `d x` and accumulates `d gain`.
fn layer_norm_backward(
    dy: &[f64],
    gain: &[f64],
    cache: &NormCache,
    rows: usize,
    d: usize,
    d_gain: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * d];
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        for c in 0..d {
            d_gain[c] += dyr[c] * xh[c];
            dxhat[c] = dyr[c] * gain[c];
        }
        let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dxhat_xhat = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for c in 0..d {
            dx[r * d + c] = cache.rstd[r] * (dxhat[c] - mean_dxhat - xh[c] * mean_dxhat_xhat);
        }
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044_715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044_715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044_715 * x * x)
}

fn layer_forward(
    lp: &LayerParams,
    dims: &ModelDims,
    scheme: &AttentionScheme,
    x: &mut [f64],
    s: usize,
) -> LayerCache {
    let d = dims.dim;
    let f = dims.ff;
    let h = dims.heads;
    let hd = dims.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();

    let (a, norm1) = layer_norm(x, &lp.norm1_gain, s, d);
    let mut q = vec![0.0; s * d];
    let mut k = vec![0.0; s * d];
    let mut v = vec![0.0; s * d];
    matmul(&a, &lp.wq, s, d, d, &mut q);
    matmul(&a, &lp.wk, s, d, d, &mut k);
    matmul(&a, &lp.wv, s, d, d, &mut v);

    let mut probs = vec![0.0; h * s * s];
    let mut o = vec![0.0; s * d];
    for head in 0..h {
        let off = head * hd;
        for i in 0..s {
            let row = &mut probs[(head * s + i) * s..(head * s + i + 1) * s];
            let qi = &q[i * d + off..i * d + off + hd];
            let mut max = f64::NEG_INFINITY;
            for j in 0..s {
                if scheme.visible(i, j) {
                    let kj = &k[j * d + off..j * d + off + hd];
                    let sc = crate::tensor::dot(qi, kj) * scale;
                    row[j] = sc;
                    max = max.max(sc);
                }
            }
            let mut sum = 0.0;
            for j in 0..s {
                if scheme.visible(i, j) {
                    let e = (row[j] - max).exp();
                    row[j] = e;
                    sum += e;
                } else {
                    row[j] = 0.0;
                }
            }
            for j in 0..s {
                row[j] /= sum;
            }
            let oi = &mut o[i * d + off..i * d + off + hd];
            for j in 0..s {
                let pj = row[j];
                if pj == 0.0 {
                    continue;
                }
                for (ov, vv) in oi.iter_mut().zip(&v[j * d + off..j * d + off + hd]) {
                    *ov += pj * vv;
                }
            }
        }
    }
    matmul_acc(&o, &lp.wo, s, d, d, x);

    let (f_in, norm2) = layer_norm(x, &lp.norm2_gain, s, d);
    let mut u = vec![0.0; s * f];
    matmul(&f_in, &lp.w1, s, d, f, &mut u);
    for r in 0..s {
        add_assign(&mut u[r * f..(r + 1) * f], &lp.b1);
    }
    let act: Vec<f64> = u.iter().map(|&z| gelu(z)).collect();
    matmul_acc(&act, &lp.w2, s, f, d, x);
    for r in 0..s {
        add_assign(&mut x[r * d..(r + 1) * d], &lp.b2);
    }
    LayerCache { norm1, a, q, k, v, probs, o, norm2, f_in, u, act }
}

/// Runs the transformer on `embeddings` (`seq x dim`) and returns logits for
/// every block position (`block_len x vocab`) plus the activation trace.
pub fn forward(
    params: &DenoiserParams,
    embeddings: &[f64],
    scheme: AttentionScheme,
) -> Result<(Vec<f64>, ForwardTrace)> {
    let dims = params.dims;
    let d = dims.dim;
    let v = dims.vocab;
    if embeddings.is_empty() || !embeddings.len().is_multiple_of(d) {
        return Err(RcdError::DimensionMismatch(format!(
            "embedding buffer of {} values is not a multiple of dim {d}",
            embeddings.len()
        )));
    }
    let s = embeddings.len() / d;
    check_len(&dims, s)?;
    scheme.validate(s)?;

    let mut x = embeddings.to_vec();
    let layers: Vec<LayerCache> =
        params.layers.iter().map(|lp| layer_forward(lp, &dims, &scheme, &mut x, s)).collect();

    let (start, end) = scheme.block_span;
    let b = end - start;
    let (final_out, final_norm) =
        layer_norm(&x[start * d..end * d], &params.final_norm_gain, b, d);
    let mut logits = vec![0.0; b * v];
    matmul(&final_out, &params.lm_head, b, d, v, &mut logits);

    let trace = ForwardTrace {
        epoch: params.epoch,
        dims,
        scheme,
        seq_len: s,
        input: embeddings.to_vec(),
        layers,
        final_norm,
        final_out,
        logits: logits.clone(),
    };
    Ok((logits, trace))
}

/// Exact gradients of `sum(d_logits * logits)` with respect to every
/// parameter and to the input embeddings.
///
/// The embedding gradient is returned separately; feed it to
/// [`embed_backward`] to reach the codebook and positional table.
pub fn backward(
    params: &DenoiserParams,
    trace: &ForwardTrace,
    d_logits: &[f64],
) -> Result<(DenoiserParams, Vec<f64>)> {
    if trace.epoch != params.epoch || trace.dims != params.dims {
        return Err(RcdError::InvalidState(
            "forward trace was recorded against different parameters".into(),
        ));
    }
    let dims = params.dims;
    let (d, v, f, h, hd) = (dims.dim, dims.vocab, dims.ff, dims.heads, dims.head_dim());
    let s = trace.seq_len;
    let (start, end) = trace.scheme.block_span;
    let b = end - start;
    if d_logits.len() != b * v {
        return Err(RcdError::InvalidState(format!(
            "loss gradient has {} entries, trace expects {}",
            d_logits.len(),
            b * v
        )));
    }
    let scale = 1.0 / (hd as f64).sqrt();
    let mut g = params.zeros_like();

    matmul_at_b_acc(&trace.final_out, d_logits, b, d, v, &mut g.lm_head);
    let mut d_final = vec![0.0; b * d];
    matmul_a_bt(d_logits, &params.lm_head, b, v, d, &mut d_final);
    let d_block = layer_norm_backward(
        &d_final,
        &params.final_norm_gain,
        &trace.final_norm,
        b,
        d,
        &mut g.final_norm_gain,
    );
    let mut dx = vec![0.0; s * d];
    dx[start * d..end * d].copy_from_slice(&d_block);

    for (li, (lp, c)) in params.layers.iter().zip(&trace.layers).enumerate().rev() {
        let lg = &mut g.layers[li];

        // feed-forward sublayer
        for r in 0..s {
            add_assign(&mut lg.b2, &dx[r * d..(r + 1) * d]);
        }
        matmul_at_b_acc(&c.act, &dx, s, f, d, &mut lg.w2);
        let mut du = vec![0.0; s * f];
        matmul_a_bt(&dx, &lp.w2, s, d, f, &mut du);
        for (dv, &u) in du.iter_mut().zip(&c.u) {
            *dv *= gelu_grad(u);
        }
        for r in 0..s {
            add_assign(&mut lg.b1, &du[r * f..(r + 1) * f]);
        }
        matmul_at_b_acc(&c.f_in, &du, s, d, f, &mut lg.w1);
        let mut d_fin = vec![0.0; s * d];
        matmul_a_bt(&du, &lp.w1, s, f, d, &mut d_fin);
        let d_norm2 = layer_norm_backward(&d_fin, &lp.norm2_gain, &c.norm2, s, d, &mut lg.norm2_gain);
        add_assign(&mut dx, &d_norm2);

        // attention sublayer
        matmul_at_b_acc(&c.o, &dx, s, d, d, &mut lg.wo);
        let mut d_o = vec![0.0; s * d];
        matmul_a_bt(&dx, &lp.wo, s, d, d, &mut d_o);
        let mut dq = vec![0.0; s * d];
        let mut dk = vec![0.0; s * d];
        let mut dvv = vec![0.0; s * d];
        let mut dp = vec![0.0; s];
        for head in 0..h {
            let off = head * hd;
            for i in 0..s {
                let p = &c.probs[(head * s + i) * s..(head * s + i + 1) * s];
                let doi = &d_o[i * d + off..i * d + off + hd];
                let mut dot_pd = 0.0;
                for j in 0..s {
                    if p[j] == 0.0 {
                        dp[j] = 0.0;
                        continue;
                    }
                    let vj = &c.v[j * d + off..j * d + off + hd];
                    dp[j] = crate::tensor::dot(doi, vj);
                    dot_pd += dp[j] * p[j];
                    for (dvx, dov) in dvv[j * d + off..j * d + off + hd].iter_mut().zip(doi) {
                        *dvx += p[j] * dov;
                    }
                }
                for j in 0..s {
                    if p[j] == 0.0 {
                        continue;
                    }
                    let ds = p[j] * (dp[j] - dot_pd) * scale;
                    for t in 0..hd {
                        dq[i * d + off + t] += ds * c.k[j * d + off + t];
                        dk[j * d + off + t] += ds * c.q[i * d + off + t];
                    }
                }
            }
        }
        matmul_at_b_acc(&c.a, &dq, s, d, d, &mut lg.wq);
        matmul_at_b_acc(&c.a, &dk, s, d, d, &mut lg.wk);
        matmul_at_b_acc(&c.a, &dvv, s, d, d, &mut lg.wv);
        let mut da = vec![0.0; s * d];
        let mut tmp = vec![0.0; s * d];
        matmul_a_bt(&dq, &lp.wq, s, d, d, &mut tmp);
        add_assign(&mut da, &tmp);
        matmul_a_bt(&dk, &lp.wk, s, d, d, &mut tmp);
        add_assign(&mut da, &tmp);
        matmul_a_bt(&dvv, &lp.wv, s, d, d, &mut tmp);
        add_assign(&mut da, &tmp);
        let d_norm1 = layer_norm_backward(&da, &lp.norm1_gain, &c.norm1, s, d, &mut lg.norm1_gain);
        add_assign(&mut dx, &d_norm1);
    }
    Ok((g, dx))
}
