//! Central finite differences against the analytic gradient.

use rand::seq::index::sample;

use crate::error::Result;
use crate::rng::substream;
use crate::train::{loss_and_grad, TrainExample};

use super::params::DenoiserParams;

/// One probed coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradProbe {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradProbe {
    /// `|a - n| / max(|a|, |n|, floor)`.
    pub fn relative_error(&self, floor: f64) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(floor)
    }
}

/// Groups tensors by the kind of layer they belong to.
pub fn layer_type(tensor: &str) -> &'static str {
    if tensor.ends_with("gain") {
        "layer_norm"
    } else if tensor.contains("attn.") {
        "attention"
    } else if tensor.contains("ff.") {
        "feed_forward"
    } else if tensor == "lm_head" {
        "output_head"
    } else {
        "embedding"
    }
}

/// Compares analytic and central-difference gradients of the masked loss of
/// `example` on up to `per_type` coordinates of every layer type (all of
/// them when the type has fewer).
pub fn check_gradients(
    params: &DenoiserParams,
    example: &TrainExample,
    t_min: f64,
    step: f64,
    per_type: usize,
    seed: u64,
) -> Result<Vec<GradProbe>> {
    let (_, grads) = loss_and_grad(params, example, t_min)?;
    let named = params.tensors();
    let grad_tensors = grads.tensors();

    // (tensor index, element) pairs grouped by layer type, in tensor order
    let mut groups: Vec<(&'static str, Vec<(usize, usize)>)> = Vec::new();
    for (ti, (name, _, t)) in named.iter().enumerate() {
        let ty = layer_type(name);
        let coords = (0..t.len()).map(|e| (ti, e));
        match groups.iter_mut().find(|g| g.0 == ty) {
            Some(g) => g.1.extend(coords),
            None => groups.push((ty, coords.collect())),
        }
    }
    let mut rng = substream(seed, "gradcheck");
    let mut probes = Vec::new();
    let mut work = params.clone();
    for (_, coords) in &groups {
        let picks: Vec<usize> = if coords.len() <= per_type {
            (0..coords.len()).collect()
        } else {
            let mut v = sample(&mut rng, coords.len(), per_type).into_vec();
            v.sort_unstable();
            v
        };
        for k in picks {
            let (ti, e) = coords[k];
            let orig = work.tensors()[ti].2[e];
            work.tensors_mut()[ti][e] = orig + step;
            let (plus, _) = loss_and_grad(&work, example, t_min)?;
            work.tensors_mut()[ti][e] = orig - step;
            let (minus, _) = loss_and_grad(&work, example, t_min)?;
            work.tensors_mut()[ti][e] = orig;
            probes.push(GradProbe {
                tensor: named[ti].0.clone(),
                index: e,
                analytic: grad_tensors[ti].2[e],
                numeric: (plus - minus) / (2.0 * step),
            });
        }
    }
    Ok(probes)
}
