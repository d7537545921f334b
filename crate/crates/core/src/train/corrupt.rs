use rand::Rng;

use crate::error::{invalid, Result};
use crate::model::Slot;

/// A clean block and its masked corruption at noise level `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionSample {
    pub x0: Vec<u32>,
    pub t: f64,
    pub mask: Vec<bool>,
    pub xt: Vec<Slot>,
}

impl CorruptionSample {
    pub fn num_masked(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Masks each position independently with probability `t`, redrawing the
/// whole mask until at least one position is masked.
pub fn corrupt<R: Rng + ?Sized>(x0: &[u32], t: f64, rng: &mut R) -> Result<CorruptionSample> {
    if !(t > 0.0 && t <= 1.0) {
        return invalid(format!("noise level {t} outside (0, 1]"));
    }
    if x0.is_empty() {
        return invalid("cannot corrupt an empty block");
    }
    let mask = loop {
        let m: Vec<bool> = x0.iter().map(|_| rng.gen::<f64>() < t).collect();
        if m.iter().any(|&b| b) {
            break m;
        }
    };
    let xt = x0
        .iter()
        .zip(&mask)
        .map(|(&tok, &m)| if m { Slot::Mask } else { Slot::Token(tok) })
        .collect();
    Ok(CorruptionSample { x0: x0.to_vec(), t, mask, xt })
}
