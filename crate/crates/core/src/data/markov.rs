use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, RcdError, Result};
use crate::rng::{stream, substream};

use super::dataset::Dataset;
use super::tokenizer::Tokenizer;

/// Order-1 Markov chain over `states` symbols. Token id of state `s` is
/// `s + 2` under [`Tokenizer::markov`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovSpec {
    pub states: usize,
    pub transition: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    pub seed: u64,
}

fn check_stochastic(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return invalid(format!("{what} has a negative or non-finite entry"));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return invalid(format!("{what} sums to {s}"));
    }
    Ok(())
}

impl MarkovSpec {
    pub fn validate(&self) -> Result<()> {
        if self.states < 2 {
            return invalid("a chain needs at least two states");
        }
        if self.transition.len() != self.states || self.initial.len() != self.states {
            return invalid("transition/initial sizes disagree with state count");
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != self.states {
                return invalid(format!("transition row {i} has {} entries", row.len()));
            }
            check_stochastic(row, &format!("transition row {i}"))?;
        }
        check_stochastic(&self.initial, "initial distribution")
    }

    /// Deterministic cycle `s -> s + 1 mod n` with a uniform start.
    pub fn cycle(states: usize, seed: u64) -> Self {
        let transition = (0..states)
            .map(|i| (0..states).map(|j| if j == (i + 1) % states { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { states, transition, initial: vec![1.0 / states as f64; states], seed }
    }

    /// Every row equal to `mu`: symbols are i.i.d.
    pub fn iid(mu: Vec<f64>, seed: u64) -> Self {
        let states = mu.len();
        Self { states, transition: vec![mu.clone(); states], initial: mu, seed }
    }

    /// Rows drawn from a symmetric Dirichlet with the given concentration.
    pub fn random(states: usize, concentration: f64, seed: u64) -> Result<Self> {
        let gamma = Gamma::new(concentration, 1.0)
            .map_err(|e| RcdError::InvalidArgument(format!("concentration: {e}")))?;
        let mut rng = substream(seed, "markov-spec");
        let mut draw = || {
            let g: Vec<f64> = (0..states).map(|_| gamma.sample(&mut rng).max(1e-12)).collect();
            let s: f64 = g.iter().sum();
            g.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let transition = (0..states).map(|_| draw()).collect();
        let spec = Self { states, transition, initial: vec![1.0 / states as f64; states], seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn tokenizer(&self) -> Result<Tokenizer> {
        Tokenizer::markov(self.states)
    }

    pub fn token_of(state: usize) -> u32 {
        state as u32 + 2
    }

    pub fn state_of(token: u32) -> Option<usize> {
        (token >= 2).then(|| token as usize - 2)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("spec serializes");
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: Self = serde_json::from_str(&text).map_err(|e| RcdError::Parse(format!("markov spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Conventional sidecar path next to a dataset file.
    pub fn sidecar_path(dataset: &Path) -> std::path::PathBuf {
        let mut name = dataset.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".markov.json");
        dataset.with_file_name(name)
    }
}

/// Samples `num_blocks` independent blocks of length `block_len`.
pub fn gen_markov_corpus(spec: &MarkovSpec, num_blocks: usize, block_len: usize) -> Result<Dataset> {
    spec.validate()?;
    if block_len == 0 {
        return invalid("block_len must be positive");
    }
    let tokenizer = spec.tokenizer()?;
    let mut rng = substream(spec.seed, stream::DATA);
    let init = WeightedIndex::new(&spec.initial).map_err(|e| RcdError::InvalidArgument(e.to_string()))?;
    let rows = spec
        .transition
        .iter()
        .map(|r| WeightedIndex::new(r).map_err(|e| RcdError::InvalidArgument(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let records = (0..num_blocks)
        .map(|_| {
            let mut s = init.sample(&mut rng);
            let mut block = Vec::with_capacity(block_len);
            block.push(MarkovSpec::token_of(s));
            for _ in 1..block_len {
                s = rows[s].sample(&mut rng);
                block.push(MarkovSpec::token_of(s));
            }
            block
        })
        .collect();
    Ok(Dataset::new(&tokenizer, None, records))
}
