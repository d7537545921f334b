use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, RcdError, Result};

/// How many masked positions are committed per step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Exactly the `m` most confident positions (fewer if fewer remain).
    TopM(usize),
    /// Every position whose confidence reaches the threshold, and at least
    /// the single most confident one.
    Threshold(f64),
}

/// Mapping from a (temperature-scaled) predictive distribution to the
/// residual weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaStrategy {
    Entropy,
    Linear(f64),
    Confidence,
    InverseEntropy,
    InverseConfidence,
}

impl AlphaStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AlphaStrategy::Linear(c) if !(0.0..=1.0).contains(&c) => {
                invalid(format!("linear alpha {c} outside [0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for AlphaStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaStrategy::Entropy => write!(f, "entropy"),
            AlphaStrategy::Linear(c) => write!(f, "linear:{c}"),
            AlphaStrategy::Confidence => write!(f, "confidence"),
            AlphaStrategy::InverseEntropy => write!(f, "inverse-entropy"),
            AlphaStrategy::InverseConfidence => write!(f, "inverse-confidence"),
        }
    }
}

impl FromStr for AlphaStrategy {
    type Err = RcdError;

    /// Accepts `entropy`, `linear:c`, `confidence`, `inverse-entropy` and
    /// `inverse-confidence` (underscores also accepted).
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let strategy = match norm.as_str() {
            "entropy" => AlphaStrategy::Entropy,
            "confidence" => AlphaStrategy::Confidence,
            "inverse-entropy" => AlphaStrategy::InverseEntropy,
            "inverse-confidence" => AlphaStrategy::InverseConfidence,
            other => match other.strip_prefix("linear:").or_else(|| other.strip_prefix("linear(")) {
                Some(rest) => {
                    let c: f64 = rest
                        .trim_end_matches(')')
                        .parse()
                        .map_err(|_| RcdError::InvalidArgument(format!("bad linear alpha in '{s}'")))?;
                    AlphaStrategy::Linear(c)
                }
                None => return invalid(format!("unknown alpha strategy '{s}'")),
            },
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

/// Which model seeds the residuals of a fresh block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    Reference,
    #[serde(rename = "self")]
    SelfModel,
    None,
}

impl fmt::Display for WarmStart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WarmStart::Reference => "reference",
            WarmStart::SelfModel => "self",
            WarmStart::None => "none",
        })
    }
}

impl FromStr for WarmStart {
    type Err = RcdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reference" | "ref" => Ok(WarmStart::Reference),
            "self" => Ok(WarmStart::SelfModel),
            "none" => Ok(WarmStart::None),
            _ => invalid(format!("unknown warm start '{s}' (expected reference, self or none)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    Seqd,
    Rcd,
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecodeMode::Seqd => "seqd",
            DecodeMode::Rcd => "rcd",
        })
    }
}

impl FromStr for DecodeMode {
    type Err = RcdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "seqd" => Ok(DecodeMode::Seqd),
            "rcd" => Ok(DecodeMode::Rcd),
            _ => invalid(format!("unknown decode mode '{s}' (expected seqd or rcd)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    pub block_size: usize,
    /// Step budget per block; `None` means one step per block position.
    pub max_steps: Option<usize>,
    pub selection: Selection,
    /// Zero is greedy.
    pub sampling_temperature: f64,
    pub t_res: f64,
    pub alpha_strategy: AlphaStrategy,
    pub warm_start: WarmStart,
    /// Build the soft token from the temperature-scaled distribution as well,
    /// instead of only the weight.
    pub scale_delta: bool,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            mode: DecodeMode::Rcd,
            block_size: 8,
            max_steps: None,
            selection: Selection::Threshold(0.85),
            sampling_temperature: 0.0,
            t_res: 1.0,
            alpha_strategy: AlphaStrategy::Entropy,
            warm_start: WarmStart::Reference,
            scale_delta: false,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn step_budget(&self) -> usize {
        self.max_steps.unwrap_or(self.block_size)
    }

    pub fn is_greedy(&self) -> bool {
        self.sampling_temperature == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_size == 0 {
            return invalid("block size must be positive");
        }
        if self.step_budget() == 0 {
            return invalid("step budget must be positive");
        }
        match self.selection {
            Selection::TopM(0) => return invalid("top-m must be positive"),
            Selection::Threshold(t) if !(t > 0.0 && t <= 1.0) => {
                return invalid(format!("confidence threshold {t} outside (0, 1]"))
            }
            _ => {}
        }
        if !(self.sampling_temperature >= 0.0 && self.sampling_temperature.is_finite()) {
            return invalid(format!("sampling temperature {} must be finite and >= 0", self.sampling_temperature));
        }
        if !(self.t_res > 0.0 && self.t_res.is_finite()) {
            return invalid(format!("residual temperature {} must be positive", self.t_res));
        }
        self.alpha_strategy.validate()
    }
}
