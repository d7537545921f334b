use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::decode::{AlphaStrategy, DecodeConfig, DecodeMode, Selection};
use crate::error::{invalid, RcdError, Result};
use crate::model::DenoiserParams;
use crate::train::heldout_masked_ce;

use super::tasks::{task_accuracy, TaskSet};

/// A decoder under test: parameters, optional warm-start reference, and the
/// decode settings the sweep varies from.
#[derive(Debug, Clone)]
pub struct Variant<'a> {
    pub name: String,
    pub params: &'a DenoiserParams,
    pub reference: Option<&'a DenoiserParams>,
    pub config: DecodeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub variant: String,
    pub threshold: f64,
    pub accuracy: f64,
    pub tokens_per_step: f64,
    pub total_steps: usize,
    pub total_tokens: usize,
}

/// `0.5, 0.6, ..., 1.0`.
pub fn default_thresholds() -> Vec<f64> {
    (5..=10).map(|i| i as f64 / 10.0).collect()
}

fn io_err(e: csv::Error) -> RcdError {
    RcdError::Io(std::io::Error::other(e))
}

/// One point per (variant, threshold), variants outermost.
pub fn pareto_sweep(variants: &[Variant<'_>], task: &TaskSet, thresholds: &[f64]) -> Result<Vec<ParetoPoint>> {
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return invalid(format!("threshold {t} outside (0, 1]"));
    }
    let mut out = Vec::with_capacity(variants.len() * thresholds.len());
    for v in variants {
        for &threshold in thresholds {
            let cfg = DecodeConfig { selection: Selection::Threshold(threshold), ..v.config.clone() };
            let r = task_accuracy(v.params, v.reference, &cfg, task)?;
            if r.committed_tokens != r.generated_tokens {
                return Err(RcdError::InvalidState(format!(
                    "{} at {threshold}: {} commits for {} generated tokens",
                    v.name, r.committed_tokens, r.generated_tokens
                )));
            }
            out.push(ParetoPoint {
                variant: v.name.clone(),
                threshold,
                accuracy: r.accuracy,
                tokens_per_step: r.tokens_per_step(),
                total_steps: r.total_steps,
                total_tokens: r.committed_tokens,
            });
        }
    }
    Ok(out)
}

pub fn write_pareto_csv(path: &Path, points: &[ParetoPoint]) -> Result<()> {
    write_rows(path, points)
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    for r in rows {
        w.serialize(r).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub strategy: String,
    pub accuracy: f64,
    pub tokens_per_step: f64,
    pub total_steps: usize,
}

/// Residual-loop accuracy under each weight strategy, everything else fixed.
pub fn ablate_alpha(
    params: &DenoiserParams,
    reference: Option<&DenoiserParams>,
    task: &TaskSet,
    strategies: &[AlphaStrategy],
    base: &DecodeConfig,
) -> Result<Vec<AblationRow>> {
    strategies
        .iter()
        .map(|&s| {
            let cfg = DecodeConfig { mode: DecodeMode::Rcd, alpha_strategy: s, ..base.clone() };
            let r = task_accuracy(params, reference, &cfg, task)?;
            Ok(AblationRow {
                strategy: s.to_string(),
                accuracy: r.accuracy,
                tokens_per_step: r.tokens_per_step(),
                total_steps: r.total_steps,
            })
        })
        .collect()
}

pub fn write_ablation_csv(path: &Path, rows: &[AblationRow]) -> Result<()> {
    write_rows(path, rows)
}

/// One trained model of a matched-budget comparison.
#[derive(Debug, Clone)]
pub struct BudgetSide<'a> {
    pub label: String,
    pub seed: u64,
    pub params: &'a DenoiserParams,
    /// Used for the reference warm start and, in residual mode, to supply the
    /// residuals of the held-out loss.
    pub reference: Option<&'a DenoiserParams>,
    pub config: DecodeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub variant: String,
    pub seed: u64,
    pub accuracy: f64,
    pub masked_ce: f64,
    pub tokens_per_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedBudgetReport {
    pub rows: Vec<BudgetRow>,
}

impl MatchedBudgetReport {
    pub fn seeds(&self) -> Vec<u64> {
        let mut s: Vec<u64> = self.rows.iter().map(|r| r.seed).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Per-variant `(mean accuracy, mean masked CE)`.
    pub fn means(&self) -> BTreeMap<String, (f64, f64)> {
        let mut acc: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = acc.entry(r.variant.clone()).or_insert((0.0, 0.0, 0));
            e.0 += r.accuracy;
            e.1 += r.masked_ce;
            e.2 += 1;
        }
        acc.into_iter().map(|(k, (a, c, n))| (k, (a / n as f64, c / n as f64))).collect()
    }
}

/// Accuracy on `task` and held-out masked cross-entropy for every side.
pub fn matched_budget_report(
    sides: &[BudgetSide<'_>],
    task: &TaskSet,
    heldout: &Dataset,
    ce_samples: usize,
    ce_seed: u64,
) -> Result<MatchedBudgetReport> {
    let rows = sides
        .iter()
        .map(|s| {
            let r = task_accuracy(s.params, s.reference, &s.config, task)?;
            let ce_ref = if s.config.mode == DecodeMode::Rcd { s.reference } else { None };
            let masked_ce = heldout_masked_ce(s.params, ce_ref, heldout, s.config.block_size, ce_samples, ce_seed)?;
            Ok(BudgetRow {
                variant: s.label.clone(),
                seed: s.seed,
                accuracy: r.accuracy,
                masked_ce,
                tokens_per_step: r.tokens_per_step(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MatchedBudgetReport { rows })
}

pub fn write_budget_csv(path: &Path, report: &MatchedBudgetReport) -> Result<()> {
    write_rows(path, &report.rows)
}
