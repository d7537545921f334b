//! The `rcd` command-line tool. Every command resolves its configuration
//! (defaults, then `--config`, then flags), runs, and records a manifest of
//! the invocation and the hashes of everything it read and wrote so that
//! `rcd replay` can rerun and verify it.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::{Path, PathBuf};

use args::{Command, Overrides};
use config::RunConfig;
use error::{CliError, CliResult};
use manifest::{sha256_file, FileHash, Invocation, Manifest, MANIFEST_NAME};

pub use commands::execute;

/// Resolves a parsed command into an invocation, its configuration and the
/// output directory. `Replay` has no invocation of its own.
pub fn resolve(command: Command) -> CliResult<Option<(Invocation, RunConfig, PathBuf)>> {
    let with = |common: &Overrides| RunConfig::resolve(common);
    Ok(Some(match command {
        Command::Gen { task, count, holdout, common, out } => {
            let mut cfg = with(&common)?;
            if let Some(t) = task {
                cfg.data.task = t;
            }
            if let Some(c) = count {
                cfg.data.count = c;
            }
            if let Some(h) = holdout {
                cfg.data.holdout = h;
            }
            (Invocation::Gen, cfg, out)
        }
        Command::TrainRef { data, common, out } => (Invocation::TrainRef { data }, with(&common)?, out),
        Command::TrainTarget { data, reference, common, out } => {
            (Invocation::TrainTarget { data, reference }, with(&common)?, out)
        }
        Command::Decode { checkpoint, reference, prompts, num_blocks, common, out } => {
            (Invocation::Decode { checkpoint, reference, prompts, num_blocks }, with(&common)?, out)
        }
        Command::Sweep { seqd, rcd, reference, task, thresholds, common, out } => (
            Invocation::Sweep { seqd, rcd, reference, task, thresholds: thresholds.unwrap_or_default() },
            with(&common)?,
            out,
        ),
        Command::AblateAlpha { checkpoint, reference, task, strategies, common, out } => {
            let strategies = strategies
                .unwrap_or_else(default_strategies)
                .iter()
                .map(ToString::to_string)
                .collect();
            (Invocation::AblateAlpha { checkpoint, reference, task, strategies }, with(&common)?, out)
        }
        Command::Recall { trace, generations, k, common, out } => {
            (Invocation::Recall { trace, generations, k }, with(&common)?, out)
        }
        Command::Replay { .. } => return Ok(None),
    }))
}

pub fn default_strategies() -> Vec<rcd_core::decode::AlphaStrategy> {
    use rcd_core::decode::AlphaStrategy::*;
    vec![Entropy, Linear(0.5), Linear(1.0), Confidence, InverseEntropy, InverseConfidence]
}

fn hash_inputs(inv: &Invocation) -> CliResult<Vec<FileHash>> {
    inv.inputs()
        .into_iter()
        .map(|(role, p)| Ok(FileHash { name: role.into(), path: p.to_path_buf(), sha256: sha256_file(p)? }))
        .collect()
}

/// Executes `inv` and writes `out/manifest.json`.
pub fn run_recorded(inv: &Invocation, cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    commands::check_inputs(inv)?;
    let inputs = hash_inputs(inv)?;
    let files = execute(inv, cfg, out)?;
    if hash_inputs(inv)? != inputs {
        return Err(CliError::Core(rcd_core::RcdError::InvalidState("an input file changed during the run".into())));
    }
    let outputs = files
        .into_iter()
        .map(|name| {
            let path = out.join(&name);
            Ok(FileHash { sha256: sha256_file(&path)?, path: PathBuf::from(&name), name })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = Manifest {
        tool: "rcd".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        invocation: inv.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        inputs,
        outputs,
    };
    manifest.save(out)?;
    Ok(manifest)
}

/// Reruns a recorded invocation into `out` (default: `replay/` next to the
/// manifest) and checks that inputs and outputs hash identically.
pub fn replay(manifest_path: &Path, out: Option<PathBuf>) -> CliResult<Manifest> {
    let recorded = Manifest::load(manifest_path)?;
    for input in &recorded.inputs {
        let now = sha256_file(&input.path)?;
        if now != input.sha256 {
            return Err(CliError::ReplayMismatch(format!(
                "input {} ({}) changed since it was recorded",
                input.name,
                input.path.display()
            )));
        }
    }
    let out = out.unwrap_or_else(|| manifest_path.parent().unwrap_or(Path::new(".")).join("replay"));
    let fresh = run_recorded(&recorded.invocation, &recorded.config, &out)?;
    let diffs: Vec<String> = recorded
        .outputs
        .iter()
        .filter(|o| fresh.outputs.iter().find(|f| f.name == o.name).map(|f| &f.sha256) != Some(&o.sha256))
        .map(|o| o.name.clone())
        .collect();
    if !diffs.is_empty() || fresh.outputs.len() != recorded.outputs.len() {
        return Err(CliError::ReplayMismatch(format!("outputs differ: {}", diffs.join(", "))));
    }
    Ok(fresh)
}

/// Runs one parsed command line. Returns a one-line summary for stdout.
pub fn run(command: Command) -> CliResult<String> {
    if let Command::Replay { manifest, out } = command {
        let m = replay(&manifest, out)?;
        return Ok(format!("replay ok: {} outputs of {} match", m.outputs.len(), m.invocation.name()));
    }
    let (inv, cfg, out) = resolve(command)?.expect("non-replay command");
    let m = run_recorded(&inv, &cfg, &out)?;
    let names: Vec<&str> = m.outputs.iter().map(|o| o.name.as_str()).collect();
    Ok(format!("{}: wrote {} ({})", inv.name(), names.join(", "), out.join(MANIFEST_NAME).display()))
}
