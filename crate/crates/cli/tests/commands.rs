use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

const CONFIG: &str = "\
seed = 3
[model]
dim = 16
layers = 1
heads = 2
ff = 32
max_len = 32
[train]
epochs = 1
learning_rate = 0.002
[data]
task = \"addition\"
count = 160
holdout = 12
";

fn rcd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcd")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = rcd(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: TempDir,
    root: PathBuf,
}

impl Fixture {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

/// Config, data, a reference, an rcd target and a seqd target, built once.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let cfg = root.join("c.toml");
        std::fs::write(&cfg, CONFIG).unwrap();
        let p = |r: &str| root.join(r);
        ok(&["gen", "--config", s(&cfg), "--out", s(&p("data"))]);
        ok(&["train-ref", "--config", s(&cfg), "--data", s(&p("data/train.txt")), "--out", s(&p("ref"))]);
        ok(&[
            "train-target",
            "--config",
            s(&cfg),
            "--data",
            s(&p("data/train.txt")),
            "--reference",
            s(&p("ref/reference.ckpt")),
            "--out",
            s(&p("rcd")),
        ]);
        ok(&[
            "train-target",
            "--config",
            s(&cfg),
            "--mode",
            "seqd",
            "--data",
            s(&p("data/train.txt")),
            "--out",
            s(&p("seqd")),
        ]);
        Fixture { _dir: dir, root }
    })
}

#[test]
fn zero_alpha_rcd_decode_matches_seqd_byte_for_byte() {
    let f = fixture();
    let ckpt = f.path("rcd/target.ckpt");
    let prompts = f.path("data/heldout.txt");
    for b in ["1", "8"] {
        let seqd_out = f.path(&format!("dec-seqd-{b}"));
        let rcd_out = f.path(&format!("dec-rcd-{b}"));
        ok(&["decode", "--mode", "seqd", "--block-size", b, "--checkpoint", s(&ckpt), "--prompts", s(&prompts), "--out", s(&seqd_out)]);
        ok(&[
            "decode",
            "--mode",
            "rcd",
            "--warm-start",
            "none",
            "--alpha",
            "linear:0",
            "--block-size",
            b,
            "--checkpoint",
            s(&ckpt),
            "--prompts",
            s(&prompts),
            "--out",
            s(&rcd_out),
        ]);
        for file in ["generations.txt", "generations.dat"] {
            let a = std::fs::read(seqd_out.join(file)).unwrap();
            let r = std::fs::read(rcd_out.join(file)).unwrap();
            assert_eq!(a, r, "{file} differs at block size {b}");
        }
    }
}

#[test]
fn sweep_defaults_to_six_points_per_variant() {
    let f = fixture();
    let out = f.path("sweep");
    ok(&[
        "sweep",
        "--seqd",
        s(&f.path("seqd/target.ckpt")),
        "--rcd",
        s(&f.path("rcd/target.ckpt")),
        "--reference",
        s(&f.path("ref/reference.ckpt")),
        "--task",
        s(&f.path("data/heldout.txt")),
        "--out",
        s(&out),
    ]);
    let csv = std::fs::read_to_string(out.join("pareto.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.iter().filter(|r| r.starts_with("seqd,")).count(), 6);
    assert_eq!(rows.iter().filter(|r| r.starts_with("rcd,")).count(), 6);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("pareto_summary.json")).unwrap()).unwrap();
    assert!(summary["rcd_tokens_per_step"].as_f64().unwrap() >= 1.0);
    assert_eq!(summary["threshold"], 0.85);
}

#[test]
fn replay_reproduces_checkpoints_and_detects_changed_inputs() {
    let f = fixture();
    let manifest = f.path("rcd/manifest.json");
    let replayed = f.path("rcd-replay");
    let out = ok(&["replay", s(&manifest), "--out", s(&replayed)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("replay ok"));
    assert_eq!(
        std::fs::read(f.path("rcd/target.ckpt")).unwrap(),
        std::fs::read(replayed.join("target.ckpt")).unwrap()
    );

    let copy = f.path("tampered");
    std::fs::create_dir_all(&copy).unwrap();
    let data = copy.join("train.txt");
    std::fs::copy(f.path("data/train.txt"), &data).unwrap();
    let cfg = f.path("c.toml");
    ok(&["train-ref", "--config", s(&cfg), "--epochs", "1", "--data", s(&data), "--out", s(&copy)]);
    let mut text = std::fs::read_to_string(&data).unwrap();
    text.push_str("2 3 4\n");
    std::fs::write(&data, text).unwrap();
    let bad = rcd(&["replay", s(&copy.join("manifest.json")), "--out", s(&f.path("tampered-replay"))]);
    assert_eq!(bad.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error[replay-mismatch]"));
}

#[test]
fn manifest_echoes_config_and_hashes_inputs() {
    let f = fixture();
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.path("rcd/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["tool"], "rcd");
    assert_eq!(m["seed"], 3);
    assert_eq!(m["config"]["model"]["dim"], 16);
    assert_eq!(m["config"]["train"]["learning_rate"], 0.002);
    assert_eq!(m["invocation"]["command"], "train-target");
    let roles: Vec<&str> = m["inputs"].as_array().unwrap().iter().map(|i| i["name"].as_str().unwrap()).collect();
    assert_eq!(roles, ["reference", "data"]);
    assert!(m["inputs"].as_array().unwrap().iter().all(|i| i["sha256"].as_str().unwrap().len() == 64));
}

#[test]
fn decode_and_recall_pipeline() {
    let f = fixture();
    let out = f.path("greedy");
    ok(&[
        "decode",
        "--checkpoint",
        s(&f.path("rcd/target.ckpt")),
        "--reference",
        s(&f.path("ref/reference.ckpt")),
        "--prompts",
        s(&f.path("data/heldout.txt")),
        "--out",
        s(&out),
    ]);
    let rec = f.path("greedy-recall");
    ok(&["recall", "--trace", s(&out.join("trace.jsonl")), "--generations", s(&out.join("generations.dat")), "--out", s(&rec)]);
    let csv = std::fs::read_to_string(rec.join("recall.csv")).unwrap();
    assert!(csv.starts_with("k,step,recall\n"));
    for k in ["1", "3", "5"] {
        let last = csv.lines().rfind(|l| l.starts_with(&format!("{k},"))).unwrap();
        assert!(last.ends_with(",1.0"), "{last}");
    }
}

#[test]
fn error_categories_have_distinct_exit_codes() {
    let f = fixture();
    let tmp = tempfile::tempdir().unwrap();

    let missing = rcd(&["decode", "--checkpoint", "/nonexistent.ckpt", "--prompts", s(&f.path("data/heldout.txt"))]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error[missing-file]"));

    let bad_cfg = tmp.path().join("bad.toml");
    std::fs::write(&bad_cfg, "seed = [").unwrap();
    let parse = rcd(&["gen", "--config", s(&bad_cfg), "--out", s(tmp.path())]);
    assert_eq!(parse.status.code(), Some(3));

    let markov = tmp.path().join("markov");
    ok(&["gen", "--task", "markov", "--count", "20", "--holdout", "4", "--out", s(&markov)]);
    let dims = rcd(&[
        "decode",
        "--checkpoint",
        s(&f.path("rcd/target.ckpt")),
        "--prompts",
        s(&markov.join("heldout.txt")),
        "--out",
        s(&tmp.path().join("x")),
    ]);
    assert_eq!(dims.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&dims.stderr).starts_with("error[dimension-mismatch]"));

    let usage = rcd(&["decode", "--threshold", "0.5", "--top-m", "2", "--checkpoint", "a", "--prompts", "b"]);
    assert_eq!(usage.status.code(), Some(5));
    let help = rcd(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn commands_leave_inputs_untouched() {
    let f = fixture();
    let inputs = ["data/train.txt", "ref/reference.ckpt"];
    let before: Vec<Vec<u8>> = inputs.iter().map(|p| std::fs::read(f.path(p)).unwrap()).collect();
    ok(&[
        "train-target",
        "--config",
        s(&f.path("c.toml")),
        "--data",
        s(&f.path("data/train.txt")),
        "--reference",
        s(&f.path("ref/reference.ckpt")),
        "--out",
        s(&f.path("rcd-again")),
    ]);
    let after: Vec<Vec<u8>> = inputs.iter().map(|p| std::fs::read(f.path(p)).unwrap()).collect();
    assert_eq!(before, after);
    assert_eq!(
        std::fs::read(f.path("rcd/target.ckpt")).unwrap(),
        std::fs::read(f.path("rcd-again/target.ckpt")).unwrap()
    );
}
