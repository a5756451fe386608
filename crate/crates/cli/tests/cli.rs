//! End-to-end runs of the binary on toy configurations.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TOY: &str = r#"
seed = 5

[data]
scenarios = ["merge"]
seeds = [0]

[annotation]
stride = 10

[arch.frontend]
grid_size = 8
patch = 4
d_v = 8
d_p = 16

[arch.model]
layers = 1
heads = 2
ff_mult = 2

[training]
batch_size = 2
max_steps = 2

[closed_loop]
timeout_ticks = 300
blocked_ticks = 60
max_new_tokens = 120
"#;

struct Workdir {
    dir: tempfile::TempDir,
}

impl Workdir {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("toy.toml"), TOY).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_reasonplan"))
            .arg("--config")
            .arg(self.path("toy.toml"))
            .args(args)
            .current_dir(self.dir.path())
            .env_remove("REASONPLAN_SEED")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }
}

fn manifest(path: &Path) -> serde_json::Value {
    let mut name = path.file_name().unwrap().to_os_string();
    name.push(".manifest.json");
    serde_json::from_slice(&std::fs::read(path.with_file_name(name)).unwrap()).unwrap()
}

fn summary_ds(report: &Path) -> f64 {
    let text = std::fs::read_to_string(report).unwrap();
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["type"], "summary");
    last["summary"]["ds"].as_f64().unwrap()
}

#[test]
fn stage_two_without_checkpoint_exits_with_refusal() {
    let w = Workdir::new();
    w.ok(&["gen-data", "--out", "d.jsonl"]);
    let out = w.run(&["train", "--data", "d.jsonl", "--stage", "2", "--out", "m.ckpt"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage-1 checkpoint"));
    assert!(!w.path("m.ckpt").exists());
}

#[test]
fn gen_data_is_reproducible() {
    let w = Workdir::new();
    let stats = w.ok(&["gen-data", "--out", "a.jsonl"]);
    assert!(stats.contains("records"));
    w.ok(&["gen-data", "--out", "b.jsonl"]);
    assert_eq!(std::fs::read(w.path("a.jsonl")).unwrap(), std::fs::read(w.path("b.jsonl")).unwrap());
    let (ma, mb) = (manifest(&w.path("a.jsonl")), manifest(&w.path("b.jsonl")));
    assert_eq!(ma["dataset_hash"], mb["dataset_hash"]);
    assert_eq!(ma["config_hash"], mb["config_hash"]);
    assert_eq!(ma["schema_version"], 1);

    w.ok(&["gen-data", "--out", "su.jsonl", "--stages", "SU"]);
    let first = std::fs::read_to_string(w.path("su.jsonl")).unwrap();
    let rec: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(rec["stages"], serde_json::json!(["SU"]));
}

#[test]
fn seed_override_from_environment_reaches_the_manifest() {
    let w = Workdir::new();
    let out = Command::new(env!("CARGO_BIN_EXE_reasonplan"))
        .args(["--config", "toy.toml", "gen-data", "--out", "d.jsonl"])
        .current_dir(w.dir.path())
        .env("REASONPLAN_SEED", "42")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(manifest(&w.path("d.jsonl"))["config"]["seed"], 42);
}

#[test]
fn expert_scores_full_marks_on_the_dev_suite() {
    // default timeouts; the toy limits are too short for some routes
    let w = Workdir::new();
    std::fs::write(w.path("toy.toml"), "").unwrap();
    let text = w.ok(&["eval-closed", "--suite", "dev", "--expert", "--out", "expert.jsonl"]);
    assert!(text.contains("episodes 10"));
    assert_eq!(summary_ds(&w.path("expert.jsonl")), 100.0);
}

#[test]
fn train_evaluate_and_report() {
    let w = Workdir::new();
    w.ok(&["gen-data", "--out", "d.jsonl"]);
    w.ok(&["train", "--data", "d.jsonl", "--stage", "1", "--out", "s1.ckpt", "--metrics", "s1.jsonl"]);
    w.ok(&["train", "--data", "d.jsonl", "--stage", "2", "--init", "s1.ckpt", "--out", "s2.ckpt", "--metrics", "s2.jsonl"]);
    let m = manifest(&w.path("s2.ckpt"));
    assert_eq!(m["dataset_hash"], manifest(&w.path("d.jsonl"))["dataset_hash"]);
    assert!(m["checkpoint_hash"].is_string());

    let open = w.ok(&["eval-open", "--data", "d.jsonl", "--checkpoint", "s2.ckpt", "--out", "open.json"]);
    assert!(open.contains("L2"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(w.path("open.json")).unwrap()).unwrap();
    assert!(report["l2"].as_f64().unwrap() >= 0.0);

    w.ok(&["eval-closed", "--suite", "merge", "--checkpoint", "s2.ckpt", "--out", "model.jsonl"]);
    w.ok(&["eval-closed", "--suite", "merge", "--expert", "--out", "expert.jsonl"]);
    let model_ds = summary_ds(&w.path("model.jsonl"));
    assert!(model_ds < 100.0, "two training steps should not drive");

    let table = w.ok(&[
        "report", "--runs", "model.jsonl", "expert.jsonl", "--metrics", "s1.jsonl", "s2.jsonl", "--out", "cmp.md",
    ]);
    let rows: Vec<&str> = table.lines().filter(|l| l.starts_with("| ") && l.contains(".jsonl")).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains("expert.jsonl"), "best run first: {table}");
    let curves = std::fs::read_to_string(w.path("cmp.curves.csv")).unwrap();
    assert_eq!(curves.lines().next().unwrap(), "run,stage,step,l_image,l_text,l_total");
    assert!(curves.lines().count() >= 5);
}

#[test]
fn bad_configs_are_rejected() {
    let w = Workdir::new();
    std::fs::write(w.path("bad.toml"), "[training]\nlearning_rate = 1").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_reasonplan"))
        .args(["--config", "bad.toml", "gen-data", "--out", "d.jsonl"])
        .current_dir(w.dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}
