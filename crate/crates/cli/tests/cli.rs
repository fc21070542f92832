//! Drives the `stagewise` binary: the individual commands chained by hand
//! must reproduce `run-pipeline` byte for byte, and failures must map to the
//! documented exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"run_id = "tiny"
seed = 3
max_stages = 2

[data]
letters = 5
feature_dim = 6
lexicon_size = 12
source_train = 24
source_valid = 6
target_train = 16
target_test = 8

[[teachers]]
name = "src-a"
shift = 1.5
channel_seed = 1
bias_strength = 0.5

[[teachers]]
name = "src-b"
shift = 1.5
channel_seed = 2
bias_strength = 0.5

[teacher_model]
hidden_dims = [12]
[student_model]
hidden_dims = [12]
[teacher_train]
epochs = 4
learning_rate = 0.3
[student_train]
epochs = 4
learning_rate = 0.3

[decode]
beam_width = 6
alpha_grid = [0.0, 0.5]
beta_grid = [0.0, 1.0]
"#;

fn stagewise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stagewise"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = stagewise(args);
    assert!(
        out.status.success(),
        "stagewise {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code and the single stderr line of a failing invocation.
fn fails(args: &[&str]) -> (i32, String) {
    let out = stagewise(args);
    assert!(!out.status.success(), "stagewise {args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    (out.status.code().unwrap(), stderr)
}

fn same_file(ours: &Path, theirs: &Path) {
    let (a, b) = (std::fs::read(ours).unwrap(), std::fs::read(theirs).unwrap());
    assert!(a == b, "{} differs from {}", ours.display(), theirs.display());
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: String,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("tiny.toml");
        std::fs::write(&config, TINY).unwrap();
        Fixture {
            config: config.to_str().unwrap().to_string(),
            root,
            _dir: dir,
        }
    }

    fn path(&self, rel: &str) -> String {
        self.root.join(rel).to_str().unwrap().to_string()
    }
}

#[test]
fn chained_commands_reproduce_the_pipeline_bit_for_bit() {
    let fx = Fixture::new();
    let c = fx.config.as_str();
    ok(&["run-pipeline", "--config", c, "--runs-dir", &fx.path("runs")]);
    let run = fx.root.join("runs/tiny");
    let p = |rel: &str| fx.path(rel);

    ok(&["gen-data", "--config", c, "--out", &p("data")]);
    for name in ["src-a-train", "src-a-valid", "src-b-train", "src-b-valid", "target-train", "target-test"] {
        let m = format!("{name}.manifest");
        same_file(&fx.root.join("data").join(&m), &run.join("data").join(&m));
    }
    let manifest = |name: &str| p(&format!("data/{name}.manifest"));

    for (i, src) in ["src-a", "src-b"].iter().enumerate() {
        let out = p(&format!("t{i}.ckpt"));
        ok(&["train-teacher", "--config", c, "--index", &i.to_string(), "--data", &manifest(&format!("{src}-train")), "--out", &out]);
        same_file(Path::new(&out), &run.join(format!("teacher{i}/model.ckpt")));
    }
    ok(&["train-lm", "--config", c, "--data", &manifest("src-a-train"), &manifest("src-b-train"), "--out", &p("lm.arpa")]);
    same_file(Path::new(&p("lm.arpa")), &run.join("lm/lm.arpa"));
    ok(&[
        "tune", "--config", c, "--models", &p("t0.ckpt"), &p("t1.ckpt"),
        "--data", &manifest("src-a-valid"), &manifest("src-b-valid"),
        "--lm", &p("lm.arpa"), "--out", &p("tuning.json"),
    ]);
    same_file(Path::new(&p("tuning.json")), &run.join("tuning/tuning.json"));

    // Stage 0: every teacher labels the target, Top-1 picks, the LM decodes.
    for i in 0..2 {
        ok(&["infer", "--model", &p(&format!("t{i}.ckpt")), "--data", &manifest("target-train"), "--out", &p(&format!("t{i}.grids"))]);
    }
    ok(&["select", "--grids", &p("t0.grids"), &p("t1.grids"), "--out", &p("sel.grids"), "--audit", &p("audit.jsonl")]);
    same_file(Path::new(&p("sel.grids")), &run.join("stage0/selected.grids"));
    let (lm, tuning) = (p("lm.arpa"), p("tuning.json"));
    let weights = ["--lm", lm.as_str(), "--tuning", tuning.as_str()];
    let with_weights = |args: &[&str]| ok(&[args, &weights[..]].concat());
    let labels0 = p("labels0.jsonl");
    with_weights(&["decode", "--config", c, "--grids", &p("sel.grids"), "--selection", &p("audit.jsonl"), "--out", &labels0]);
    same_file(Path::new(&labels0), &run.join("stage0/labels.jsonl"));

    // Stage 1: a fresh student on those labels, then its own labels.
    ok(&["train-student", "--config", c, "--stage", "1", "--data", &manifest("target-train"), "--labels", &labels0, "--out", &p("s1.ckpt")]);
    same_file(Path::new(&p("s1.ckpt")), &run.join("stage1/model.ckpt"));
    ok(&["infer", "--model", &p("s1.ckpt"), "--data", &manifest("target-train"), "--out", &p("s1.grids")]);
    let labels1 = p("labels1.jsonl");
    with_weights(&["decode", "--config", c, "--grids", &p("s1.grids"), "--stage", "1", "--previous", &labels0, "--out", &labels1]);
    same_file(Path::new(&labels1), &run.join("stage1/labels.jsonl"));

    let decodes = p("decodes");
    std::fs::create_dir_all(&decodes).unwrap();
    let table = with_weights(&[
        "evaluate", "--config", c, "--model", &p("s1.ckpt"), "--data", &manifest("target-test"),
        "--name", "S1", "--decodes", &decodes,
    ]);
    assert_eq!(table.lines().count(), 3, "{table}");
    for f in ["test_S1_no_lm.jsonl", "test_S1_lm.jsonl"] {
        same_file(&Path::new(&decodes).join(f), &run.join("stage1").join(f));
    }

    // The KL baseline trains on the selected grids directly.
    ok(&["train-student", "--config", c, "--data", &manifest("target-train"), "--soft-grids", &p("sel.grids"), "--out", &p("kl.ckpt")]);
    same_file(Path::new(&p("kl.ckpt")), &run.join("baseline_S_KL/model.ckpt"));
}

#[test]
fn report_reprints_the_tables_after_auditing() {
    let fx = Fixture::new();
    ok(&["run-pipeline", "--config", &fx.config, "--runs-dir", &fx.path("runs")]);
    let run = fx.root.join("runs/tiny");
    let wer = ok(&["report", run.to_str().unwrap(), "--table", "wer"]);
    assert_eq!(wer, std::fs::read_to_string(run.join("report.tsv")).unwrap());
    let stages = ok(&["report", run.to_str().unwrap(), "--table", "stages"]);
    assert_eq!(stages, std::fs::read_to_string(run.join("stages.tsv")).unwrap());

    std::fs::write(run.join("stage1/test_S1_lm.jsonl"), "not a label file\n").unwrap();
    let (code, stderr) = fails(&["report", run.to_str().unwrap()]);
    assert_eq!(code, 3, "{stderr}");
    assert!(stderr.starts_with("error[format]: "), "{stderr}");
}

#[test]
fn run_pipeline_is_deterministic_and_flags_override_the_file() {
    let fx = Fixture::new();
    let reports: Vec<(String, String)> = ["a", "b"]
        .iter()
        .map(|d| {
            ok(&["run-pipeline", "--config", &fx.config, "--seed", "7", "--run-id", "seven", "--runs-dir", &fx.path(d)]);
            let run = fx.root.join(d).join("seven");
            (
                std::fs::read_to_string(run.join("report.tsv")).unwrap(),
                std::fs::read_to_string(run.join("stages.tsv")).unwrap(),
            )
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
    let echoed = std::fs::read_to_string(fx.root.join("a/seven/config.toml")).unwrap();
    assert!(echoed.contains("seed = 7\n") && echoed.contains("run_id = \"seven\"\n"), "{echoed}");
}

#[test]
fn the_echoed_config_is_a_fixed_point() {
    let fx = Fixture::new();
    let echoed = ok(&["config", "--config", &fx.config]);
    let path = fx.path("echoed.toml");
    std::fs::write(&path, &echoed).unwrap();
    assert_eq!(ok(&["config", "--config", &path]), echoed);
    let empty = fx.path("empty.toml");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(ok(&["config"]), ok(&["config", "--config", &empty]));
}

#[test]
fn decode_needs_an_lm_for_a_nonzero_weight() {
    let fx = Fixture::new();
    let c = fx.config.as_str();
    ok(&["gen-data", "--config", c, "--out", &fx.path("data")]);
    ok(&["train-teacher", "--config", c, "--index", "0", "--data", &fx.path("data/src-a-train.manifest"), "--out", &fx.path("t.ckpt")]);
    ok(&["infer", "--model", &fx.path("t.ckpt"), "--data", &fx.path("data/target-test.manifest"), "--out", &fx.path("t.grids")]);

    ok(&["decode", "--config", c, "--grids", &fx.path("t.grids"), "--alpha", "0", "--out", &fx.path("l.jsonl")]);
    assert!(Path::new(&fx.path("l.jsonl")).exists());
    let (code, stderr) = fails(&["decode", "--config", c, "--grids", &fx.path("t.grids"), "--alpha", "0.5", "--out", &fx.path("m.jsonl")]);
    assert_eq!(code, 2);
    assert!(stderr.starts_with("error[usage]: "), "{stderr}");
    assert_eq!(stderr.lines().count(), 1);
    assert!(!Path::new(&fx.path("m.jsonl")).exists());
}

#[test]
fn failures_map_to_exit_codes() {
    let fx = Fixture::new();
    // Unknown configuration keys are rejected with their line.
    let bad = fx.path("bad.toml");
    std::fs::write(&bad, "seed = 1\nbogus = 2\n").unwrap();
    let (code, stderr) = fails(&["config", "--config", &bad]);
    assert_eq!(code, 3);
    assert!(stderr.starts_with("error[format]: ") && stderr.contains("line 2"), "{stderr}");

    // Values that parse but make no sense are usage errors.
    std::fs::write(&bad, "max_stages = 0\n").unwrap();
    assert_eq!(fails(&["config", "--config", &bad]).0, 2);
    assert_eq!(fails(&["config", "--max-stages", "0"]).0, 2);
    // As are malformed command lines.
    assert_eq!(fails(&["decode"]).0, 2);
    assert_eq!(fails(&["no-such-command"]).0, 2);

    // Missing inputs are data errors.
    let (code, stderr) = fails(&["infer", "--model", &fx.path("absent.ckpt"), "--data", &fx.path("absent.manifest"), "--out", &fx.path("x")]);
    assert_eq!(code, 3);
    assert!(stderr.starts_with("error[io]: ") && stderr.contains("absent.ckpt"), "{stderr}");

    // A tampered run is an integrity error.
    let runs = fx.path("runs");
    ok(&["run-pipeline", "--config", &fx.config, "--runs-dir", &runs, "--halt-after-stage", "0"]);
    let labels = fx.root.join("runs/tiny/stage0/labels.jsonl");
    let mut bytes = std::fs::read(&labels).unwrap();
    bytes.extend_from_slice(b"\n");
    std::fs::write(&labels, bytes).unwrap();
    let (code, stderr) = fails(&["run-pipeline", "--config", &fx.config, "--runs-dir", &runs]);
    assert_eq!(code, 4);
    assert!(stderr.starts_with("error[integrity]: ") && stderr.contains("labels.jsonl"), "{stderr}");
}
