//! End-to-end tests that drive the compiled binary through the full
//! synth, train, eval, and gradcheck workflow.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn glmsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glmsm"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn path_str(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Runs `synth` with defaults into `dir` and returns the two manifests.
fn synth_defaults(dir: &Path) -> (PathBuf, PathBuf) {
    let out = glmsm(&["synth", "--out", path_str(dir), "--no-timing"]);
    assert_eq!(code(&out), 0, "synth failed: {}", stderr(&out));
    (
        dir.join("train/manifest.tsv"),
        dir.join("test/manifest.tsv"),
    )
}

fn final_accuracy(text: &str) -> f64 {
    text.lines()
        .find_map(|line| line.strip_prefix("final train accuracy "))
        .expect("train prints a final accuracy line")
        .parse()
        .expect("accuracy parses")
}

#[test]
fn synth_writes_both_splits_deterministically() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    synth_defaults(&a);
    synth_defaults(&b);

    let train_sets = std::fs::read_dir(a.join("train")).unwrap().count();
    let test_sets = std::fs::read_dir(a.join("test")).unwrap().count();
    // 24 + 6 set files plus one manifest per split.
    assert_eq!(train_sets, 25);
    assert_eq!(test_sets, 7);

    for split in ["train", "test"] {
        let dir_a = a.join(split);
        for entry in std::fs::read_dir(&dir_a).unwrap() {
            let name = entry.unwrap().file_name();
            let bytes_a = std::fs::read(dir_a.join(&name)).unwrap();
            let bytes_b = std::fs::read(b.join(split).join(&name)).unwrap();
            assert_eq!(bytes_a, bytes_b, "{split}/{name:?} differs across runs");
        }
    }
}

#[test]
fn synth_rejects_bad_flags_with_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("ds");

    let out = glmsm(&["synth", "--sigma", "-1", "--out", path_str(&out_dir)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--sigma"));

    let out = glmsm(&["synth", "--classes", "1", "--out", path_str(&out_dir)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--classes"));

    let out = glmsm(&["synth"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--out"));
}

#[test]
fn train_defaults_fit_the_default_dataset() {
    let tmp = TempDir::new().unwrap();
    let (train_manifest, _) = synth_defaults(&tmp.path().join("ds"));
    let run = tmp.path().join("run");

    let out = glmsm(&[
        "train",
        "--data",
        path_str(&train_manifest),
        "--out",
        path_str(&run),
        "--no-timing",
    ]);
    assert_eq!(code(&out), 0, "train failed: {}", stderr(&out));
    assert!(final_accuracy(&stdout(&out)) >= 0.95);

    let history = std::fs::read_to_string(run.join("history.tsv")).unwrap();
    let mut lines = history.lines();
    assert_eq!(lines.next(), Some("epoch\tmean_loss\ttrain_acc"));
    assert_eq!(lines.count(), 30);
    assert!(run.join("model.txt").exists());
}

#[test]
fn train_reruns_are_bit_identical() {
    let tmp = TempDir::new().unwrap();
    let (train_manifest, _) = synth_defaults(&tmp.path().join("ds"));

    let mut outputs = Vec::new();
    for name in ["r1", "r2"] {
        let run = tmp.path().join(name);
        let out = glmsm(&[
            "train",
            "--data",
            path_str(&train_manifest),
            "--out",
            path_str(&run),
            "--no-timing",
        ]);
        assert_eq!(code(&out), 0, "train failed: {}", stderr(&out));
        outputs.push((
            std::fs::read(run.join("model.txt")).unwrap(),
            std::fs::read(run.join("history.tsv")).unwrap(),
        ));
    }
    assert_eq!(outputs[0].0, outputs[1].0, "model files differ");
    assert_eq!(outputs[0].1, outputs[1].1, "history files differ");
}

#[test]
fn zero_rate_freezes_training_and_warns() {
    let tmp = TempDir::new().unwrap();
    let (train_manifest, _) = synth_defaults(&tmp.path().join("ds"));
    let run = tmp.path().join("run");

    let out = glmsm(&[
        "train",
        "--data",
        path_str(&train_manifest),
        "--rate",
        "0",
        "--epochs",
        "4",
        "--out",
        path_str(&run),
        "--no-timing",
    ]);
    assert_eq!(code(&out), 0);
    assert!(stderr(&out).contains("learning rate is 0"));

    let history = std::fs::read_to_string(run.join("history.tsv")).unwrap();
    let losses: Vec<&str> = history
        .lines()
        .skip(1)
        .map(|line| line.split('\t').nth(1).unwrap())
        .collect();
    assert_eq!(losses.len(), 4);
    assert!(losses.windows(2).all(|w| w[0] == w[1]), "history not flat");
}

#[test]
fn incompatible_train_flags_exit_2() {
    let tmp = TempDir::new().unwrap();
    let (train_manifest, _) = synth_defaults(&tmp.path().join("ds"));
    let run = tmp.path().join("run");
    let manifest = path_str(&train_manifest);
    let run_str = path_str(&run);

    // Softmax archs pin K to the class count (here C = 3).
    let out = glmsm(&["train", "--data", manifest, "--K", "5", "--out", run_str]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("K == C"));

    let out = glmsm(&[
        "train",
        "--data",
        manifest,
        "--optimizer",
        "sgd",
        "--out",
        run_str,
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("rsgd"));

    let out = glmsm(&[
        "train",
        "--data",
        manifest,
        "--arch",
        "lmsm-softmax",
        "--repulsion",
        "0.4",
        "--out",
        run_str,
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--repulsion"));
}

#[test]
fn eval_reports_accuracy_confusion_and_tsv() {
    let tmp = TempDir::new().unwrap();
    let (train_manifest, test_manifest) = synth_defaults(&tmp.path().join("ds"));
    let run = tmp.path().join("run");
    let out = glmsm(&[
        "train",
        "--data",
        path_str(&train_manifest),
        "--out",
        path_str(&run),
        "--no-timing",
    ]);
    assert_eq!(code(&out), 0);

    let model = run.join("model.txt");
    let tsv = tmp.path().join("confusion.tsv");
    let out = glmsm(&[
        "eval",
        "--data",
        path_str(&test_manifest),
        "--model",
        path_str(&model),
        "--tsv",
        path_str(&tsv),
        "--no-timing",
    ]);
    assert_eq!(code(&out), 0, "eval failed: {}", stderr(&out));

    let text = stdout(&out);
    let accuracy: f64 = text
        .lines()
        .find_map(|line| line.strip_prefix("accuracy "))
        .expect("accuracy line")
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&accuracy));
    for class in 0..3 {
        assert!(text.contains(&format!("class {class}:")));
    }

    // The TSV mirrors the printed confusion matrix: header plus C rows,
    // and each row sums to that class's test set count (2 per class).
    let tsv_text = std::fs::read_to_string(&tsv).unwrap();
    let mut lines = tsv_text.lines();
    assert_eq!(lines.next(), Some("true\t0\t1\t2"));
    let mut diagonal = 0usize;
    for (class, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields[0], class.to_string());
        let counts: Vec<usize> = fields[1..].iter().map(|f| f.parse().unwrap()).collect();
        assert_eq!(counts.iter().sum::<usize>(), 2);
        diagonal += counts[class];
    }
    assert!((accuracy - diagonal as f64 / 6.0).abs() < 1e-4);

    // Identical invocation, identical bytes out.
    let again = glmsm(&[
        "eval",
        "--data",
        path_str(&test_manifest),
        "--model",
        path_str(&model),
        "--tsv",
        path_str(&tsv),
        "--no-timing",
    ]);
    assert_eq!(stdout(&again), text);
}

#[test]
fn eval_errors_use_the_documented_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let (train_manifest, test_manifest) = synth_defaults(&tmp.path().join("ds"));

    // Missing model file is a usage error.
    let out = glmsm(&[
        "eval",
        "--data",
        path_str(&test_manifest),
        "--model",
        path_str(&tmp.path().join("absent.txt")),
    ]);
    assert_eq!(code(&out), 2);

    // A model trained at d=8 cannot score a d=10 dataset; that is a
    // runtime failure and the message names both dimensions.
    let run = tmp.path().join("run");
    let out = glmsm(&[
        "train",
        "--data",
        path_str(&train_manifest),
        "--out",
        path_str(&run),
        "--no-timing",
    ]);
    assert_eq!(code(&out), 0);
    let wide = tmp.path().join("wide");
    let out = glmsm(&[
        "synth",
        "--d",
        "10",
        "--out",
        path_str(&wide),
        "--no-timing",
    ]);
    assert_eq!(code(&out), 0);
    let out = glmsm(&[
        "eval",
        "--data",
        path_str(&wide.join("test/manifest.tsv")),
        "--model",
        path_str(&run.join("model.txt")),
    ]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("10") && err.contains("8"), "got: {err}");
}

#[test]
fn gradcheck_all_archs_pass_and_absurd_step_fails() {
    for arch in ["glmsm-softmax", "glmsm-fc", "lmsm-softmax", "lmsm-fc"] {
        let out = glmsm(&["gradcheck", "--arch", arch, "--no-timing"]);
        assert_eq!(code(&out), 0, "{arch} gradcheck failed: {}", stdout(&out));
        let text = stdout(&out);
        assert!(text.contains("PASS"), "{arch}: {text}");
        assert!(text.contains("block tau"), "{arch} should audit tau");
    }

    let out = glmsm(&["gradcheck", "--step", "10", "--no-timing"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn config_file_layers_between_defaults_and_flags() {
    let tmp = TempDir::new().unwrap();
    let (train_manifest, _) = synth_defaults(&tmp.path().join("ds"));
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "epochs = 2\nrate = 0.2\n").unwrap();

    // Config value applies when no flag is given.
    let run = tmp.path().join("from-config");
    let out = glmsm(&[
        "train",
        "--config",
        path_str(&cfg),
        "--data",
        path_str(&train_manifest),
        "--out",
        path_str(&run),
        "--no-timing",
    ]);
    assert_eq!(code(&out), 0, "train failed: {}", stderr(&out));
    let history = std::fs::read_to_string(run.join("history.tsv")).unwrap();
    assert_eq!(history.lines().count(), 3, "header plus two epochs");

    // An explicit flag beats the config.
    let run = tmp.path().join("from-flag");
    let out = glmsm(&[
        "train",
        "--config",
        path_str(&cfg),
        "--epochs",
        "5",
        "--data",
        path_str(&train_manifest),
        "--out",
        path_str(&run),
        "--no-timing",
    ]);
    assert_eq!(code(&out), 0);
    let history = std::fs::read_to_string(run.join("history.tsv")).unwrap();
    assert_eq!(history.lines().count(), 6, "header plus five epochs");
}

#[test]
fn config_file_problems_exit_2() {
    let tmp = TempDir::new().unwrap();
    let (train_manifest, _) = synth_defaults(&tmp.path().join("ds"));
    let run = tmp.path().join("run");
    let cfg = tmp.path().join("run.cfg");

    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    let out = glmsm(&[
        "train",
        "--config",
        path_str(&cfg),
        "--data",
        path_str(&train_manifest),
        "--out",
        path_str(&run),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bogus"));

    std::fs::write(&cfg, "epochs 2\n").unwrap();
    let out = glmsm(&[
        "train",
        "--config",
        path_str(&cfg),
        "--data",
        path_str(&train_manifest),
        "--out",
        path_str(&run),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("key = value"));

    std::fs::write(&cfg, "epochs = soon\n").unwrap();
    let out = glmsm(&[
        "train",
        "--config",
        path_str(&cfg),
        "--data",
        path_str(&train_manifest),
        "--out",
        path_str(&run),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("epochs"));
}

#[test]
fn timing_lines_appear_unless_suppressed() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("ds");
    let out = glmsm(&["synth", "--out", path_str(&dir)]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("[timing]"));

    let dir = tmp.path().join("ds2");
    let out = glmsm(&["synth", "--out", path_str(&dir), "--no-timing"]);
    assert_eq!(code(&out), 0);
    assert!(!stdout(&out).contains("[timing]"));
}
