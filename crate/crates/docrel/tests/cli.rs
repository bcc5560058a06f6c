//! Command-line contract tests: exit codes, flag defaults in --help,
//! byte-level idempotence of output files, and the end-to-end pipeline on
//! a small synthetic corpus.

use std::path::Path;
use std::process::{Command, Output};

fn docrel(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docrel"))
        .args(args)
        .current_dir(dir)
        .env_remove("DOCREL_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn help_lists_every_hyperparameter_default() {
    let dir = tempfile::tempdir().unwrap();
    let out = docrel(&["train", "--help"], dir.path());
    assert!(out.status.success());
    let text = stdout(&out);
    for (flag, default) in [
        ("--tau", "10"),
        ("--delta", "0.05"),
        ("--p", "0.3"),
        ("--theta", "0.85"),
        ("--alpha", "0.4"),
        ("--lr", "0.001"),
        ("--gat-layers", "2"),
        ("--gat-heads", "2"),
        ("--gat-hidden", "500"),
        ("--d-word", "100"),
        ("--d-hidden", "128"),
    ] {
        let lines: Vec<&str> = text.lines().collect();
        let at = lines
            .iter()
            .position(|l| l.contains(&format!("{flag} ")))
            .unwrap_or_else(|| panic!("{flag} missing from --help"));
        let window = lines[at..(at + 2).min(lines.len())].join(" ");
        assert!(
            window.contains(&format!("default: {default}")),
            "{flag}: {window}"
        );
    }
}

#[test]
fn missing_input_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = docrel(
        &["build-graph", "--train", "absent.json", "--out", "g.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}

#[test]
fn unknown_flag_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = docrel(&["stats", "--no-such-flag"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_ablation_switch_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    docrel(&["synth", "--out", "c.json", "--docs", "4"], dir.path());
    let out = docrel(
        &[
            "ablate",
            "--train",
            "c.json",
            "--switches",
            "bogus",
            "--epochs",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn stats_prints_the_fixture_fraction() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = r#"[{
        "title": "s",
        "sents": [["a", "b", "c"]],
        "vertexSet": [
            [{"name": "a", "sent_id": 0, "pos": [0, 1], "type": "PER"}],
            [{"name": "b", "sent_id": 0, "pos": [1, 2], "type": "LOC"}],
            [{"name": "c", "sent_id": 0, "pos": [2, 3], "type": "LOC"}]
        ],
        "labels": [
            {"h": 0, "t": 1, "r": "Ra", "evidence": []},
            {"h": 0, "t": 2, "r": "Ra", "evidence": []},
            {"h": 0, "t": 2, "r": "Rb", "evidence": []}
        ]
    }]"#;
    std::fs::write(dir.path().join("c.json"), corpus).unwrap();
    let out = docrel(&["stats", "--train", "c.json"], dir.path());
    assert!(out.status.success());
    assert!(
        stdout(&out).contains("multi-label fraction: 0.5000"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn stats_flags_an_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), "[]").unwrap();
    let out = docrel(&["stats", "--train", "c.json"], dir.path());
    assert!(out.status.success());
    assert!(stdout(&out).contains("no labeled entity pairs"));
}

#[test]
fn build_graph_is_byte_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    docrel(&["synth", "--out", "c.json", "--docs", "8"], dir.path());
    for name in ["g1.json", "g2.json"] {
        let out = docrel(
            &[
                "build-graph",
                "--train",
                "c.json",
                "--out",
                name,
                "--tau",
                "1",
            ],
            dir.path(),
        );
        assert!(out.status.success());
    }
    assert_eq!(
        std::fs::read(dir.path().join("g1.json")).unwrap(),
        std::fs::read(dir.path().join("g2.json")).unwrap()
    );
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        let out = docrel(args, dir.path());
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    };
    run(&[
        "synth",
        "--out",
        "train.json",
        "--docs",
        "10",
        "--seed",
        "5",
    ]);
    run(&[
        "build-graph",
        "--train",
        "train.json",
        "--out",
        "graph.json",
        "--tau",
        "1",
        "--dot",
        "graph.dot",
        "--tsv",
        "graph.tsv",
    ]);
    run(&[
        "train",
        "--train",
        "train.json",
        "--graph",
        "graph.json",
        "--out-dir",
        "run",
        "--epochs",
        "3",
        "--d-word",
        "8",
        "--d-type",
        "2",
        "--d-hidden",
        "4",
        "--d-rel",
        "4",
        "--gat-hidden",
        "4",
    ]);
    run(&[
        "predict",
        "--checkpoint",
        "run/checkpoint.json",
        "--input",
        "train.json",
        "--out",
        "preds.json",
        "--theta",
        "0",
    ]);
    let out = run(&[
        "eval",
        "--pred",
        "preds.json",
        "--gold",
        "train.json",
        "--multi",
    ]);
    assert!(stdout(&out).contains("F1="));

    let dot = std::fs::read_to_string(dir.path().join("graph.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
    let trace = std::fs::read_to_string(dir.path().join("run/trace.csv")).unwrap();
    assert!(trace.starts_with("epoch,mean_loss,dev_f1"));
    assert_eq!(trace.lines().count(), 4);
}

#[test]
fn self_evaluation_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = r#"[{
        "title": "g",
        "sents": [["a", "b"]],
        "vertexSet": [
            [{"name": "a", "sent_id": 0, "pos": [0, 1], "type": "PER"}],
            [{"name": "b", "sent_id": 0, "pos": [1, 2], "type": "LOC"}]
        ],
        "labels": [{"h": 0, "t": 1, "r": "Ra", "evidence": []}]
    }]"#;
    std::fs::write(dir.path().join("g.json"), corpus).unwrap();
    std::fs::write(
        dir.path().join("p.json"),
        r#"[{"title": "g", "h_idx": 0, "t_idx": 1, "r": "Ra"}]"#,
    )
    .unwrap();
    let out = docrel(
        &["eval", "--pred", "p.json", "--gold", "g.json"],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(stdout(&out).contains("F1=1.0000"), "{}", stdout(&out));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    docrel(&["synth", "--out", "c.json", "--docs", "8"], dir.path());
    std::fs::write(dir.path().join("cfg.json"), r#"{"tau": 1, "delta": 0.2}"#).unwrap();

    let from_file = docrel(
        &[
            "--config",
            "cfg.json",
            "build-graph",
            "--train",
            "c.json",
            "--out",
            "g.json",
        ],
        dir.path(),
    );
    assert!(from_file.status.success());
    assert!(stdout(&from_file).contains("tau=1"));
    assert!(stdout(&from_file).contains("delta=0.2"));

    let overridden = docrel(
        &[
            "--config",
            "cfg.json",
            "build-graph",
            "--train",
            "c.json",
            "--out",
            "g.json",
            "--delta",
            "0.4",
        ],
        dir.path(),
    );
    assert!(stdout(&overridden).contains("delta=0.4"));

    std::fs::write(dir.path().join("bad.json"), r#"{"typo_field": 3}"#).unwrap();
    let bad = docrel(
        &[
            "--config",
            "bad.json",
            "build-graph",
            "--train",
            "c.json",
            "--out",
            "g.json",
        ],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn data_dir_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    docrel(
        &[
            "synth",
            "--out",
            data.join("c.json").to_str().unwrap(),
            "--docs",
            "4",
        ],
        dir.path(),
    );
    let out = Command::new(env!("CARGO_BIN_EXE_docrel"))
        .args(["stats", "--train", "c.json"])
        .current_dir(dir.path())
        .env("DOCREL_DATA_DIR", &data)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
