use std::path::Path;
use std::process::{Command, Output};

fn glocal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glocal"))
        .args(args)
        .env("GLOCAL_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = glocal(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_then_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("demo");
    ok(&["synth", "--out", s(&data), "--train", "20", "--pool", "30", "--seed", "3"]);
    let conf = data.join("glocal.conf");
    ok(&["run", "--config", s(&conf), "--set", "out_dir=out"]);
    let out = data.join("out");
    for name in ["labels.csv", "fae.glfm", "fsa_pool.glfm", "report.csv", "graph.bin", "picks.csv", "stamps.tsv"] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let stamps = std::fs::read_to_string(out.join("stamps.tsv")).unwrap();
    assert!(stamps.starts_with("config\t"));

    let auc = ok(&[
        "eval-auc",
        "--report",
        s(&out.join("report.csv")),
        "--labels",
        s(&out.join("labels.csv")),
    ]);
    for col in ["local", "global", "glocal"] {
        assert!(auc.contains(col), "{auc}");
    }
}

#[test]
fn incremental_run_through_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("demo");
    ok(&["synth", "--out", s(&data), "--train", "20", "--pool", "40"]);
    let conf = data.join("glocal.conf");
    ok(&["run", "--config", s(&conf), "--set", "sampler=ins", "--set", "batch=2"]);
    let picks = std::fs::read_to_string(data.join("out/picks.csv")).unwrap();
    let mut lines = picks.lines();
    assert_eq!(lines.next(), Some("rank,id,visits,iteration"));
    assert!(lines.count() >= 2);
}

#[test]
fn unknown_key_fails_with_its_name() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "k = 4\nbeam_width = 2\n").unwrap();
    let out = glocal(&["run", "--config", s(&conf)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("beam_width"), "{err}");

    let data = dir.path().join("demo");
    ok(&["synth", "--out", s(&data), "--train", "8", "--pool", "8"]);
    let out = glocal(&["run", "--config", s(&data.join("glocal.conf")), "--set", "alpha=1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));
}

#[test]
fn stage_commands_compose() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("demo");
    ok(&["synth", "--out", s(&data), "--train", "20", "--pool", "30", "--seed", "9"]);
    ok(&["run", "--config", s(&data.join("glocal.conf")), "--set", "stages=migna,embed,attend"]);
    let out = data.join("out");
    let graph = dir.path().join("g.bin");
    ok(&["graph", "--fae", s(&out.join("fae.glfm")), "--k", "4", "--out", s(&graph)]);
    for (mode, size_flag) in [("ots", "--n"), ("ins", "--batch")] {
        let picks = dir.path().join(format!("{mode}.csv"));
        ok(&[
            "sample",
            mode,
            "--graph",
            s(&graph),
            "--fae",
            s(&out.join("fae.glfm")),
            "--fsa",
            s(&out.join("fsa_pool.glfm")),
            "--epochs",
            "10",
            "--seed",
            "4",
            size_flag,
            "5",
            "--out",
            s(&picks),
        ]);
        let text = std::fs::read_to_string(&picks).unwrap();
        assert!(text.lines().count() >= 6, "{mode}: {text}");
    }
}

#[test]
fn missing_input_exits_nonzero() {
    let out = glocal(&["graph", "--fae", "/no/such/file.glfm", "--out", "/tmp/never.bin"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
