use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fibrepath(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fibrepath"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fibrepath(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth_box(dir: &Path) -> String {
    let d = dir.to_str().unwrap();
    let stdout = ok(&["synth", "box", "--edge", "2", "--out", d]);
    assert!(stdout.contains("elements"));
    for f in ["box.tet", "box.stress", "box.cfg"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    dir.join("box.cfg").to_str().unwrap().to_string()
}

fn toolpath_layers(file: &Path) -> usize {
    let text = fs::read_to_string(file).unwrap();
    text.lines().filter(|l| l.starts_with("layer ")).count()
}

#[test]
fn synth_then_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_box(dir.path());
    let out = dir.path().join("full");
    let stdout = ok(&["pipeline", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(stdout.contains("total fibre"));
    // 4 mm thick box at the default 1 mm layer height
    assert_eq!(toolpath_layers(&out.join("toolpaths.txt")), 4);
    assert!(out.join("toolpaths.gcode").is_file());
    assert!(out.join("report.json").is_file());
    for k in 0..4 {
        assert!(out.join(format!("layer_{k:03}.svg")).is_file());
    }
}

#[test]
fn layer_range_limits_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_box(dir.path());
    let out = dir.path().join("part");
    ok(&[
        "-v",
        "pipeline",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--layers",
        "1..3",
    ]);
    let text = fs::read_to_string(out.join("toolpaths.txt")).unwrap();
    assert!(text.starts_with("toolpaths v1 2\n"));
    assert!(text.contains("\nlayer 1 ") && text.contains("\nlayer 2 "));
    assert!(!out.join("layer_000.svg").exists());
}

#[test]
fn field_and_paths_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_box(dir.path());

    let field = dir.path().join("field");
    ok(&[
        "field",
        "--config",
        &cfg,
        "--out",
        field.to_str().unwrap(),
        "--layers",
        "0..1",
    ]);
    assert!(!field.join("toolpaths.txt").exists());
    let dump = fs::read_to_string(field.join("layer_000_0.field")).unwrap();
    assert!(!dump.is_empty());
    assert!(fs::read_to_string(field.join("layer_000.svg"))
        .unwrap()
        .contains("<polygon"));

    let paths = dir.path().join("paths");
    ok(&[
        "paths",
        "--config",
        &cfg,
        "--out",
        paths.to_str().unwrap(),
        "--layers",
        "0..1",
    ]);
    let text = fs::read_to_string(paths.join("toolpaths.txt")).unwrap();
    assert!(text.contains("path stress"));
    assert!(!text.contains("path boundary"));
}

#[test]
fn default_output_dir_sits_next_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_box(dir.path());
    ok(&["paths", "--config", &cfg, "--layers", "0..1"]);
    assert!(dir.path().join("out").join("toolpaths.txt").is_file());
}

#[test]
fn bad_invocations_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_box(dir.path());
    let d = dir.path().to_str().unwrap();

    let out = fibrepath(&["pipeline", "--config", &cfg, "--layers", "3..1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("a..b"));

    let out = fibrepath(&["pipeline", "--config", &format!("{d}/missing.cfg")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.cfg"));

    let out = fibrepath(&["synth", "box", "--edge", "50", "--out", d]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("edge"));

    fs::write(dir.path().join("bad.cfg"), "spacing_w = -1\n").unwrap();
    let out = fibrepath(&["pipeline", "--config", &format!("{d}/bad.cfg")]);
    assert!(!out.status.success());
}
