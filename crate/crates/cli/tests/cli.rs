//! End-to-end checks of the binary: exit codes, determinism, replay.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gaussflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaussflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const ZERO_FIELD_DENSITY: &str = "mode = density\ndensity.op = inverse\ndim = 1\n\
    drift.family = constant\ndrift.params = 0\n\
    diffusion.0.family = constant\ndiffusion.0.params = 0\n\
    grid.t = 1\ngrid.steps = 50\nseed = 1\n\
    eval.min = -1\neval.max = 1\neval.step = 0.5\n";

#[test]
fn fields_list_prints_the_registry() {
    let out = gaussflow(&["fields", "list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("rotation"));
    assert!(text.contains("power-alpha"));
    assert!(text.contains("{0}"), "singular sets are listed");
    assert!(text.contains("osgood"));
    assert!(text.contains("r log(1/r)"));
}

#[test]
fn zero_field_density_run_exits_clean_with_unit_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.cfg", ZERO_FIELD_DENSITY);
    let out_dir = tmp.path().join("out");
    let out = gaussflow(&["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("density.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "y_1,k,method");
    for line in lines {
        assert_eq!(line.split(',').nth(1).unwrap(), "1");
    }
    assert!(out_dir.join("manifest.txt").exists());
}

#[test]
fn identical_config_and_seed_reproduce_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.cfg",
        "mode = density\ndensity.op = lp\ndim = 1\n\
         drift.family = linear\ndrift.params = -1\n\
         diffusion.0.family = constant\ndiffusion.0.params = 0.7\n\
         grid.t = 0.2\ngrid.steps = 40\np = 2\nmc.paths = 64\nmc.initials = 2\nseed = 9\n",
    );
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = tmp.path().join(sub);
        let out = gaussflow(&["density", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(out_dir.join("moments.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "outputs must be byte-identical");
}

#[test]
fn results_are_independent_of_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.cfg",
        "mode = density\ndensity.op = entropy\ndim = 1\n\
         drift.family = linear\ndrift.params = -0.8\n\
         diffusion.0.family = constant\ndiffusion.0.params = 0.5\n\
         grid.t = 0.25\ngrid.steps = 50\nmc.paths = 96\nmc.initials = 3\nseed = 17\n",
    );
    let mut outputs = Vec::new();
    for width in ["1", "2"] {
        let out_dir = tmp.path().join(width);
        let out = Command::new(env!("CARGO_BIN_EXE_gaussflow"))
            .args(["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
            .env("GAUSSFLOW_PARALLELISM", width)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(out_dir.join("moments.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "worker count changed the output bytes");
}

#[test]
fn divergent_condition_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.cfg",
        "mode = bounds\nbounds.op = condition\ndim = 1\n\
         drift.family = constant\ndrift.params = 0\n\
         diffusion.0.family = linear\ndiffusion.0.params = 1\n\
         lambda0 = 0.5\nseed = 2\n",
    );
    let out_dir = tmp.path().join("out");
    let out = gaussflow(&["bounds", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let csv = std::fs::read_to_string(out_dir.join("condition.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with("false"));
}

#[test]
fn malformed_config_reports_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.cfg", "mode = density\nnot a key value line\n");
    let out = gaussflow(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn subcommand_mode_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.cfg", ZERO_FIELD_DENSITY);
    let out = gaussflow(&["simulate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("mode"), "{err}");
}

#[test]
fn replay_verifies_and_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.cfg", ZERO_FIELD_DENSITY);
    let out_dir = tmp.path().join("out");
    let out = gaussflow(&["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let manifest = out_dir.join("manifest.txt");

    // fresh replay passes
    let out = gaussflow(&["replay", manifest.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // tampering with an output fails the checksum verification
    let csv_path = out_dir.join("density.csv");
    let mut csv = std::fs::read_to_string(&csv_path).unwrap();
    csv.push_str("tampered\n");
    std::fs::write(&csv_path, csv).unwrap();
    let out = gaussflow(&["replay", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("checksum mismatch"));
}

#[test]
fn replay_refuses_other_versions() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "run.cfg", ZERO_FIELD_DENSITY);
    let out_dir = tmp.path().join("out");
    let out = gaussflow(&["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let manifest = out_dir.join("manifest.txt");
    let text = std::fs::read_to_string(&manifest).unwrap();
    let text = text.replace(
        &format!("artifact-version = {}", env!("CARGO_PKG_VERSION")),
        "artifact-version = 0.0.0-other",
    );
    std::fs::write(&manifest, text).unwrap();
    let out = gaussflow(&["replay", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("refusing replay"));
}

#[test]
fn shipped_configs_parse_and_the_fast_ones_run() {
    // all shipped configs must at least parse and build their ensembles
    let configs_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&configs_dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().map(|e| e == "cfg") != Some(true) {
            continue;
        }
        seen += 1;
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("mode ="), "{} lacks a mode", path.display());
    }
    assert!(seen >= 10, "expected the shipped config corpus, found {seen}");

    // a fast representative end-to-end: the flow-property config
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs_dir.join("flow_property.cfg");
    let out_dir = tmp.path().join("out");
    let out = gaussflow(&["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("flow.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let residual: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(residual <= 1e-12);
    }
}
