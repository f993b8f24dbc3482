use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kolmo_core::series::SnapshotSeries;

fn kolmo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kolmo"))
        .args(args)
        .env("KOLMO_THREADS", "2")
        .output()
        .expect("kolmo runs")
}

fn ok(args: &[&str]) -> Output {
    let out = kolmo(args);
    assert!(
        out.status.success(),
        "kolmo {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_RUN: &str = r#"
seed = 1
workdir = "w"
stages = ["simulate", "reduce", "pca", "train-ae", "encode", "train-map", "train-phase",
          "rollout", "label", "stats-pdf", "stats-kl", "stats-msd"]
[simulate]
re = 13.5
t_total = 150.0
save_every = 1.0
discard = 100.0
[train_ae.optim]
epochs = 2
[train_map.optim]
epochs = 2
[train_phase.optim]
epochs = 2
[rollout]
steps = 30
[stats]
bins = 10
max_lag = 10
"#;

#[test]
fn simulate_writes_expected_snapshot_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.kf");
    ok(&["simulate", "--re", "13.5", "--n", "2", "--t-total", "100", "--save-every", "5", "--discard", "0", "--out", s(&out)]);
    let series = SnapshotSeries::read_from(&out).unwrap();
    assert_eq!(series.len(), 21);
    assert!(dir.path().join("d.kf.manifest.json").exists());
}

fn encode_in(dir: &Path) -> Vec<u8> {
    let p = |f: &str| dir.join(f);
    ok(&["simulate", "--re", "13.5", "--t-total", "80", "--save-every", "1", "--discard", "50", "--seed", "3", "--out", s(&p("d.kf"))]);
    ok(&["reduce", "--in", s(&p("d.kf")), "--out", s(&p("a.kf"))]);
    ok(&["train-ae", "--in", s(&p("a.kf")), "--dh", "2", "--epochs", "2", "--seed-base", "5", "--out", s(&p("ae"))]);
    ok(&["encode", "--model", s(&p("ae")), "--in", s(&p("a.kf")), "--out", s(&p("z.csv"))]);
    fs::read(p("z.csv")).unwrap()
}

#[test]
fn rerun_gives_identical_latents() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let za = encode_in(a.path());
    assert!(!za.is_empty());
    assert_eq!(za, encode_in(b.path()));
}

#[test]
fn small_run_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, SMALL_RUN).unwrap();
    ok(&["run", "--config", s(&cfg)]);
    let w = dir.path().join("w");
    for f in ["ae/enc.knet1", "ae/dec.knet1", "ae/meta.json", "maps/F.knet1", "maps/G.knet1", "pdf_truth.csv", "pdf_rollout.csv", "kl.json", "msd.csv"] {
        assert!(w.join(f).exists(), "missing {f}");
    }
    let pdf = fs::read_to_string(w.join("pdf_truth.csv")).unwrap();
    assert!(pdf.lines().count() > 1);

    for m in ["pdf_truth.csv", "latent.csv", "ae"] {
        let manifest = w.join(format!("{m}.manifest.json"));
        let out = ok(&["replay", s(&manifest)]);
        assert!(String::from_utf8_lossy(&out.stderr).contains("reproduced"));
    }

    // a changed input is caught before anything is rerun
    fs::write(w.join("latent.csv"), "z0,z1\n0,0\n").unwrap();
    let out = kolmo(&["replay", s(&w.join("maps/F.knet1.manifest.json"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train-map"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[simulate]\nreynolds = 14.4\n").unwrap();
    let out = kolmo(&["run", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(&cfg, "stages = [\"simulate\", \"bogus\"]\n").unwrap();
    let out = kolmo(&["run", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    // nothing ran
    assert!(!dir.path().join("run").exists());

    assert_eq!(kolmo(&["simulate"]).status.code(), Some(2));
}

#[test]
fn missing_input_names_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = kolmo(&["reduce", "--in", s(&dir.path().join("none.kf")), "--out", s(&dir.path().join("a.kf"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage `reduce`"));
    assert!(!dir.path().join("a.kf").exists());
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "seed = 4\n[simulate]\nre = 10.0\nt_total = 20.0\nsave_every = 2.0\ndiscard = 0.0\n").unwrap();
    let out = dir.path().join("d.kf");
    ok(&["simulate", "--config", s(&cfg), "--re", "12", "--out", s(&out)]);
    let text = fs::read_to_string(dir.path().join("d.kf.manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(m["call"]["params"]["re"], 12.0);
    assert_eq!(m["call"]["params"]["t_total"], 20.0);
    assert_eq!(m["seed"], 4);
    assert_eq!(SnapshotSeries::read_from(&out).unwrap().len(), 11);
}

#[test]
fn default_config_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["config"]);
    let cfg = dir.path().join("d.toml");
    fs::write(&cfg, &out.stdout).unwrap();
    ok(&["run", "--config", s(&cfg), "--dry-run"]);
}

#[test]
fn repro_configs_are_valid() {
    let repro = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../repro");
    let mut n = 0;
    for e in fs::read_dir(&repro).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            let out = ok(&["run", "--config", s(&p), "--dry-run"]);
            assert!(!out.stdout.is_empty(), "{} has no stages", p.display());
            n += 1;
        }
    }
    assert!(n >= 9);
}
