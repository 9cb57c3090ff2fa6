use std::path::Path;
use std::process::{Command, Output};

use fedshift::graph::{generate_synthetic, write_tu_dataset, Dataset, SyntheticSpec};

const SMALL: &[&str] = &[
    "--set", "model=gcn",
    "--set", "synthetic_graphs_per_class=40",
    "--set", "clients=4",
    "--set", "malicious=1",
    "--set", "rounds=2",
    "--set", "pretrain_epochs=60",
    "--set", "epochs=2",
    "--set", "stage2_epochs=3",
    "--set", "repetitions=1",
];

fn fedshift(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedshift"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn ingest_prints_summary_and_writes_cache() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_synthetic(&SyntheticSpec { graphs_per_class: 5, ..SyntheticSpec::default() }).unwrap();
    write_tu_dataset(&ds, dir.path().join("tu")).unwrap();
    let cache = dir.path().join("cache.json");
    let o = fedshift(&["ingest", dir.path().join("tu").to_str().unwrap()], &cache);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("graphs=10"), "{}", stdout(&o));
    let back = Dataset::from_json(&std::fs::read_to_string(&cache).unwrap()).unwrap();
    assert_eq!(back.len(), 10);
}

#[test]
fn train_writes_rounds_checkpoint_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train"];
    args.extend_from_slice(SMALL);
    let o = fedshift(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("oa="));
    let rounds = std::fs::read_to_string(dir.path().join("rounds.csv")).unwrap();
    assert_eq!(rounds.lines().count(), 3);
    assert!(!std::fs::read_to_string(dir.path().join("model.ckpt")).unwrap().is_empty());
    let manifest = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(manifest.starts_with("# fedshift train run manifest"));
}

#[test]
fn attack_reruns_from_manifest_identically() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let mut args = vec!["attack"];
    args.extend_from_slice(SMALL);
    let o = fedshift(&args, first.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for label in ["fedshift", "baseline", "clean"] {
        assert!(text.lines().any(|l| l.starts_with(label)), "{text}");
    }
    let manifest = first.path().join("manifest.toml");
    let o = fedshift(&["attack", "--config", manifest.to_str().unwrap()], second.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["results_fedshift.csv", "results_baseline.csv", "results_clean.csv", "rounds_fedshift.csv", "manifest.toml"] {
        let a = std::fs::read(first.path().join(name)).unwrap();
        let b = std::fs::read(second.path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn bad_overrides_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    for (args, needle) in [
        (vec!["attack", "--set", "bogus=1"], "unknown key"),
        (vec!["attack", "--set", "p"], "not key=value"),
        (vec!["attack", "--set", "p=1.5"], "p = 1.5"),
        (vec!["train", "--set", "malicious=10"], "malicious = 10"),
    ] {
        let o = fedshift(&args, dir.path());
        assert!(!o.status.success());
        let err = stderr(&o);
        assert!(err.starts_with("error: ") && err.contains(needle), "{args:?}: {err}");
    }
}

#[test]
fn missing_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = fedshift(&["ingest", dir.path().join("absent").to_str().unwrap()], &dir.path().join("x.json"));
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: "));
    let o = fedshift(&["train", "--config", dir.path().join("none.toml").to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("none.toml"));
}
