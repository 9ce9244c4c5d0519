use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "[synth]
users = 60
items = 200
latent_dim = 4
embed_dim = 12
events_per_user = 25
[model]
target_dim = 8
epochs = 3
elsa_epochs = 2
[eval]
seeds = 0,1
shuffled_seeds = 7
";

fn parbench(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parbench"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn smoke_path_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.conf"), SMALL).unwrap();
    let d = dir.path();
    ok(parbench(d, &["synth", "--config", "c.conf"]));
    ok(parbench(d, &["split", "--config", "c.conf"]));
    let table = ok(parbench(d, &["evaluate", "--config", "c.conf", "--model", "knn", "--k", "10"]));
    assert!(table.contains("hot hitrate@10"));
    let report = std::fs::read_to_string(d.join("out/report.tsv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 3 * 2);
    assert!(report.contains("knn\tsynth/shuffled\thot\tndcg\t10\t"));

    ok(parbench(d, &["train", "--config", "c.conf", "--model", "hybrid,shallow"]));
    ok(parbench(d, &["recommend", "--config", "c.conf", "--model", "hybrid", "--scenario", "cold"]));
    let recs = std::fs::read_to_string(d.join("out/recs/hybrid.synth.cold.tsv")).unwrap();
    assert!(recs.starts_with("user\trank\titem\tscore\n"));
    assert!(recs.lines().count() > 1);
    assert!(d.join("out/checkpoints/shallow.synth.seed0.history.tsv").exists());
}

#[test]
fn cold_elsa_is_a_capability_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.conf"), SMALL).unwrap();
    let d = dir.path();
    ok(parbench(d, &["synth", "--config", "c.conf"]));
    ok(parbench(d, &["split", "--config", "c.conf"]));
    for (model, variant) in [("elsa", "content"), ("bimodal", "collaborative"), ("bimodal", "average")] {
        let out = parbench(d, &["evaluate", "--config", "c.conf", "--scenario", "cold", "--model", model, "--variant", variant]);
        assert!(!out.status.success());
        assert!(stderr(&out).contains("capability"), "{}", stderr(&out));
    }
    assert!(!d.join("out/eval").exists());
}

#[test]
fn missing_upstream_artifacts_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = parbench(d, &["split"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("out/interactions.tsv"), "{}", stderr(&out));

    std::fs::write(d.join("c.conf"), SMALL).unwrap();
    ok(parbench(d, &["synth", "--config", "c.conf"]));
    let out = parbench(d, &["evaluate", "--config", "c.conf"]);
    assert!(stderr(&out).contains("manifest.txt"), "{}", stderr(&out));
    ok(parbench(d, &["split", "--config", "c.conf"]));
    let out = parbench(d, &["recommend", "--config", "c.conf", "--model", "shallow"]);
    assert!(stderr(&out).contains("shallow.synth.seed0.ckpt"), "{}", stderr(&out));
    let out = parbench(d, &["report", "--config", "c.conf"]);
    assert!(stderr(&out).contains("eval"), "{}", stderr(&out));
}

#[test]
fn config_errors_name_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.conf"), "[eval]\nk = 5\nwidth = 3\n").unwrap();
    let out = parbench(dir.path(), &["synth", "--config", "bad.conf"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("line 3") && err.contains("eval.width"), "{err}");
}
