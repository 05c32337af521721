use std::path::Path;
use std::process::{Command, Output};

fn ctrlsense(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctrlsense")).args(args).output().unwrap()
}

fn write_config(dir: &Path, variant: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        format!(
            "variant = \"{variant}\"\nseed = 5\nepisodes = 30\nsteps_per_episode = 20\neval_episodes = 40\n\
             rho = [0.0, 0.6, 1.0]\nupsilon = [0.8, 0.9, 0.99]\n"
        ),
    )
    .unwrap();
    path.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn sweep_produces_cartesian_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "central_marginal");
    let out_dir = dir.path().join("out");
    let o = ctrlsense(&["sweep", "--config", &cfg, "--output", out_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], ctrlsense_core::experiment::METRICS_HEADER);
    assert_eq!(lines.len(), 10);
    assert_eq!(stdout(&o), csv);
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 13);
    }
    let resolved = std::fs::read_to_string(out_dir.join("config.toml")).unwrap();
    assert!(resolved.contains("gamma"), "{resolved}");
    assert!(resolved.contains("k_max"), "{resolved}");
}

#[test]
fn repeated_sweep_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "decentralized");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = ctrlsense(&["sweep", "--config", &cfg, "--output", out.to_str().unwrap(), "--lambda", "1,5"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 2 + 6, "{names:?}");
    let strip = |p: &Path| -> Vec<String> {
        let text = std::fs::read_to_string(p.join("config.toml")).unwrap();
        text.lines().filter(|l| !l.starts_with("output")).map(String::from).collect()
    };
    assert_eq!(strip(&a), strip(&b));
    for name in names {
        if name == "config.toml" {
            continue;
        }
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "central_marginal");
    let out = dir.path().join("out");
    let o = ctrlsense(&[
        "sweep", "--config", &cfg, "--output", out.to_str().unwrap(), "--variant", "central_naive", "--rho", "0.5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().skip(1).all(|l| l.contains(",central_naive,") && l.contains(",0.5,")), "{csv}");
}

#[test]
fn missing_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = ctrlsense(&["sweep", "--output", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("variant"), "{}", stderr(&o));

    let o = ctrlsense(&["train", "--variant", "central_marginal"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("output"), "{}", stderr(&o));
}

#[test]
fn invalid_values_are_itemized() {
    let dir = tempfile::tempdir().unwrap();
    let o = ctrlsense(&[
        "sweep", "--variant", "central_marginal", "--output", dir.path().to_str().unwrap(), "--upsilon", "1.2",
        "--gamma", "2",
    ]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("upsilon") && err.contains("gamma"), "{err}");
}

#[test]
fn train_then_eval_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "central_naive");
    let out = dir.path().join("trained");
    let o = ctrlsense(&["train", "--config", &cfg, "--output", out.to_str().unwrap(), "--rho", "0.6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = out.join("checkpoint_rho0.6.ckpt");
    assert!(ckpt.exists());
    assert!(!out.join("metrics.csv").exists());

    let eval_out = dir.path().join("eval");
    let o = ctrlsense(&[
        "eval", "--config", &cfg, "--output", eval_out.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 10);

    let o = ctrlsense(&["inspect-checkpoint", ckpt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["episodes_trained"], 30);
    assert_eq!(v["format_version"], 1);

    let o = ctrlsense(&[
        "eval", "--config", &cfg, "--output", eval_out.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap(),
        "--n", "6",
    ]);
    assert!(!o.status.success());
}

#[test]
fn corrupt_checkpoint_fails_inspection() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.ckpt");
    std::fs::write(&path, b"not a checkpoint").unwrap();
    let o = ctrlsense(&["inspect-checkpoint", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error:"));
}
