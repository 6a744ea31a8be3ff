//! The command line end to end on a coarse mesh, and its exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
schema_version = 1
name = "small"
seed = 9

[problem]
scenario = "pwc"
mesh_n = 16

[sensors]
layout = "uniform16"

[data]
n_hat = 150
n_ghost = 30

[train]
steps = 1500
schedule = "expansion"
blocks = 2
width = 10
record_every = 50
"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sensorcoord")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn run(cmd: &str, config: &str, out: &Path) -> Output {
    cli(&[cmd, "--config", config, "--out", out.to_str().unwrap(), "--profile", "paper"])
}

#[test]
fn generate_train_evaluate_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("run");
    for cmd in ["generate", "train", "evaluate"] {
        let o = run(cmd, &cfg, &out);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let errors = fs::read_to_string(out.join("errors.csv")).unwrap();
    let mut lines = errors.lines();
    assert_eq!(lines.next(), Some("B,W,trainables,scheme,ehat,rel_l2,rel_h1"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..4], ["2", "10", &sensorcoord::resnet::count_params(16, row_k(&out), &[10, 10]).to_string(), "Exp"]);
    let ehat: f64 = row[4].parse().unwrap();
    assert!(ehat > 0.0 && ehat < 1.0, "ehat {ehat}");
    for name in ["manifest-generate.json", "manifest-train.json", "manifest-evaluate.json"] {
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(name)).unwrap()).unwrap();
        assert_eq!(m["seed"], 9);
    }

    let o = cli(&["plot", out.join("loss.csv").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let svg = fs::read_to_string(out.join("loss.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

/// Output dimension of the trained model.
fn row_k(out: &Path) -> usize {
    let net = sensorcoord::resnet::deserialize(fs::File::open(out.join("model.bin")).unwrap()).unwrap();
    net.output_dim()
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let a = dir.path().join("a");
    let o = run("generate", &cfg, &a);
    assert_eq!(code(&o), 0);
    let b = dir.path().join("b");
    let o = cli(&["generate", "--config", &cfg, "--out", b.to_str().unwrap(), "--profile", "paper", "--seed", "10"]);
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(a.join("snapshots.bin")).unwrap(), fs::read(b.join("snapshots.bin")).unwrap());
    // the cache was made with seed 10, the config says 9
    assert_eq!(code(&run("train", &cfg, &b)), 3);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let bad_scenario = write_config(dir.path(), "s.toml", &SMALL.replace("\"pwc\"", "\"advection\""));
    assert_eq!(code(&run("generate", &bad_scenario, &out)), 2);
    let unknown_key = write_config(dir.path(), "k.toml", &SMALL.replace("width = 10", "width = 10\ndepth = 3"));
    assert_eq!(code(&run("generate", &unknown_key, &out)), 2);
    let too_many_ghosts = write_config(dir.path(), "g.toml", &SMALL.replace("n_ghost = 30", "n_ghost = 150"));
    assert_eq!(code(&run("generate", &too_many_ghosts, &out)), 2);
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&run("generate", missing.to_str().unwrap(), &out)), 2);

    let good = write_config(dir.path(), "ok.toml", SMALL);
    let o = cli(&["generate", "--config", &good, "--profile", "laptop"]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&cli(&["frobnicate"])), 2);
    assert!(!out.exists());
}

#[test]
fn stale_artifacts_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("run");
    // nothing generated yet
    assert_eq!(code(&run("train", &cfg, &out)), 3);
    assert_eq!(code(&run("generate", &cfg, &out)), 0);
    let more = write_config(dir.path(), "more.toml", &SMALL.replace("n_hat = 150", "n_hat = 160"));
    assert_eq!(code(&run("train", &more, &out)), 3);
    let moved = write_config(
        dir.path(),
        "moved.toml",
        &(SMALL.replace("layout = \"uniform16\"", "layout = \"random\"\ncount = 16\nseed = 1") + "\n[compare]\nsensor_counts = [16]\n"),
    );
    assert_eq!(code(&run("train", &moved, &out)), 3);
    // a model for the configured sensors does not evaluate on other sensors
    assert_eq!(code(&run("train", &cfg, &out)), 0);
    let o = run("evaluate", &moved, &out);
    assert_eq!(code(&o), 3);
}

#[test]
fn malformed_data_exits_with_4_and_missing_files_with_1() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(&csv, "alpha,beta\n1,2\n").unwrap();
    let o = cli(&["plot", csv.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "step,loss,block_index,wall_ms\n").unwrap();
    assert_eq!(code(&cli(&["plot", empty.to_str().unwrap()])), 4);

    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("run");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("snapshots.bin"), b"PDES1 truncated").unwrap();
    assert_eq!(code(&run("train", &cfg, &out)), 4);

    let gone = dir.path().join("gone.csv");
    assert_eq!(code(&cli(&["plot", gone.to_str().unwrap()])), 1);
}
