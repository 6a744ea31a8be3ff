//! The generate -> train -> evaluate -> plot pipeline driven by a config
//! file, as the command line runs it.
//!
//! cargo run --release --example run_pipeline -- [config.toml] [out dir]

use sensorcoord::experiment::{cmd_evaluate, cmd_generate, cmd_plot, cmd_train, ExperimentConfig, Profile, LOSS_FILE};
use std::path::PathBuf;

const DEMO: &str = r#"
schema_version = 1
name = "demo-pwc-sen16"
seed = 7

[problem]
scenario = "pwc"
mesh_n = 32

[sensors]
layout = "uniform16"

[data]
n_hat = 800
n_ghost = 100

[train]
steps = 10000
schedule = "expansion"
blocks = 2
width = 20
"#;

fn main() -> sensorcoord::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let cfg = match args.get(1) {
        Some(p) => ExperimentConfig::load(p.as_ref())?,
        None => ExperimentConfig::from_toml_str(DEMO)?,
    };
    let out = args
        .get(2)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("sensorcoord-demo"));
    let profile = Profile::Paper;
    let cfg = cfg.resolve(profile)?;
    let snaps = cmd_generate(&cfg, profile, &out)?;
    println!("generated {} snapshots", snaps.len());
    let summary = cmd_train(&cfg, profile, &out)?;
    println!("trained: k = {}, final loss {:?}", summary.k, summary.final_loss);
    let report = cmd_evaluate(&cfg, profile, &out)?;
    println!("ghost ehat {:.4}, rel L2 {:.4}, rel H1 {:.4}", report.ehat, report.rel_l2, report.rel_h1);
    let svg = cmd_plot(&[out.join(LOSS_FILE)], &out)?;
    println!("artifacts in {}, chart {}", out.display(), svg.display());
    Ok(())
}
