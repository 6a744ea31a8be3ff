//! POD dimension of the complement space for a snapshot set.
//!
//! cargo run --release --example pod_dimension -- [pwc|log-normal] [N_hat] [sensors] [mesh n]

use sensorcoord::fem::{FeSpace, InnerProductMode};
use sensorcoord::reduction::{generate_snapshots, pod_complement, PodOptions, Scenario};
use sensorcoord::sensing::{place_uniform, MeasurementSpace, Orthonormalization};
use std::time::Instant;

fn main() -> sensorcoord::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let scenario = args.get(1).map(String::as_str).unwrap_or("pwc");
    let n_hat: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let m: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(16);
    let mesh: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(64);
    let (scenario, mode) = match scenario {
        "pwc" => (Scenario::Pwc, InnerProductMode::H1Seminorm),
        _ => (Scenario::LogNormal(Default::default()), InnerProductMode::L2),
    };
    let space = FeSpace::with_subdivisions(mesh)?;
    let meas = MeasurementSpace::build(&space, &place_uniform(m)?, mode, Orthonormalization::Cholesky)?;
    let t = Instant::now();
    let snaps = generate_snapshots(&scenario, n_hat, &space, &meas, 2024)?;
    println!("{n_hat} snapshots in {:.1?}", t.elapsed());
    let t = Instant::now();
    let basis = pod_complement(&snaps.z, &space, &meas, &PodOptions::default())?;
    println!(
        "k = {} (energy kept {:.5}) in {:.1?}",
        basis.k(),
        basis.energy_kept(),
        t.elapsed()
    );
    Ok(())
}
