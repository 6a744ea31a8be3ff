//! Affine one-space (PBDW) recovery: inf-sup constant and max H1 error as the
//! reduced dimension grows, with 30 random sensors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sensorcoord::affine::{build_affine_space, check_error_bound, scan_pbdw};
use sensorcoord::fem::{FeFunction, FeSpace, InnerProductMode};
use sensorcoord::reduction::{generate_snapshots, Scenario};
use sensorcoord::sensing::{place_random, MeasurementSpace, Orthonormalization};

fn main() -> sensorcoord::Result<()> {
    let space = FeSpace::with_subdivisions(32)?;
    let sensors = place_random(30, &mut ChaCha8Rng::seed_from_u64(4))?;
    let meas = MeasurementSpace::build(&space, &sensors, InnerProductMode::H1Seminorm, Orthonormalization::Cholesky)?;
    let snaps = generate_snapshots(&Scenario::Pwc, 600, &space, &meas, 8)?;
    let (train, test) = snaps.solutions.split_at(500);
    let aff = build_affine_space(train, &space, &meas, 30)?;
    let w: Vec<Vec<f64>> = snaps.w[500..].to_vec();
    let test: Vec<FeFunction> = test.to_vec();
    println!("{:>3} {:>9} {:>10} {:>10}", "n", "mu", "max H1", "mean H1");
    for row in scan_pbdw(&aff, &meas, &space, &w, &test).iter().step_by(3) {
        println!("{:>3} {:>9.3} {:>10.3e} {:>10.3e}", row.n, row.mu, row.max_h1, row.mean_h1);
    }
    let report = check_error_bound(&aff.truncated(12), &meas, &space, &test)?;
    println!("error bound at n = 12: worst ratio {:.3}, holds: {}", report.worst_ratio, report.all_hold);
    Ok(())
}
