//! End to end: train a lifting map, then reconstruct an unseen state from
//! its 16 raw sensor readings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sensorcoord::estimation::{evaluate, Estimator};
use sensorcoord::fem::{FeFunction, FeSpace, InnerProductMode};
use sensorcoord::reduction::{extract_labels, generate_snapshots, pod_complement, split_train_ghost, PodOptions, Scenario};
use sensorcoord::sensing::{place_uniform, MeasurementSpace, Orthonormalization};
use sensorcoord::training::{train, Dataset, TrainConfig};

fn main() -> sensorcoord::Result<()> {
    let space = FeSpace::with_subdivisions(32)?;
    let mode = InnerProductMode::H1Seminorm;
    let meas = MeasurementSpace::build(&space, &place_uniform(16)?, mode, Orthonormalization::Cholesky)?;
    let snaps = generate_snapshots(&Scenario::Pwc, 1000, &space, &meas, 21)?;
    let basis = pod_complement(&snaps.z, &space, &meas, &PodOptions::default())?;
    let labels = extract_labels(&snaps, &basis);
    let (train_idx, ghost) = split_train_ghost(1000, 100, &mut ChaCha8Rng::seed_from_u64(1))?;
    let data = Dataset::from_rows(&snaps.w, &labels, &train_idx)?;
    let cfg = TrainConfig {
        steps: 20_000,
        ..TrainConfig::default()
    };
    let (net, _) = train(&data, &cfg)?;
    let est = Estimator::new(&space, &meas, &basis, &net)?;

    let s = ghost[0];
    let readings = meas.observe(&snaps.solutions[s].coeffs);
    let u_hat = est.predict_state(&readings)?;
    let mut err = u_hat.clone();
    err.axpy(-1.0, &snaps.solutions[s]);
    println!(
        "sample {s}: relative H1 error {:.3}",
        space.norm(&err.coeffs, mode) / space.norm(&snaps.solutions[s].coeffs, mode)
    );

    let w: Vec<Vec<f64>> = ghost.iter().map(|&i| snaps.w[i].clone()).collect();
    let c: Vec<Vec<f64>> = ghost.iter().map(|&i| labels[i].clone()).collect();
    let u: Vec<FeFunction> = ghost.iter().map(|&i| snaps.solutions[i].clone()).collect();
    let r = evaluate(&est, &w, &c, &u)?;
    println!(
        "ghost set: ehat {:.4}, rel L2 {:.4}, rel H1 {:.4}, max H1 {:.3e}",
        r.ehat, r.rel_l2, r.rel_h1, r.max_h1
    );
    Ok(())
}
