//! Global versus expansion training of the same architecture on a small
//! piecewise-constant data set; writes both loss histories.

use rand::SeedableRng;
use sensorcoord::fem::{FeSpace, InnerProductMode};
use sensorcoord::reduction::{extract_labels, generate_snapshots, pod_complement, split_train_ghost, PodOptions, Scenario};
use sensorcoord::sensing::{place_uniform, MeasurementSpace, Orthonormalization};
use sensorcoord::training::{train, Dataset, Schedule, TrainConfig};
use std::fs::File;

fn main() -> sensorcoord::Result<()> {
    let space = FeSpace::with_subdivisions(32)?;
    let meas = MeasurementSpace::build(
        &space,
        &place_uniform(16)?,
        InnerProductMode::H1Seminorm,
        Orthonormalization::Cholesky,
    )?;
    let snaps = generate_snapshots(&Scenario::Pwc, 600, &space, &meas, 11)?;
    let basis = pod_complement(&snaps.z, &space, &meas, &PodOptions::default())?;
    let labels = extract_labels(&snaps, &basis);
    let (train_idx, _) = split_train_ghost(600, 100, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
    let data = Dataset::from_rows(&snaps.w, &labels, &train_idx)?;
    let out = std::env::temp_dir();
    for schedule in [Schedule::Global, Schedule::Expansion] {
        let cfg = TrainConfig {
            steps: 6000,
            blocks: 3,
            width: 20,
            schedule,
            ..TrainConfig::default()
        };
        let (net, history) = train(&data, &cfg)?;
        let path = out.join(format!("loss-{}.csv", schedule.label()));
        history.write_csv(File::create(&path)?)?;
        println!(
            "{:>3}: {} blocks, final loss {:.4e}, history in {}",
            schedule.label(),
            net.num_blocks(),
            history.last_loss().unwrap_or(f64::NAN),
            path.display()
        );
    }
    Ok(())
}
