//! Log-normal coefficient fields: Matérn samples by circulant embedding and
//! their empirical covariance against the analytic kernel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sensorcoord::coeff::{matern_cov, CirculantSampler, MaternSpec};
use sensorcoord::fem::TriMesh;

fn main() -> sensorcoord::Result<()> {
    let n = 32;
    let mesh = TriMesh::new(n)?;
    let spec = MaternSpec::default();
    let sampler = CirculantSampler::new(&spec, &mesh)?;
    println!("embedding padding factor {}", sampler.padding());
    let node = |i: usize, j: usize| i + j * (n + 1);
    let pairs = [((16, 16), (16, 16)), ((16, 16), (20, 16)), ((8, 8), (12, 12)), ((4, 28), (28, 4))];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 2000;
    let mut acc = vec![0.0; pairs.len()];
    for _ in 0..draws / 2 {
        let (a, b) = sampler.sample_pair(&mut rng);
        for z in [&a, &b] {
            for (k, &((i, j), (p, q))) in pairs.iter().enumerate() {
                acc[k] += z.values[node(i, j)] * z.values[node(p, q)];
            }
        }
    }
    for (k, &((i, j), (p, q))) in pairs.iter().enumerate() {
        let x = mesh.nodes()[node(i, j)];
        let xp = mesh.nodes()[node(p, q)];
        println!(
            "C({:?}, {:?}): empirical {:+.4}  exact {:+.4}",
            x,
            xp,
            acc[k] / draws as f64,
            matern_cov(&spec, x, xp)
        );
    }
    Ok(())
}
