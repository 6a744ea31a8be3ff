//! ResNet lifting maps: parameter counts of the studied architectures, and a
//! forward pass through a freshly grown network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sensorcoord::resnet::{count_params, BlockInit, ResNetParams};

fn main() -> sensorcoord::Result<()> {
    for (m, k, w) in [(16, 28, 200), (16, 28, 20), (16, 21, 20), (49, 22, 20)] {
        let counts: Vec<usize> = [1, 2, 3, 6].iter().map(|&b| count_params(m, k, &vec![w; b])).collect();
        println!("m={m:2} k={k} W={w:3}: B1,B2,B3,B6 -> {counts:?}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = ResNetParams::init_gaussian(16, 28, &[20], 0.1, &mut rng)?;
    let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.3).sin()).collect();
    let before = net.forward(&x)?;
    net.append_block(20, BlockInit::ZeroLast, 0.1, &mut rng)?;
    let after = net.forward(&x)?;
    let same = before.iter().zip(&after).all(|(a, b)| a == b);
    println!("appending a zero-last block keeps the output: {same}");
    println!("{} blocks, {} parameters", net.num_blocks(), net.count_params());
    Ok(())
}
