//! Shared fixtures for the criterion benchmarks.

use lowpass_core::blocks::{Network, NetworkSpec};
use lowpass_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn seeded_image(n: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    Tensor::randn(&[n, n], &mut rng)
}

pub fn seeded_batch(b: usize, c: usize, n: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    Tensor::randn(&[b, c, n, n], &mut rng)
}

pub fn toy_network() -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut net = Network::new(NetworkSpec::toy(1, Some(0.9)), 1.0, &mut rng).unwrap();
    net.normalize(50).unwrap();
    net
}
