#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tvhsd::dataio::{gen_synthetic, Dataset, SyntheticSpec};
use tvhsd::detector::DetectorConfig;
use tvhsd::harness::TrainConfig;
use tvhsd::ndgrad::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn normal_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::new(vec![rows, cols], normal_vec(rng, rows * cols)).unwrap()
}

pub fn tiny_detector(text_dim: usize, image_dim: usize, k: usize) -> DetectorConfig {
    DetectorConfig {
        text_dim,
        image_dim,
        align_dim: 8,
        state_size: 4,
        se_reduction: 2,
        num_classes: k,
        seed: 0,
    }
}

pub fn synthetic(n: usize, k: usize, separation: f64, seed: u64) -> Dataset {
    gen_synthetic(&SyntheticSpec {
        num_samples: n,
        text_dim: 6,
        image_dim: 5,
        num_classes: k,
        separation,
        length_noise: 0.0,
        seed,
    })
    .unwrap()
}

pub fn quick_config(k: usize, epochs: usize) -> TrainConfig {
    let mut c = TrainConfig::new(tiny_detector(6, 5, k));
    c.epochs = epochs;
    c.batch_size = 16;
    c.lr = 1e-2;
    c
}
