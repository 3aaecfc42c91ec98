//! Fixtures shared by the kernel benchmarks.

use avsdn_core::model::{InitMode, ModelDims, ModelInput, ModelParams};
use avsdn_core::Vector;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub fn model(dims: ModelDims, seed: u64) -> ModelParams<f32> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    ModelParams::init(dims, InitMode::Fusion, 1.0, &mut rng)
}

pub fn input(dims: ModelDims, segments: usize, seed: u64) -> ModelInput<f32> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut seq = |d: usize| -> Vec<Vector<f32>> {
        (0..segments)
            .map(|_| Vector::from_vec((0..d).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect()
    };
    let audio = seq(dims.audio);
    let visual = seq(dims.visual);
    ModelInput { audio, visual }
}
