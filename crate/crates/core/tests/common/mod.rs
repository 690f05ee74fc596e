#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sysid_core::complexity::{ComplexityConfig, SpectralBounds};
use sysid_core::pipeline::FamilySpec;
use sysid_core::sim::{DistributionSpec, LinearSystem, NoiseModel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `(-1, 1)`, rescaled to the given spectral norm.
pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, norm: f64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let s = m.singular_values().max();
    m * (norm / s)
}

pub fn random_system(rng: &mut ChaCha8Rng, n: usize, norm: f64) -> LinearSystem {
    let a = random_matrix(rng, n, norm);
    let offset = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    LinearSystem::new(a, offset).unwrap()
}

/// Zero-mean process and initial noise, observation noise with a nonzero mean.
pub fn uniform_noise(process: f64, observation: f64, initial: f64) -> NoiseModel {
    NoiseModel {
        process: DistributionSpec::uniform(-process, process),
        observation: DistributionSpec::uniform(0.0, 2.0 * observation),
        initial: DistributionSpec::uniform(-initial, initial),
        offset: None,
    }
}

pub fn with_random_offset(mut noise: NoiseModel, half_width: f64) -> NoiseModel {
    noise.offset = Some(DistributionSpec::uniform(-half_width, half_width));
    noise
}

/// A configuration with bounds computed exactly from `a`.
pub fn exact_config(a: &DMatrix<f64>, noise: &NoiseModel, k: usize, p: usize) -> ComplexityConfig {
    let v = noise.variances();
    ComplexityConfig {
        n: a.nrows(),
        k,
        p,
        family: FamilySpec::default(),
        rho1: 0.5,
        rho2: 0.5,
        rho3: 0.5,
        eps: 0.1,
        phi: 1.0,
        delta: 0.1,
        gamma: 0.0833,
        kappa: 2.2 * std::f64::consts::SQRT_2,
        c_universal: 9.5,
        mu: noise.mu(),
        sigma_p2: v.sigma_p2,
        sigma_o2: v.sigma_o2,
        sigma_i2: v.sigma_i2,
        sigma_a2: v.sigma_a2,
        bounds: SpectralBounds::exact(a, k, p),
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}
