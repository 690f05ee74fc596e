//! Fixtures shared by the benchmarks.

use nalgebra::DMatrix;
use sysid_core::complexity::{ComplexityConfig, SpectralBounds};
use sysid_core::pipeline::FamilySpec;
use sysid_core::{presets, simulate, LinearSystem, NoiseModel, Trajectory};

pub fn reference_system() -> (LinearSystem, NoiseModel) {
    (presets::system("noise-compare").unwrap(), presets::noise("noise-compare").unwrap())
}

/// A trajectory of `len` observations from the `0.5`-scaled reference system.
pub fn reference_trajectory(len: usize, seed: u64) -> Trajectory {
    let (sys, noise) = reference_system();
    simulate(&sys, &noise, len, seed, false).unwrap()
}

/// Bound configuration for the reference system over `1..=p`.
pub fn reference_config(p: usize) -> ComplexityConfig {
    let (sys, noise) = reference_system();
    let a: &DMatrix<f64> = &sys.a_matrix;
    let v = noise.variances();
    let mut cfg = ComplexityConfig {
        n: 4,
        k: 1,
        p,
        family: FamilySpec::Preset("chain".into()),
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
        sigma_p2: 0.0,
        sigma_o2: 0.0,
        sigma_i2: 0.0,
        sigma_a2: 0.0,
        bounds: SpectralBounds::exact(a, 1, p),
    };
    cfg.set_variances(&v);
    cfg
}
