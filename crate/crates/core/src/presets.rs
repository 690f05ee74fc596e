//! Named systems and noise models for the reference experiments.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{DistributionSpec, LinearSystem, NoiseModel};

/// `alpha * [[1,0,0,1],[0,1,0,1],[1,0,1,0],[1,0,1,1]]`.
pub fn reference_matrix(alpha: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0],
    ) * alpha
}

fn scale_for(name: &str) -> Option<f64> {
    match name {
        "noise-compare" => Some(0.5),
        "redundancy" => Some(1.0),
        "certify" | "certify-alt" => Some(0.44),
        _ => None,
    }
}

pub fn system(name: &str) -> Result<LinearSystem> {
    let alpha = scale_for(name).ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    LinearSystem::new(reference_matrix(alpha), DVector::zeros(4))
}

pub fn noise(name: &str) -> Result<NoiseModel> {
    let u = DistributionSpec::uniform;
    let (process, observation, initial) = match name {
        "noise-compare" => (u(-1.0, 1.0), u(0.0, 1.0), u(-1.0, 1.0)),
        "redundancy" => (u(-10.0, 10.0), u(0.0, 2.0), u(-1.0, 1.0)),
        "certify" => (u(-0.05, 0.05), u(0.0, 1.0), u(-0.05, 0.05)),
        "certify-alt" => (u(0.0, 1.0), u(-0.05, 0.05), u(-0.05, 0.05)),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(NoiseModel { process, observation, initial, offset: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Preset(String),
    Explicit(LinearSystem),
}

impl SystemSpec {
    pub fn resolve(&self) -> Result<LinearSystem> {
        match self {
            SystemSpec::Preset(n) => system(n),
            SystemSpec::Explicit(s) => Ok(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Preset(String),
    Explicit(NoiseModel),
}

impl NoiseSpec {
    pub fn resolve(&self) -> Result<NoiseModel> {
        let m = match self {
            NoiseSpec::Preset(n) => noise(n)?,
            NoiseSpec::Explicit(m) => m.clone(),
        };
        m.validate()?;
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_matrix_is_unstable_at_small_scale() {
        let a = reference_matrix(0.44);
        let rho = a.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((rho - 1.0228759).abs() < 1e-6, "{rho}");
        let s = crate::linalg::spectral_norm(&a);
        assert!((s - 1.0943004).abs() < 1e-6, "{s}");
    }

    #[test]
    fn unknown_names() {
        assert!(matches!(system("nope"), Err(Error::UnknownPreset(_))));
        assert!(matches!(noise("nope"), Err(Error::UnknownPreset(_))));
    }
}
