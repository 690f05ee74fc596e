//! Closed-form second moments of observation differences.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::pipeline::IndexFamily;
use crate::sim::NoiseVariances;

/// `E[(r(k) - r(m)) (r(k) - r(m))^T]` for `1 <= k < m`.
///
/// Built as `Phi - Omega - Theta`: `Phi` collects the diagonal contributions,
/// `Omega` the overlap between process noise entering both times through
/// different powers of `A`, and `Theta` the overlap inside the common prefix.
/// The offset is a single draw shared by every step, so its contribution is
/// `S S^T sigma_a2` with `S = sum_{i=k-1}^{m-2} A^i`.
pub fn expected_diff_moment(a: &DMatrix<f64>, v: &NoiseVariances, k: usize, m: usize) -> Result<DMatrix<f64>> {
    if k == 0 || m <= k {
        return Err(Error::Config(format!("need 1 <= k < m, got k={k}, m={m}")));
    }
    let n = a.nrows();
    let pw = linalg::powers(a, m);
    let outer = |x: &DMatrix<f64>, y: &DMatrix<f64>| x * y.transpose();
    let (ki, mi) = (k as isize, m as isize);

    let head = &pw[k - 1] - &pw[m - 1];
    let mut phi = outer(&head, &head) * v.sigma_i2 + DMatrix::identity(n, n) * (2.0 * v.sigma_o2);
    let mut tail_sum = DMatrix::zeros(n, n);
    for i in k - 1..=m - 2 {
        phi += outer(&pw[i], &pw[i]) * v.sigma_p2;
        tail_sum += &pw[i];
    }
    phi += outer(&tail_sum, &tail_sum) * v.sigma_a2;
    for i in 0..k.saturating_sub(1) {
        phi += outer(&pw[i], &pw[i]) * (2.0 * v.sigma_p2);
    }

    let mut omega = DMatrix::zeros(n, n);
    if 2 * ki - mi >= 1 {
        for i in k - 1..=m - 2 {
            let j = i + k - m;
            omega += outer(&pw[j], &pw[i]) + outer(&pw[i], &pw[j]);
        }
    } else {
        for i in 0..k.saturating_sub(1) {
            let j = i + m - k;
            omega += outer(&pw[i], &pw[j]) + outer(&pw[j], &pw[i]);
        }
    }
    omega *= v.sigma_p2;

    let mut theta = DMatrix::zeros(n, n);
    if 2 * ki - mi >= 2 {
        for i in 0..=(2 * k - m - 2) {
            let j = i + m - k;
            theta += outer(&pw[i], &pw[j]) + outer(&pw[j], &pw[i]);
        }
    }
    theta *= v.sigma_p2;

    Ok(phi - omega - theta)
}

/// `Gamma`, its inverse square root `M`, and the structural count of the family.
#[derive(Debug, Clone)]
pub struct MomentSet {
    pub gamma: DMatrix<f64>,
    pub m_inv_sqrt: DMatrix<f64>,
    /// `||M||`, equal to the norm of the block-diagonal stack of copies of `M`.
    pub upsilon_norm: f64,
    pub lambda_min_gamma: f64,
    pub n_count: usize,
}

/// Sum of expected difference moments over the family and its whitening matrix.
pub fn gamma_and_m(a: &DMatrix<f64>, v: &NoiseVariances, family: &IndexFamily) -> Result<MomentSet> {
    let n = a.nrows();
    let mut gamma = DMatrix::zeros(n, n);
    for (m, q) in family.tags() {
        gamma += expected_diff_moment(a, v, m, q)?;
    }
    let gamma = linalg::symmetrize(&gamma);
    let m_inv_sqrt = linalg::inv_sqrt_spd(&gamma)?;
    Ok(MomentSet {
        upsilon_norm: linalg::spectral_norm(&m_inv_sqrt),
        lambda_min_gamma: linalg::lambda_min(&gamma),
        m_inv_sqrt,
        gamma,
        n_count: n_count(family),
    })
}

/// Number of `n`-dimensional blocks in the stacked noise vector: each pair `(m, q)` contributes `q + 1`.
pub fn n_count(family: &IndexFamily) -> usize {
    family.tags().iter().map(|&(_, q)| q + 1).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{chain_family, IndexFamily};
    use approx::assert_relative_eq;

    fn vars() -> NoiseVariances {
        NoiseVariances { sigma_p2: 0.3, sigma_o2: 0.2, sigma_i2: 0.5, sigma_a2: 0.0 }
    }

    #[test]
    fn zero_dynamics_scalar() {
        let a = DMatrix::from_element(1, 1, 0.0);
        let e = expected_diff_moment(&a, &vars(), 1, 2).unwrap();
        // r(1) - r(2) = x(1) + w(1) - f(1) - w(2) for A = 0.
        assert_relative_eq!(e[(0, 0)], 0.5 + 2.0 * 0.2 + 0.3, epsilon = 1e-15);
    }

    #[test]
    fn identity_dynamics_has_no_initial_term() {
        let a = DMatrix::identity(2, 2);
        let v = NoiseVariances { sigma_p2: 0.0, sigma_o2: 0.25, sigma_i2: 9.0, sigma_a2: 0.0 };
        let e = expected_diff_moment(&a, &v, 2, 5).unwrap();
        assert_relative_eq!(e, DMatrix::identity(2, 2) * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn counts_blocks() {
        let fam = IndexFamily::new(1, 3, vec![vec![2, 3], vec![3]]).unwrap();
        assert_eq!(n_count(&fam), 3 + 4 + 4);
        assert_eq!(n_count(&chain_family(1, 4).unwrap()), 3 + 4 + 5);
    }

    #[test]
    fn rejects_bad_pair() {
        let a = DMatrix::identity(1, 1);
        assert!(expected_diff_moment(&a, &vars(), 3, 3).is_err());
        assert!(expected_diff_moment(&a, &vars(), 0, 3).is_err());
    }

    #[test]
    fn gamma_rejects_degenerate_noise() {
        let a = DMatrix::identity(2, 2);
        let v = NoiseVariances { sigma_p2: 0.0, sigma_o2: 0.0, sigma_i2: 0.0, sigma_a2: 0.0 };
        let fam = chain_family(1, 3).unwrap();
        assert!(matches!(gamma_and_m(&a, &v, &fam), Err(Error::DegenerateMoment(_))));
    }
}
