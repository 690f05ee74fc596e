//! Least-squares estimators of `(A, a)`.
//!
//! * `proposed_infer` regresses shifted differences on base differences, so the
//!   offset and the observation-noise mean cancel before `A` is estimated.
//! * `naive_infer` is ordinary least squares with an intercept column.
//! * `raw_ols` regresses `r(m+1)` on `r(m)` with no intercept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::pipeline::{self, IndexFamily};
use crate::sim::{matrix_rows, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    Naive,
    RawOls,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Naive => "naive",
            Method::RawOls => "raw_ols",
        }
    }
}

/// `P = X X^T` and `Q = X' X^T` for base matrix `X` and shifted matrix `X'`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramPair {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

pub fn gram_pair(mats: &pipeline::DataMatrices) -> GramPair {
    let bt = mats.base.transpose();
    GramPair { p: &mats.base * &bt, q: &mats.shifted * &bt }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    pub method: Method,
    pub feasible: bool,
    pub a_matrix: Option<DMatrix<f64>>,
    pub offset: Option<DVector<f64>>,
    /// Numerical rank of the design that decides feasibility.
    pub rank: usize,
    /// Condition number of the normal matrix.
    pub cond: f64,
}

impl InferenceResult {
    fn infeasible(method: Method, rank: usize, cond: f64) -> Self {
        Self { method, feasible: false, a_matrix: None, offset: None, rank, cond }
    }
}

#[derive(Serialize)]
struct ResultRepr<'a> {
    method: &'a str,
    feasible: bool,
    #[serde(rename = "A")]
    a_matrix: Option<Vec<Vec<f64>>>,
    a: Option<Vec<f64>>,
    rank: usize,
    cond: Option<f64>,
}

impl Serialize for InferenceResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ResultRepr {
            method: self.method.name(),
            feasible: self.feasible,
            a_matrix: self.a_matrix.as_ref().map(matrix_rows),
            a: self.offset.as_ref().map(|v| v.iter().copied().collect()),
            rank: self.rank,
            cond: self.cond.is_finite().then_some(self.cond),
        }
        .serialize(s)
    }
}

/// Difference-based estimate `A = Q P^{-1}` with offset averaged over transitions `k..=p`.
///
/// Consumes observations `r(k), ..., r(p+1)`.
pub fn proposed_infer(traj: &Trajectory, family: &IndexFamily) -> Result<InferenceResult> {
    let (k, p) = (family.k(), family.p());
    if traj.len() < p + 1 {
        return Err(Error::Horizon { required: p + 1, available: traj.len() });
    }
    let n = traj.dim();
    let mats = pipeline::build_matrices(traj, family)?;
    let rank = difference_rank(traj, k, p, &mats.base);
    let g = gram_pair(&mats);
    let cond = linalg::condition_number(&g.p);
    if rank < n {
        return Ok(InferenceResult::infeasible(Method::Proposed, rank, cond));
    }
    let a_hat = linalg::right_solve_spd(&g.q, &g.p)
        .ok_or_else(|| Error::Domain("difference Gram matrix is singular".into()))?;
    let mut offset = DVector::zeros(n);
    for m in k..=p {
        offset += traj.r(m + 1) - &a_hat * traj.r(m);
    }
    offset /= (p - k + 1) as f64;
    Ok(InferenceResult {
        method: Method::Proposed,
        feasible: true,
        a_matrix: Some(a_hat),
        offset: Some(offset),
        rank,
        cond,
    })
}

/// Least squares with intercept over transitions `m = k..p-1`; consumes `r(k), ..., r(p)`.
pub fn naive_infer(traj: &Trajectory, k: usize, p: usize) -> Result<InferenceResult> {
    check_window(traj, k, p)?;
    let n = traj.dim();
    let rows = p - k;
    let x = DMatrix::from_fn(rows, n + 1, |i, j| if j < n { traj.r(k + i)[j] } else { 1.0 });
    let y = DMatrix::from_fn(rows, n, |i, j| traj.r(k + i + 1)[j]);
    let rank = linalg::numeric_rank(&x);
    let xtx = x.transpose() * &x;
    let cond = linalg::condition_number(&xtx);
    if rank < n + 1 {
        return Ok(InferenceResult::infeasible(Method::Naive, rank, cond));
    }
    let xty = x.transpose() * &y;
    let coef = match xtx.clone().cholesky() {
        Some(ch) => ch.solve(&xty),
        None => xtx.lu().solve(&xty).ok_or_else(|| Error::Domain("normal matrix is singular".into()))?,
    };
    let stacked = coef.transpose();
    Ok(InferenceResult {
        method: Method::Naive,
        feasible: true,
        a_matrix: Some(stacked.columns(0, n).into_owned()),
        offset: Some(stacked.column(n).into_owned()),
        rank,
        cond,
    })
}

/// `A = Y W^T (W W^T)^{-1}` over transitions `m = k..p-1`; the offset is taken as zero.
pub fn raw_ols(traj: &Trajectory, k: usize, p: usize) -> Result<InferenceResult> {
    check_window(traj, k, p)?;
    let n = traj.dim();
    let w = DMatrix::from_columns(&(k..p).map(|m| traj.r(m).clone()).collect::<Vec<_>>());
    let y = DMatrix::from_columns(&(k + 1..=p).map(|m| traj.r(m).clone()).collect::<Vec<_>>());
    let rank = linalg::numeric_rank(&w);
    let wwt = &w * w.transpose();
    let cond = linalg::condition_number(&wwt);
    if rank < n {
        return Ok(InferenceResult::infeasible(Method::RawOls, rank, cond));
    }
    let a_hat = linalg::right_solve_spd(&(&y * w.transpose()), &wwt)
        .ok_or_else(|| Error::Domain("regressor Gram matrix is singular".into()))?;
    Ok(InferenceResult {
        method: Method::RawOls,
        feasible: true,
        a_matrix: Some(a_hat),
        offset: Some(DVector::zeros(n)),
        rank,
        cond,
    })
}

fn check_window(traj: &Trajectory, k: usize, p: usize) -> Result<()> {
    if k == 0 || p <= k {
        return Err(Error::Config(format!("need 1 <= k < p, got k={k}, p={p}")));
    }
    if traj.len() < p {
        return Err(Error::Horizon { required: p, available: traj.len() });
    }
    Ok(())
}

/// Run `method` on the window `k..=p` of the family convention: the proposed
/// estimator uses `family`, the others use the same observations `r(k..=p+1)`.
pub fn infer(method: Method, traj: &Trajectory, family: &IndexFamily) -> Result<InferenceResult> {
    match method {
        Method::Proposed => proposed_infer(traj, family),
        Method::Naive => naive_infer(traj, family.k(), family.p() + 1),
        Method::RawOls => raw_ols(traj, family.k(), family.p() + 1),
    }
}

/// Residual correlation `R = sum h'(r^q_m)^T`, where `h'` is the shifted
/// difference of the lumped disturbance `h(t+1) = a + f(t) + w(t+1) - A w(t)`.
///
/// With exact noise it satisfies `A P = Q - R`.
pub fn compute_r(traj: &Trajectory, family: &IndexFamily, a_matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rec = traj.require_record()?;
    let offset = rec
        .offset
        .as_ref()
        .ok_or_else(|| Error::DiagnosticUnavailable("noise record has no offset".into()))?;
    let needed = family.max_q() + 1;
    if traj.len() < needed {
        return Err(Error::Horizon { required: needed, available: traj.len() });
    }
    let h = |t: usize| -> DVector<f64> {
        offset + &rec.process[t - 2] + &rec.observation[t - 1] - a_matrix * &rec.observation[t - 2]
    };
    let n = traj.dim();
    let mut r = DMatrix::zeros(n, n);
    for (m, q) in family.tags() {
        let hd = h(m + 1) - h(q + 1);
        let d = traj.r(m) - traj.r(q);
        r += hd * d.transpose();
    }
    Ok(r)
}

/// Ranks deciding feasibility of the proposed and naive estimators on the same observations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeasibilityReport {
    pub n: usize,
    pub rank_p: usize,
    pub rank_xtx: usize,
    /// Proposed feasible iff naive feasible.
    pub equivalent: bool,
    /// The first set holds every later time, the setting in which the two ranks must agree.
    pub full_first_set: bool,
}

/// Compare `rank(P)` for `family` with the rank of the intercept design over the
/// same observations `r(k..=p)`.
pub fn feasibility_report(traj: &Trajectory, family: &IndexFamily) -> Result<FeasibilityReport> {
    let (k, p) = (family.k(), family.p());
    let n = traj.dim();
    let base = pipeline::base_matrix(traj, family)?;
    if traj.len() < p {
        return Err(Error::Horizon { required: p, available: traj.len() });
    }
    let x = DMatrix::from_fn(p - k + 1, n + 1, |i, j| if j < n { traj.r(k + i)[j] } else { 1.0 });
    let rank_p = difference_rank(traj, k, p, &base);
    let rank_xtx = linalg::numeric_rank(&x);
    Ok(FeasibilityReport {
        n,
        rank_p,
        rank_xtx,
        equivalent: (rank_p == n) == (rank_xtx == n + 1),
        full_first_set: family.has_full_first_set(),
    })
}

/// Rank of a difference matrix, judged against the observations `r(k..=p+1)` it
/// was formed from rather than against its own (possibly tiny) norm.
pub fn difference_rank(traj: &Trajectory, k: usize, p: usize, base: &DMatrix<f64>) -> usize {
    let end = (p + 1).min(traj.len());
    let cols = end + 1 - k;
    let window = DMatrix::from_fn(traj.dim(), cols, |i, j| traj.r(k + j)[i]);
    linalg::numeric_rank_scaled(base, linalg::spectral_norm(&window), cols)
}

/// Spectral-norm error `||estimate - truth||_2`.
pub fn model_error(estimate: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    linalg::spectral_norm(&(estimate - truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{chain_family, full_family};
    use crate::sim::{simulate, DistributionSpec, LinearSystem, NoiseModel};
    use approx::assert_relative_eq;

    fn noisy() -> NoiseModel {
        NoiseModel {
            process: DistributionSpec::uniform(-1.0, 1.0),
            observation: DistributionSpec::uniform(0.0, 1.0),
            initial: DistributionSpec::uniform(-1.0, 1.0),
            offset: None,
        }
    }

    fn system() -> LinearSystem {
        LinearSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.6, 0.2, -0.3, 0.5]),
            DVector::from_vec(vec![1.0, -0.5]),
        )
        .unwrap()
    }

    #[test]
    fn infeasible_with_too_few_columns() {
        let traj = simulate(&system(), &noisy(), 4, 1, false).unwrap();
        let fam = chain_family(1, 2).unwrap();
        let res = proposed_infer(&traj, &fam).unwrap();
        assert!(!res.feasible);
        assert_eq!(res.rank, 1);
        assert!(res.a_matrix.is_none());
        let json = serde_json::to_value(&res).unwrap();
        assert!(json["A"].is_null());
    }

    #[test]
    fn proposed_and_naive_agree_on_full_family() {
        let traj = simulate(&system(), &noisy(), 12, 5, false).unwrap();
        let fam = full_family(1, 11).unwrap();
        let a = proposed_infer(&traj, &fam).unwrap();
        let b = naive_infer(&traj, 1, 12).unwrap();
        assert_relative_eq!(a.a_matrix.unwrap(), b.a_matrix.unwrap(), epsilon = 1e-9);
        assert_relative_eq!(a.offset.unwrap(), b.offset.unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn data_matrix_identity_holds() {
        let sys = system();
        let traj = simulate(&sys, &noisy(), 9, 11, true).unwrap();
        let fam = chain_family(1, 8).unwrap();
        let mats = pipeline::build_matrices(&traj, &fam).unwrap();
        let g = gram_pair(&mats);
        let r = compute_r(&traj, &fam, &sys.a_matrix).unwrap();
        assert_relative_eq!(&sys.a_matrix * &g.p, &g.q - &r, epsilon = 1e-10);
    }

    #[test]
    fn compute_r_requires_record() {
        let traj = simulate(&system(), &noisy(), 9, 11, false).unwrap();
        let fam = chain_family(1, 8).unwrap();
        assert!(matches!(
            compute_r(&traj, &fam, &system().a_matrix),
            Err(Error::DiagnosticUnavailable(_))
        ));
    }

    #[test]
    fn raw_ols_reports_zero_offset() {
        let traj = simulate(&system(), &noisy(), 30, 2, false).unwrap();
        let res = raw_ols(&traj, 1, 30).unwrap();
        assert!(res.feasible);
        assert_eq!(res.offset.unwrap(), DVector::zeros(2));
    }
}
