//! The stacked noise vector, its covariance, and the map sending it to the
//! stacked data differences.
//!
//! For a pair `(m, q)` the difference expands as
//!
//! ```text
//! r(m) - r(q) = (A^{m-1} - A^{q-1}) x(1) + (w(m) - w(q))
//!             + sum_{i=0}^{m-2} A^i (f(m-1-i) - f(q-1-i))
//!             - sum_{i=m-1}^{q-2} A^i (f(q-1-i) + a)
//! ```
//!
//! The noise vector stacks, over all pairs in family order, four segments:
//! copies of `x(1)`, observation-noise differences, process-noise differences
//! (`m - 1` blocks per pair) and process-noise-plus-offset terms (`q - m`
//! blocks per pair). Each block is `n`-dimensional, so the vector has
//! `n * sum (q + 1)` entries.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::pipeline::{IndexFamily, Tag};
use crate::sim::{NoiseVariances, Trajectory};

/// Independent random vectors the noise vector is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Primitive {
    Initial,
    Observation(usize),
    Process(usize),
    Offset,
}

impl Primitive {
    fn variance(self, v: &NoiseVariances) -> f64 {
        match self {
            Primitive::Initial => v.sigma_i2,
            Primitive::Observation(_) => v.sigma_o2,
            Primitive::Process(_) => v.sigma_p2,
            Primitive::Offset => v.sigma_a2,
        }
    }

    fn label(self) -> String {
        match self {
            Primitive::Initial => "x(1)".into(),
            Primitive::Observation(t) => format!("w({t})"),
            Primitive::Process(t) => format!("f({t})"),
            Primitive::Offset => "a".into(),
        }
    }

    /// Dense column index among all primitives up to time `horizon`.
    fn column(self, horizon: usize) -> usize {
        match self {
            Primitive::Initial => 0,
            Primitive::Offset => 1,
            Primitive::Observation(t) => 1 + t,
            Primitive::Process(t) => 1 + horizon + t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    InitialCopies,
    ObservationDiffs,
    ProcessDiffs,
    ProcessTail,
}

/// One `n`-dimensional block of the noise vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaEntry {
    pub segment: Segment,
    /// Index of the owning pair in family order.
    pub tag: usize,
    /// Power of `A` multiplying this block in the pair's expansion.
    pub power: usize,
    pub terms: Vec<(Primitive, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaLayout {
    pub n: usize,
    pub tags: Vec<Tag>,
    pub entries: Vec<EtaEntry>,
    /// Largest time index any primitive refers to.
    pub horizon: usize,
}

impl EtaLayout {
    /// Number of blocks.
    pub fn blocks(&self) -> usize {
        self.entries.len()
    }

    pub fn segment_range(&self, seg: Segment) -> std::ops::Range<usize> {
        let start = self.entries.iter().position(|e| e.segment == seg).unwrap_or(self.entries.len());
        let len = self.entries.iter().filter(|e| e.segment == seg).count();
        start..start + len
    }

    /// Human-readable listing of the layout, one block per line.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "noise vector: {} blocks of dimension {}", self.blocks(), self.n);
        for (i, e) in self.entries.iter().enumerate() {
            let (m, q) = self.tags[e.tag];
            let body: Vec<String> = e
                .terms
                .iter()
                .map(|(p, c)| format!("{}{}", if *c < 0.0 { "-" } else { "+" }, p.label()))
                .collect();
            let _ = writeln!(s, "{i:>5} {:?} pair ({m},{q}) A^{}: {}", e.segment, e.power, body.join(" "));
        }
        s
    }
}

pub fn eta_layout(family: &IndexFamily, n: usize) -> EtaLayout {
    let tags = family.tags();
    let mut entries = Vec::new();
    for (j, &(m, _)) in tags.iter().enumerate() {
        entries.push(EtaEntry {
            segment: Segment::InitialCopies,
            tag: j,
            power: m - 1,
            terms: vec![(Primitive::Initial, 1.0)],
        });
    }
    for (j, &(m, q)) in tags.iter().enumerate() {
        entries.push(EtaEntry {
            segment: Segment::ObservationDiffs,
            tag: j,
            power: 0,
            terms: vec![(Primitive::Observation(m), 1.0), (Primitive::Observation(q), -1.0)],
        });
    }
    for (j, &(m, q)) in tags.iter().enumerate() {
        for i in 0..m - 1 {
            entries.push(EtaEntry {
                segment: Segment::ProcessDiffs,
                tag: j,
                power: i,
                terms: vec![
                    (Primitive::Process(m - 1 - i), 1.0),
                    (Primitive::Process(q - 1 - i), -1.0),
                ],
            });
        }
    }
    for (j, &(m, q)) in tags.iter().enumerate() {
        for i in m - 1..q - 1 {
            entries.push(EtaEntry {
                segment: Segment::ProcessTail,
                tag: j,
                power: i,
                terms: vec![(Primitive::Process(q - 1 - i), 1.0), (Primitive::Offset, 1.0)],
            });
        }
    }
    EtaLayout { n, horizon: family.max_q(), tags, entries }
}

/// Realised noise vector of a recorded trajectory.
pub fn build_eta(traj: &Trajectory, family: &IndexFamily) -> Result<DVector<f64>> {
    let rec = traj.require_record()?;
    let offset = rec
        .offset
        .as_ref()
        .ok_or_else(|| Error::DiagnosticUnavailable("noise record has no offset".into()))?;
    let layout = eta_layout(family, traj.dim());
    if traj.len() < layout.horizon {
        return Err(Error::Horizon { required: layout.horizon, available: traj.len() });
    }
    let n = traj.dim();
    let mut eta = DVector::zeros(n * layout.blocks());
    for (b, e) in layout.entries.iter().enumerate() {
        let mut block = eta.rows_mut(b * n, n);
        for &(p, c) in &e.terms {
            let v = match p {
                Primitive::Initial => &rec.states[0],
                Primitive::Observation(t) => &rec.observation[t - 1],
                Primitive::Process(t) => &rec.process[t - 1],
                Primitive::Offset => offset,
            };
            block.axpy(c, v, 1.0);
        }
    }
    Ok(eta)
}

/// Covariance of the noise vector, stored as the block pattern `S` with `C = S (x) I_n`.
#[derive(Debug, Clone)]
pub struct CovAssembly {
    pub layout: EtaLayout,
    pub pattern: DMatrix<f64>,
}

impl CovAssembly {
    /// The full `n * blocks` square covariance.
    pub fn full(&self) -> DMatrix<f64> {
        self.pattern.kronecker(&DMatrix::identity(self.layout.n, self.layout.n))
    }

    /// Full covariance restricted to two segments.
    pub fn block(&self, row: Segment, col: Segment) -> DMatrix<f64> {
        let (r, c) = (self.layout.segment_range(row), self.layout.segment_range(col));
        let n = self.layout.n;
        self.pattern
            .view((r.start, c.start), (r.len(), c.len()))
            .into_owned()
            .kronecker(&DMatrix::identity(n, n))
    }

    pub fn c_xx(&self) -> DMatrix<f64> {
        self.block(Segment::InitialCopies, Segment::InitialCopies)
    }

    pub fn c_ww(&self) -> DMatrix<f64> {
        self.block(Segment::ObservationDiffs, Segment::ObservationDiffs)
    }

    pub fn c_ff_head(&self) -> DMatrix<f64> {
        self.block(Segment::ProcessDiffs, Segment::ProcessDiffs)
    }

    pub fn c_ff_tail(&self) -> DMatrix<f64> {
        self.block(Segment::ProcessTail, Segment::ProcessTail)
    }

    pub fn c_cross(&self) -> DMatrix<f64> {
        self.block(Segment::ProcessDiffs, Segment::ProcessTail)
    }

    pub fn norm(&self) -> f64 {
        linalg::lambda_max(&self.pattern).max(0.0)
    }
}

fn coefficient_matrix(layout: &EtaLayout, v: &NoiseVariances) -> DMatrix<f64> {
    let cols = 2 + 2 * layout.horizon;
    let mut l = DMatrix::zeros(layout.blocks(), cols);
    for (b, e) in layout.entries.iter().enumerate() {
        for &(p, c) in &e.terms {
            l[(b, p.column(layout.horizon))] += c * p.variance(v).sqrt();
        }
    }
    l
}

/// Assemble the covariance from the primitive expansion of every block.
///
/// Blocks sharing a primitive are correlated with the product of their
/// coefficients times that primitive's variance; all other pairs are zero.
pub fn build_cv(family: &IndexFamily, n: usize, v: &NoiseVariances) -> CovAssembly {
    let layout = eta_layout(family, n);
    let l = coefficient_matrix(&layout, v);
    let pattern = &l * l.transpose();
    CovAssembly { layout, pattern }
}

/// `||C||` without forming the block pattern: the nonzero spectrum of `L L^T`
/// equals that of the primitive-sized `L^T L`.
pub fn cv_norm(family: &IndexFamily, n: usize, v: &NoiseVariances) -> f64 {
    let layout = eta_layout(family, n);
    let cols = 2 + 2 * layout.horizon;
    // Each row of L touches at most two primitives, so L^T L is accumulated
    // row by row instead of materialising L (whose height grows like p^2).
    let mut gram = DMatrix::zeros(cols, cols);
    for e in &layout.entries {
        for &(pi, ci) in &e.terms {
            let wi = ci * pi.variance(v).sqrt();
            for &(pj, cj) in &e.terms {
                gram[(pi.column(layout.horizon), pj.column(layout.horizon))] += wi * cj * pj.variance(v).sqrt();
            }
        }
    }
    linalg::lambda_max(&gram).max(0.0)
}

/// Block-sparse linear map from the noise vector to stacked differences.
///
/// Row block `j` (pair `(m, q)`) holds `A^{m-1} - A^{q-1}` on its initial copy,
/// the identity on its observation difference, `A^i` on its process
/// differences and `-A^i` on its tail terms.
#[derive(Debug, Clone)]
pub struct NoiseMap {
    pub layout: EtaLayout,
    /// Per pair: `(block index, n x n coefficient)`.
    pub rows: Vec<Vec<(usize, DMatrix<f64>)>>,
}

pub fn build_pi(a: &DMatrix<f64>, family: &IndexFamily) -> NoiseMap {
    let n = a.nrows();
    let layout = eta_layout(family, n);
    let pw = linalg::powers(a, layout.horizon);
    let mut rows = vec![Vec::new(); layout.tags.len()];
    for (b, e) in layout.entries.iter().enumerate() {
        let (m, q) = layout.tags[e.tag];
        let coef = match e.segment {
            Segment::InitialCopies => &pw[m - 1] - &pw[q - 1],
            Segment::ObservationDiffs => DMatrix::identity(n, n),
            Segment::ProcessDiffs => pw[e.power].clone(),
            Segment::ProcessTail => -&pw[e.power],
        };
        rows[e.tag].push((b, coef));
    }
    NoiseMap { layout, rows }
}

impl NoiseMap {
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.layout.n;
        let mut out = DMatrix::zeros(n * self.rows.len(), n * self.layout.blocks());
        for (j, row) in self.rows.iter().enumerate() {
            for (b, c) in row {
                out.view_mut((j * n, b * n), (n, n)).copy_from(c);
            }
        }
        out
    }

    pub fn apply(&self, eta: &DVector<f64>) -> DVector<f64> {
        let n = self.layout.n;
        let mut out = DVector::zeros(n * self.rows.len());
        for (j, row) in self.rows.iter().enumerate() {
            for (b, c) in row {
                let y = c * eta.rows(b * n, n);
                let mut dst = out.rows_mut(j * n, n);
                dst += &y;
            }
        }
        out
    }

    /// `||Pi^T Upsilon||^2` for `Upsilon = diag(M, ..., M)`.
    ///
    /// Row blocks touch disjoint columns, so `Pi Pi^T` is block diagonal and
    /// the norm is the largest `lambda_max(M G_j M)` with `G_j` the Gram of row block `j`.
    pub fn upsilon_norm_sq(&self, m: &DMatrix<f64>) -> f64 {
        let n = self.layout.n;
        self.rows
            .iter()
            .map(|row| {
                let mut g = DMatrix::zeros(n, n);
                for (_, c) in row {
                    g += c * c.transpose();
                }
                linalg::lambda_max(&(m.transpose() * g * m))
            })
            .fold(0.0, f64::max)
    }
}

/// Block-diagonal stack of `copies` copies of `m`.
pub fn upsilon(m: &DMatrix<f64>, copies: usize) -> DMatrix<f64> {
    DMatrix::identity(copies, copies).kronecker(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{chain_family, IndexFamily};

    fn vars() -> NoiseVariances {
        NoiseVariances { sigma_p2: 0.4, sigma_o2: 0.1, sigma_i2: 0.7, sigma_a2: 0.05 }
    }

    #[test]
    fn layout_counts_match_block_count() {
        let fam = IndexFamily::new(1, 3, vec![vec![2, 3], vec![3]]).unwrap();
        let layout = eta_layout(&fam, 2);
        assert_eq!(layout.blocks(), crate::complexity::n_count(&fam));
        assert_eq!(layout.segment_range(Segment::ProcessDiffs), 6..7);
        assert_eq!(layout.segment_range(Segment::ProcessTail).len(), 4);
        assert!(layout.describe().contains("pair (2,3)"));
    }

    #[test]
    fn single_pair_observation_block() {
        let fam = chain_family(1, 2).unwrap();
        let cv = build_cv(&fam, 3, &vars());
        assert_eq!(cv.c_ww(), DMatrix::identity(3, 3) * (2.0 * 0.1));
        assert!((cv.c_xx() - DMatrix::identity(3, 3) * 0.7).amax() < 1e-12);
    }

    #[test]
    fn norm_shortcut_matches_pattern() {
        let fam = IndexFamily::new(1, 4, vec![vec![2, 4], vec![3, 4], vec![4]]).unwrap();
        let cv = build_cv(&fam, 2, &vars());
        let direct = linalg::spectral_norm(&cv.full());
        assert!((cv.norm() - direct).abs() < 1e-10 * direct);
        assert!((cv_norm(&fam, 2, &vars()) - direct).abs() < 1e-10 * direct);
    }

    #[test]
    fn block_norm_matches_dense() {
        let a = DMatrix::from_row_slice(2, 2, &[0.7, 0.3, -0.2, 0.9]);
        let fam = IndexFamily::new(1, 4, vec![vec![2, 3, 4], vec![4], vec![4]]).unwrap();
        let pi = build_pi(&a, &fam);
        let m = DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.8]);
        let ups = upsilon(&m, fam.len());
        let dense = linalg::spectral_norm(&(pi.dense().transpose() * ups)).powi(2);
        assert!((pi.upsilon_norm_sq(&m) - dense).abs() < 1e-9 * dense);
    }
}
