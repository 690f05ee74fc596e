//! Index families and the difference-data matrices built from them.
//!
//! A family pairs each start time `m` in `k..p-1` with a set `T_m` of later
//! times `q` in `m+1..=p`. Each pair `(m, q)` (a *tag*) contributes the
//! difference `r(m) - r(q)` to the base matrix and its one-step shift
//! `r(m+1) - r(q+1)` to the shifted matrix.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::sim::Trajectory;

/// A difference pair `(m, q)` with `m < q`.
pub type Tag = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexFamily {
    k: usize,
    p: usize,
    sets: Vec<Vec<usize>>,
}

impl IndexFamily {
    /// `sets[i]` is `T_{k+i}`; there must be exactly `p - k` of them.
    pub fn new(k: usize, p: usize, sets: Vec<Vec<usize>>) -> Result<Self> {
        if k == 0 || p <= k {
            return Err(Error::Config(format!("need 1 <= k < p, got k={k}, p={p}")));
        }
        if sets.len() != p - k {
            return Err(Error::Config(format!("expected {} sets, got {}", p - k, sets.len())));
        }
        for (i, set) in sets.iter().enumerate() {
            let m = k + i;
            if set.iter().any(|&q| q <= m || q > p) {
                return Err(Error::Config(format!("T_{m} must lie in {}..={p}, got {set:?}", m + 1)));
            }
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("T_{m} must be strictly ascending, got {set:?}")));
            }
        }
        if sets.iter().all(Vec::is_empty) {
            return Err(Error::Config("index family is empty".into()));
        }
        Ok(Self { k, p, sets })
    }

    pub fn from_tags(k: usize, p: usize, tags: &[Tag]) -> Result<Self> {
        if k == 0 || p <= k {
            return Err(Error::Config(format!("need 1 <= k < p, got k={k}, p={p}")));
        }
        let mut sets = vec![Vec::new(); p - k];
        for &(m, q) in tags {
            if m < k || m >= p {
                return Err(Error::Config(format!("tag ({m},{q}) outside {k}..{p}")));
            }
            sets[m - k].push(q);
        }
        for s in &mut sets {
            s.sort_unstable();
            s.dedup();
        }
        Self::new(k, p, sets)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `T_m`, empty when `m` is outside `k..p`.
    pub fn set(&self, m: usize) -> &[usize] {
        if m < self.k || m >= self.p {
            return &[];
        }
        &self.sets[m - self.k]
    }

    /// Tags ordered by `m`, then `q`.
    pub fn tags(&self) -> Vec<Tag> {
        self.sets
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&q| (self.k + i, q)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_q(&self) -> usize {
        self.tags().iter().map(|t| t.1).max().unwrap_or(self.k)
    }

    /// Whether `T_k` holds every later time, i.e. the base differences span the full window.
    pub fn has_full_first_set(&self) -> bool {
        self.sets[0].len() == self.p - self.k
    }

    pub fn contains(&self, tag: Tag) -> bool {
        self.set(tag.0).binary_search(&tag.1).is_ok()
    }
}

/// Every pair `k <= m < q <= p`.
pub fn full_family(k: usize, p: usize) -> Result<IndexFamily> {
    if k == 0 || p <= k {
        return Err(Error::Config(format!("need 1 <= k < p, got k={k}, p={p}")));
    }
    IndexFamily::new(k, p, (k..p).map(|m| (m + 1..=p).collect()).collect())
}

/// Consecutive pairs `(m, m+1)` only.
pub fn chain_family(k: usize, p: usize) -> Result<IndexFamily> {
    if k == 0 || p <= k {
        return Err(Error::Config(format!("need 1 <= k < p, got k={k}, p={p}")));
    }
    IndexFamily::new(k, p, (k..p).map(|m| vec![m + 1]).collect())
}

/// All pairs anchored at `k`: `T_k = {k+1, ..., p}` and nothing else.
pub fn anchored_family(k: usize, p: usize) -> Result<IndexFamily> {
    if k == 0 || p <= k {
        return Err(Error::Config(format!("need 1 <= k < p, got k={k}, p={p}")));
    }
    let mut sets = vec![Vec::new(); p - k];
    sets[0] = (k + 1..=p).collect();
    IndexFamily::new(k, p, sets)
}

/// Pairs not anchored at `k`, ordered by `m` then `q`: `(k+1,k+2), (k+1,k+3), ..., (p-1,p)`.
pub fn unanchored_tags(k: usize, p: usize) -> Vec<Tag> {
    (k + 1..p).flat_map(|m| (m + 1..=p).map(move |q| (m, q))).collect()
}

/// All candidate pairs in `k..=p`.
pub fn all_tags(k: usize, p: usize) -> Vec<Tag> {
    (k..p).flat_map(|m| (m + 1..=p).map(move |q| (m, q))).collect()
}

#[derive(Serialize)]
struct FamilyRepr {
    k: usize,
    p: usize,
    sets: BTreeMap<usize, Vec<usize>>,
}

// Keys are read as strings: integer map keys do not survive the buffering
// that untagged enums such as `FamilySpec` go through.
#[derive(Deserialize)]
struct FamilyReprIn {
    k: usize,
    p: usize,
    sets: BTreeMap<String, Vec<usize>>,
}

impl Serialize for IndexFamily {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let sets = self
            .sets
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_empty())
            .map(|(i, v)| (self.k + i, v.clone()))
            .collect();
        FamilyRepr { k: self.k, p: self.p, sets }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for IndexFamily {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = FamilyReprIn::deserialize(d)?;
        let mut tags: Vec<Tag> = Vec::new();
        for (key, qs) in &repr.sets {
            let m: usize = key
                .trim()
                .parse()
                .map_err(|_| serde::de::Error::custom(format!("set key {key:?} is not an index")))?;
            tags.extend(qs.iter().map(|&q| (m, q)));
        }
        let fam = IndexFamily::from_tags(repr.k, repr.p, &tags).map_err(serde::de::Error::custom)?;
        if fam.len() != tags.len() {
            return Err(serde::de::Error::custom("duplicate entries in family sets"));
        }
        Ok(fam)
    }
}

/// A family given either by preset name (`"full"`, `"chain"`, `"anchored"`) or explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilySpec {
    Preset(String),
    Explicit(IndexFamily),
}

impl Default for FamilySpec {
    fn default() -> Self {
        FamilySpec::Preset("chain".into())
    }
}

impl FamilySpec {
    pub fn resolve(&self, k: usize, p: usize) -> Result<IndexFamily> {
        match self {
            FamilySpec::Preset(name) => match name.as_str() {
                "full" => full_family(k, p),
                "chain" => chain_family(k, p),
                "anchored" => anchored_family(k, p),
                other => Err(Error::UnknownPreset(other.to_string())),
            },
            FamilySpec::Explicit(f) => {
                if f.k() != k || f.p() != p {
                    return Err(Error::Config(format!(
                        "family spans {}..{} but {}..{} was requested",
                        f.k(),
                        f.p(),
                        k,
                        p
                    )));
                }
                Ok(f.clone())
            }
        }
    }
}

/// The difference `r(m) - r(q)` with its tag.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffObservation {
    pub m: usize,
    pub q: usize,
    pub value: DVector<f64>,
}

pub fn difference(traj: &Trajectory, m: usize, q: usize) -> Result<DiffObservation> {
    if m == 0 || q <= m {
        return Err(Error::Config(format!("need 1 <= m < q, got m={m}, q={q}")));
    }
    let value = traj.try_r(m)? - traj.try_r(q)?;
    Ok(DiffObservation { m, q, value })
}

/// Base and shifted difference matrices, one column per tag.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrices {
    pub base: DMatrix<f64>,
    pub shifted: DMatrix<f64>,
    pub tags: Vec<Tag>,
}

/// Base matrix only; needs observations up to the largest `q`.
pub fn base_matrix(traj: &Trajectory, family: &IndexFamily) -> Result<DMatrix<f64>> {
    if traj.len() < family.max_q() {
        return Err(Error::Horizon { required: family.max_q(), available: traj.len() });
    }
    let tags = family.tags();
    let cols: Vec<DVector<f64>> = tags.iter().map(|&(m, q)| traj.r(m) - traj.r(q)).collect();
    Ok(DMatrix::from_columns(&cols))
}

/// Base and shifted matrices; the shift needs one observation past the largest `q`.
pub fn build_matrices(traj: &Trajectory, family: &IndexFamily) -> Result<DataMatrices> {
    let needed = family.max_q() + 1;
    if traj.len() < needed {
        return Err(Error::Horizon { required: needed, available: traj.len() });
    }
    let tags = family.tags();
    let base: Vec<DVector<f64>> = tags.iter().map(|&(m, q)| traj.r(m) - traj.r(q)).collect();
    let shifted: Vec<DVector<f64>> = tags.iter().map(|&(m, q)| traj.r(m + 1) - traj.r(q + 1)).collect();
    Ok(DataMatrices {
        base: DMatrix::from_columns(&base),
        shifted: DMatrix::from_columns(&shifted),
        tags,
    })
}

/// Split of candidate tags into a linearly independent prefix-greedy basis and the rest.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Classification {
    pub basis: Vec<Tag>,
    pub redundant: Vec<Tag>,
}

/// Scan `tags` in order, keeping a tag as basis when it raises the numerical rank.
///
/// The basis never exceeds `p - k` vectors, where `k` and `p` are the smallest
/// `m` and largest `q` among the tags.
pub fn classify(traj: &Trajectory, tags: &[Tag]) -> Result<Classification> {
    let Some(k) = tags.iter().map(|t| t.0).min() else {
        return Ok(Classification::default());
    };
    let p = tags.iter().map(|t| t.1).max().unwrap_or(k);
    let cap = p - k;
    if traj.len() < p {
        return Err(Error::Horizon { required: p, available: traj.len() });
    }
    let window = DMatrix::from_fn(traj.dim(), cap + 1, |i, j| traj.r(k + j)[i]);
    let scale = linalg::spectral_norm(&window);
    let mut out = Classification::default();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for &(m, q) in tags {
        let d = difference(traj, m, q)?.value;
        if cols.len() < cap {
            cols.push(d);
            if linalg::numeric_rank_scaled(&DMatrix::from_columns(&cols), scale, cap + 1) == cols.len() {
                out.basis.push((m, q));
                continue;
            }
            cols.pop();
        }
        out.redundant.push((m, q));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_traj(vals: &[f64]) -> Trajectory {
        Trajectory::from_observations(vals.iter().map(|&v| DVector::from_element(1, v)).collect()).unwrap()
    }

    #[test]
    fn small_family_layout() {
        let fam = IndexFamily::new(1, 3, vec![vec![2, 3], vec![3]]).unwrap();
        let traj = scalar_traj(&[1.0, 2.0, 4.0, 8.0]);
        let mats = build_matrices(&traj, &fam).unwrap();
        assert_eq!(mats.tags, vec![(1, 2), (1, 3), (2, 3)]);
        assert_eq!(mats.base.as_slice(), &[-1.0, -3.0, -2.0]);
        assert_eq!(mats.shifted.as_slice(), &[-2.0, -6.0, -4.0]);
    }

    #[test]
    fn family_sizes() {
        assert_eq!(full_family(1, 8).unwrap().len(), 28);
        assert_eq!(chain_family(2, 9).unwrap().len(), 7);
        assert_eq!(anchored_family(1, 8).unwrap().len(), 7);
        assert_eq!(unanchored_tags(1, 8).len(), 21);
        assert_eq!(unanchored_tags(1, 8)[0], (2, 3));
        assert_eq!(unanchored_tags(1, 8)[20], (7, 8));
    }

    #[test]
    fn invalid_families_are_rejected() {
        assert!(IndexFamily::new(1, 3, vec![vec![1], vec![3]]).is_err());
        assert!(IndexFamily::new(1, 3, vec![vec![3, 2], vec![]]).is_err());
        assert!(IndexFamily::new(1, 3, vec![vec![], vec![]]).is_err());
        assert!(IndexFamily::new(2, 2, vec![]).is_err());
        assert!(full_family(0, 3).is_err());
    }

    #[test]
    fn short_trajectory_reports_horizon() {
        let fam = chain_family(1, 3).unwrap();
        let traj = scalar_traj(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            build_matrices(&traj, &fam),
            Err(Error::Horizon { required: 4, available: 3 })
        ));
        assert!(base_matrix(&traj, &fam).is_ok());
    }

    #[test]
    fn json_round_trip_and_presets() {
        let fam = IndexFamily::new(1, 3, vec![vec![2, 3], vec![3]]).unwrap();
        let s = serde_json::to_string(&fam).unwrap();
        assert_eq!(s, r#"{"k":1,"p":3,"sets":{"1":[2,3],"2":[3]}}"#);
        let spec: FamilySpec = serde_json::from_str(&s).unwrap();
        assert_eq!(spec.resolve(1, 3).unwrap(), fam);
        let chain: FamilySpec = serde_json::from_str(r#""chain""#).unwrap();
        assert_eq!(chain.resolve(1, 4).unwrap(), chain_family(1, 4).unwrap());
        let bad: FamilySpec = serde_json::from_str(r#""zigzag""#).unwrap();
        assert!(matches!(bad.resolve(1, 4), Err(Error::UnknownPreset(_))));
        assert!(serde_json::from_str::<IndexFamily>(r#"{"k":1,"p":3,"sets":{"1":[1]}}"#).is_err());
    }

    #[test]
    fn classify_constant_and_scalar() {
        let flat = scalar_traj(&[2.0; 6]);
        let c = classify(&flat, &all_tags(1, 5)).unwrap();
        assert!(c.basis.is_empty());
        assert_eq!(c.redundant.len(), 10);

        let vary = scalar_traj(&[0.0, 1.0, 3.0, 7.0, 15.0]);
        let c = classify(&vary, &all_tags(1, 5)).unwrap();
        assert_eq!(c.basis, vec![(1, 2)]);
        assert_eq!(c.redundant.len(), 9);
    }
}
