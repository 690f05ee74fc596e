//! Deterministic parallel Monte Carlo plumbing.
//!
//! Trials are split into fixed-size chunks; each chunk is reduced sequentially and
//! the chunk summaries are merged in index order, so results do not depend on the
//! number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;

const CHUNK: usize = 512;

/// Generator for trial `trial` under `master_seed`: one ChaCha stream per trial.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Running mean and sum of squared deviations of vector-valued samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Summary {
    pub fn new(dim: usize) -> Self {
        Self { count: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for ((mu, m2), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *mu;
            *mu += d / c;
            *m2 += d * (v - *mu);
        }
    }

    pub fn merge(&mut self, other: &Summary) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    /// Standard error of each mean entry; zero with fewer than two samples.
    pub fn stderr(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let c = self.count as f64;
        self.m2.iter().map(|m2| (m2 / (c - 1.0) / c).max(0.0).sqrt()).collect()
    }
}

/// Mean and standard error over `trials` samples produced by `sample(trial_index)`.
pub fn summarize<F>(trials: usize, dim: usize, sample: F) -> Result<Summary>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    let partials: Vec<Result<Summary>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = Summary::new(dim);
            for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                s.push(&sample(t)?);
            }
            Ok(s)
        })
        .collect();
    let mut total = Summary::new(dim);
    for p in partials {
        total.merge(&p?);
    }
    Ok(total)
}

/// Evaluate `f` on every trial index in parallel, returning results in index order.
pub fn map_trials<T, F>(trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..trials).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn summary_matches_two_pass_statistics() {
        let xs: Vec<f64> = (0..1500).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let s = summarize(xs.len(), 1, |t| Ok(vec![xs[t]])).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((s.mean[0] - mean).abs() < 1e-12);
        assert!((s.stderr()[0] - (var / xs.len() as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn trial_streams_are_distinct_and_reproducible() {
        let a: f64 = trial_rng(7, 0).gen();
        let b: f64 = trial_rng(7, 1).gen();
        let a2: f64 = trial_rng(7, 0).gen();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }
}
