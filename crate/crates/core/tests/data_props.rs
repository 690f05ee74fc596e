//! Properties of simulation, the difference pipeline and the estimators.

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use sysid_core::estimators::{self, compute_r, feasibility_report, naive_infer, proposed_infer, Method};
use sysid_core::linalg;
use sysid_core::pipeline::{self, all_tags, build_matrices, classify, full_family, IndexFamily};
use sysid_core::sim::{simulate, DistributionSpec, LinearSystem, NoiseModel, Trajectory};

fn random_family(seed: u64, k: usize, p: usize) -> IndexFamily {
    let mut r = rng(seed ^ 0x5eed);
    let tags: Vec<_> = all_tags(k, p).into_iter().filter(|&(m, q)| q == m + 1 || r.gen_bool(0.5)).collect();
    IndexFamily::from_tags(k, p, &tags).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn recorded_noise_explains_each_step(seed in any::<u64>(), n in 1usize..5, len in 2usize..20) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, 0.9);
        let noise = with_random_offset(uniform_noise(1.0, 0.5, 1.0), 0.3);
        let traj = simulate(&sys, &noise, len, seed, true).unwrap();
        let rec = traj.record().unwrap();
        let a = &sys.a_matrix;
        let offset = rec.offset.as_ref().unwrap();
        for t in 1..len {
            let lhs = traj.r(t + 1) - a * traj.r(t);
            let rhs = offset + &rec.process[t - 1] + &rec.observation[t] - a * &rec.observation[t - 1];
            prop_assert!((lhs - rhs).amax() < 1e-12 * (1.0 + traj.r(t + 1).amax()));
        }
    }

    #[test]
    fn same_seed_same_bits(seed in any::<u64>(), n in 1usize..4) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, 0.8);
        let noise = uniform_noise(1.0, 1.0, 1.0);
        let a = simulate(&sys, &noise, 12, seed, true).unwrap();
        let b = simulate(&sys, &noise, 12, seed, true).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn difference_is_antisymmetric(seed in any::<u64>(), m in 1usize..6, gap in 1usize..5) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, 3, 0.9);
        let traj = simulate(&sys, &uniform_noise(1.0, 1.0, 1.0), m + gap, seed, false).unwrap();
        let d = pipeline::difference(&traj, m, m + gap).unwrap();
        prop_assert_eq!(d.value, -(traj.r(m + gap) - traj.r(m)));
    }

    #[test]
    fn rebuild_is_bit_identical(seed in any::<u64>(), p in 2usize..8) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, 2, 0.9);
        let traj = simulate(&sys, &uniform_noise(1.0, 1.0, 1.0), p + 1, seed, false).unwrap();
        let fam = random_family(seed, 1, p);
        prop_assert_eq!(build_matrices(&traj, &fam).unwrap(), build_matrices(&traj, &fam).unwrap());
    }

    #[test]
    fn full_family_rank_lives_in_first_set(seed in any::<u64>(), n in 1usize..5, p in 2usize..9) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, 0.9);
        let traj = simulate(&sys, &uniform_noise(1.0, 1.0, 1.0), p + 1, seed, false).unwrap();
        let fam = full_family(1, p).unwrap();
        let base = pipeline::base_matrix(&traj, &fam).unwrap();
        let first = base.columns(0, fam.set(1).len()).into_owned();
        prop_assert_eq!(linalg::numeric_rank(&base), linalg::numeric_rank(&first));
    }

    #[test]
    fn data_matrix_identity(seed in any::<u64>(), n in 1usize..5, p in 2usize..9) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, 0.95);
        let noise = with_random_offset(uniform_noise(1.0, 1.0, 1.0), 0.5);
        let traj = simulate(&sys, &noise, p + 1, seed, true).unwrap();
        let fam = random_family(seed, 1, p);
        let mats = build_matrices(&traj, &fam).unwrap();
        let g = estimators::gram_pair(&mats);
        let rr = compute_r(&traj, &fam, &sys.a_matrix).unwrap();
        let gap = &sys.a_matrix * &g.p - (&g.q - rr);
        prop_assert!(max_abs(&gap) <= 1e-9 * (1.0 + linalg::spectral_norm(&g.q)));
    }

    #[test]
    fn full_family_matches_intercept_least_squares(seed in any::<u64>(), n in 1usize..5, extra in 1usize..8) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, 0.9);
        let p = n + extra;
        let traj = simulate(&sys, &uniform_noise(1.0, 1.0, 1.0), p + 1, seed, false).unwrap();
        let fam = full_family(1, p).unwrap();
        let rep = feasibility_report(&traj, &fam).unwrap();
        prop_assert!(rep.equivalent);
        prop_assume!(rep.rank_p == n);
        let ours = proposed_infer(&traj, &fam).unwrap();
        let ls = naive_infer(&traj, 1, p + 1).unwrap();
        let scale = 1.0 + linalg::spectral_norm(ours.a_matrix.as_ref().unwrap());
        prop_assert!(estimators::model_error(ours.a_matrix.as_ref().unwrap(), ls.a_matrix.as_ref().unwrap()) <= 1e-8 * scale);
        prop_assert!((ours.offset.unwrap() - ls.offset.unwrap()).norm() <= 1e-8 * scale);
    }

    #[test]
    fn constant_noise_recovers_matrix(seed in any::<u64>(), n in 1usize..5, fc in -2.0f64..2.0, wc in -2.0f64..2.0) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, 0.8);
        let noise = NoiseModel {
            process: DistributionSpec::constant(fc),
            observation: DistributionSpec::constant(wc),
            initial: DistributionSpec::uniform(-3.0, 3.0),
            offset: None,
        };
        let p = 2 * n + 2;
        let traj = simulate(&sys, &noise, p + 1, seed, false).unwrap();
        let fam = pipeline::chain_family(1, p).unwrap();
        let res = proposed_infer(&traj, &fam).unwrap();
        prop_assume!(res.feasible && res.cond < 1e8);
        prop_assert!(estimators::model_error(res.a_matrix.as_ref().unwrap(), &sys.a_matrix) <= 1e-8);
    }

    #[test]
    fn family_json_round_trip(seed in any::<u64>(), p in 2usize..12) {
        let fam = random_family(seed, 1, p);
        let text = serde_json::to_string(&fam).unwrap();
        let back: IndexFamily = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &fam);
        let spec: pipeline::FamilySpec = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(spec.resolve(1, p).unwrap(), fam);
    }

    #[test]
    fn csv_round_trip(seed in any::<u64>(), n in 1usize..4, len in 1usize..10, record in any::<bool>()) {
        let mut r = rng(seed);
        let sys = random_system(&mut r, n, 0.9);
        let traj = simulate(&sys, &uniform_noise(1.0, 1.0, 1.0), len, seed, record).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.observations(), traj.observations());
        prop_assert_eq!(back.record().is_some(), record);
    }
}

#[test]
fn distribution_moments_match_analytic() {
    let specs = [
        DistributionSpec::uniform(-1.0, 3.0),
        DistributionSpec::Gaussian { mean: 0.7, std: 2.0 },
        DistributionSpec::constant(1.5),
    ];
    let mut r = rng(99);
    for spec in specs {
        let draws: Vec<f64> = (0..100_000).map(|_| spec.sample(&mut r)).collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let fourth = draws.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        let se_mean = (var / n).sqrt();
        let se_var = ((fourth - var * var) / n).sqrt();
        assert!((mean - spec.mean()).abs() <= 4.0 * se_mean + 1e-15, "{spec:?} mean {mean}");
        assert!((var - spec.variance()).abs() <= 4.0 * se_var + 1e-15, "{spec:?} var {var}");
    }
}

#[test]
fn eight_dimensional_redundancy_split() {
    let mut r = rng(8);
    let sys = random_system(&mut r, 8, 0.9);
    let traj = simulate(&sys, &uniform_noise(1.0, 1.0, 1.0), 9, 8, false).unwrap();
    let split = classify(&traj, &all_tags(1, 8)).unwrap();
    assert_eq!(split.basis.len(), 7);
    assert_eq!(split.redundant.len(), 21);
    assert_eq!(split.basis, (2..=8).map(|q| (1, q)).collect::<Vec<_>>());
}

#[test]
fn rank_deficient_trajectories_are_flagged_by_both() {
    // Observations confined to a line: neither estimator is feasible in two dimensions.
    let dir = DVector::from_vec(vec![1.0, -2.0]);
    let obs: Vec<_> = (0..8).map(|t| &dir * (t as f64).sin()).collect();
    let traj = Trajectory::from_observations(obs).unwrap();
    let fam = full_family(1, 7).unwrap();
    let rep = feasibility_report(&traj, &fam).unwrap();
    assert!(rep.equivalent);
    assert!(rep.rank_p < 2 && rep.rank_xtx < 3);
    assert!(!proposed_infer(&traj, &fam).unwrap().feasible);
    assert!(!estimators::infer(Method::Naive, &traj, &fam).unwrap().feasible);
}

#[test]
fn constant_offset_system_is_exact_through_infer() {
    let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.7]);
    let sys = LinearSystem::new(a.clone(), DVector::from_vec(vec![0.3, -0.4])).unwrap();
    let noise = NoiseModel {
        process: DistributionSpec::constant(0.2),
        observation: DistributionSpec::constant(-1.0),
        initial: DistributionSpec::uniform(-5.0, 5.0),
        offset: None,
    };
    let traj = simulate(&sys, &noise, 8, 3, false).unwrap();
    let res = estimators::infer(Method::Proposed, &traj, &pipeline::chain_family(1, 7).unwrap()).unwrap();
    assert!(estimators::model_error(res.a_matrix.as_ref().unwrap(), &a) < 1e-8);
}
