use nalgebra::DMatrix;
use proptest::prelude::*;

use panelid::distributions::{chi2_cdf, chi2_quantile, noncentral_chi2_cdf};
use panelid::inference::{invert_test, ThetaGrid};
use panelid::io::{parse_panel_csv, round_sig, write_panel_csv};
use panelid::model::{generate_panel, DgpConfig, PanelData};
use panelid::moments::{evaluate, moments_individual, MomentSet};
use panelid::montecarlo::replication_seed;
use panelid::robust::{ortho_complement, repr_matrices, robust_eval, robust_gmm_ar, robust_quad};
use panelid::stats::{gmm_ar_statistic, klm_statistic, transform_summary};

fn panel(t: usize, n: usize, theta0: f64, sigma_c_sq: f64, seed: u64) -> PanelData {
    generate_panel(&DgpConfig::dgp1(theta0, sigma_c_sq, 1.0, n, t), seed).unwrap()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

fn set_and_t() -> impl Strategy<Value = (MomentSet, usize)> {
    prop_oneof![
        Just((MomentSet::Dif, 3)),
        Just((MomentSet::Lev, 3)),
        Just((MomentSet::Sys, 3)),
        Just((MomentSet::Dif, 4)),
        Just((MomentSet::Sys, 4)),
        Just((MomentSet::As, 4)),
        Just((MomentSet::Nl, 4)),
        Just((MomentSet::As, 5)),
        Just((MomentSet::Sys, 5)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn statistics_invariant_to_invertible_maps(
        (set, t) in set_and_t(),
        seed in any::<u64>(),
        theta in -0.5f64..1.2,
        entries in proptest::collection::vec(-1.0f64..1.0, 25),
    ) {
        let p = panel(t, 300, 0.5, 0.5, seed);
        let s = evaluate(set, &p, theta).unwrap().summary().unwrap();
        let k = s.f_bar.len();
        let m = DMatrix::from_fn(k, k, |i, j| entries[(i * 5 + j) % 25] * 0.3 + if i == j { 2.0 } else { 0.0 });
        prop_assume!(m.clone().try_inverse().is_some());
        let moved = transform_summary(&s, &m);
        let (ar0, ar1) = (gmm_ar_statistic(&s).unwrap(), gmm_ar_statistic(&moved).unwrap());
        prop_assert!((ar0 - ar1).abs() <= 1e-7 * (1.0 + ar0.abs()), "{ar0} vs {ar1}");
        let (klm0, klm1) = (klm_statistic(&s).unwrap(), klm_statistic(&moved).unwrap());
        prop_assert!((klm0 - klm1).abs() <= 1e-7 * (1.0 + klm0.abs()), "{klm0} vs {klm1}");
    }

    #[test]
    fn klm_never_exceeds_gmm_ar(
        (set, t) in set_and_t(),
        seed in any::<u64>(),
        theta in -0.5f64..1.5,
        theta0 in 0.0f64..0.99,
    ) {
        let p = panel(t, 200, theta0, 1.0, seed);
        let s = evaluate(set, &p, theta).unwrap().summary().unwrap();
        let ar = gmm_ar_statistic(&s).unwrap();
        let klm = klm_statistic(&s).unwrap();
        prop_assert!(klm >= -1e-10);
        prop_assert!(klm <= ar * (1.0 + 1e-9) + 1e-10, "klm {klm} > ar {ar}");
    }

    #[test]
    fn complement_annihilates_moment_loadings(
        set in prop_oneof![Just(MomentSet::As), Just(MomentSet::Sys)],
        t in 4usize..=5,
        theta in -2.0f64..2.0,
        sigma in proptest::collection::vec(0.1f64..3.0, 4),
    ) {
        let c = ortho_complement(set, t, theta).unwrap();
        let r = repr_matrices(set, t, theta, &sigma[..t - 1]).unwrap();
        let prod = c.full().transpose() * &r.a_f;
        prop_assert!(max_abs(&prod) <= 1e-12 * (1.0 + max_abs(&r.a_f)), "{prod}");
    }

    #[test]
    fn robust_moments_are_quadratic_in_theta(
        set in prop_oneof![Just(MomentSet::As), Just(MomentSet::Sys)],
        t in 4usize..=5,
        seed in any::<u64>(),
        theta in -2.0f64..2.0,
    ) {
        let p = panel(t, 50, 0.8, 2.0, seed);
        let quad = robust_quad(set, t, &p).unwrap();
        let c = ortho_complement(set, t, theta).unwrap().full();
        let mut direct = nalgebra::DVector::zeros(c.ncols());
        for row in p.rows() {
            let (f, _) = moments_individual(set, row, theta).unwrap();
            direct += c.transpose() * nalgebra::DVector::from_vec(f);
        }
        direct /= p.n_individuals() as f64;
        let g = robust_eval(&quad, theta);
        let scale = 1.0 + direct.amax();
        prop_assert!((g - &direct).amax() <= 1e-10 * scale);
    }

    #[test]
    fn robust_ar_agrees_across_as_and_sys(t in 4usize..=5, seed in any::<u64>(), theta in 0.0f64..0.95) {
        let p = panel(t, 200, 0.9, 1.0, seed);
        let a = robust_gmm_ar(MomentSet::As, t, &p, theta, 0.05).unwrap().statistic;
        let s = robust_gmm_ar(MomentSet::Sys, t, &p, theta, 0.05).unwrap().statistic;
        prop_assert!((a - s).abs() <= 1e-8 * (1.0 + a.abs()), "{a} vs {s}");
    }

    #[test]
    fn chi2_quantile_inverts_cdf(prob in 0.001f64..0.999, dof in 1usize..12) {
        let q = chi2_quantile(prob, dof).unwrap();
        prop_assert!((chi2_cdf(q, dof) - prob).abs() < 1e-9);
    }

    #[test]
    fn noncentral_cdf_is_monotone_in_delta(x in 0.1f64..30.0, dof in 1usize..8, delta in 0.0f64..20.0) {
        let lo = noncentral_chi2_cdf(x, dof, delta).unwrap();
        let hi = noncentral_chi2_cdf(x, dof, delta + 1.0).unwrap();
        prop_assert!(hi <= lo + 1e-12);
        prop_assert!((0.0..=1.0).contains(&lo));
    }

    #[test]
    fn confidence_sets_are_sorted_disjoint_runs(
        stats in proptest::collection::vec(0.0f64..8.0, 41),
    ) {
        let grid = ThetaGrid::new(0.0, 1.0, 0.025).unwrap();
        let values = stats.clone();
        let cs = invert_test(|th| Ok((values[((th / 0.025).round() as usize).min(40)], 1)), &grid, 0.05).unwrap();
        let crit = chi2_quantile(0.95, 1).unwrap();
        for (i, &v) in stats.iter().enumerate() {
            prop_assert_eq!(cs.contains(grid.point(i)), v <= crit);
        }
        for w in cs.intervals.windows(2) {
            prop_assert!(w[0].1 < w[1].0);
        }
        for &(lo, hi) in &cs.intervals {
            prop_assert!(grid.lo <= lo && lo <= hi && hi <= grid.hi);
        }
        prop_assert_eq!(cs.intervals.is_empty(), cs.shape.as_str() == "empty");
    }

    #[test]
    fn panel_csv_round_trip(n in 1usize..20, t in 3usize..7, seed in any::<u64>()) {
        let values: Vec<f64> = (0..n * t)
            .map(|i| round_sig((replication_seed(seed, i as u64) as f64 / u64::MAX as f64 - 0.5) * 1e3))
            .collect();
        let p = PanelData::from_row_major(values, n, t).unwrap();
        let mut buf = Vec::new();
        write_panel_csv(&p, &mut buf).unwrap();
        prop_assert_eq!(parse_panel_csv(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn replication_seeds_do_not_collide(base in any::<u64>()) {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|r| replication_seed(base, r)).collect();
        prop_assert_eq!(seeds.len(), 1000);
    }
}
