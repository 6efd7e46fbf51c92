use num_complex::Complex64;
use proptest::prelude::*;

use popescu::chain::{e_map, expectation, LocalObservable};
use popescu::classify::{classify_chain, classify_od, ChainVerdict};
use popescu::cli::{parse_system_text, SystemFile};
use popescu::cpmap::{fixed_points, invariant_state, mixed_fixed_points, sigma_matrix, DensityState};
use popescu::dilation::{self, moment_checks, moments, MomentSource};
use popescu::modular::{gns, verify_duality};
use popescu::numerics::{fro, identity, CMatrix};
use popescu::{random_system, PopescuSystem, Tolerances, Word};

fn system() -> impl Strategy<Value = PopescuSystem> {
    (2usize..=3, 1usize..=4, any::<u64>()).prop_map(|(d, n, seed)| random_system(d, n, seed))
}

fn small_system() -> impl Strategy<Value = PopescuSystem> {
    (1usize..=3, any::<u64>()).prop_map(|(n, seed)| random_system(2, n, seed))
}

fn word(d: usize, max_len: usize) -> impl Strategy<Value = Word> {
    prop::collection::vec(0..d, 0..=max_len).prop_map(Word::new)
}

fn matrix(n: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n)
        .prop_map(move |v| CMatrix::from_iterator(n, n, v.into_iter().map(|(a, b)| Complex64::new(a, b))))
}

fn state(sys: &PopescuSystem) -> DensityState {
    invariant_state(sys, 1e-9).unwrap().state
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_systems_satisfy_the_relation(sys in system()) {
        prop_assert!(sys.validate() <= 1e-12);
    }

    #[test]
    fn word_products_are_multiplicative(
        (sys, i, j) in system().prop_flat_map(|s| {
            let d = s.d();
            (Just(s), word(d, 4), word(d, 4))
        })
    ) {
        let lhs = sys.v_word(&i.concat(&j)).unwrap();
        let rhs = sys.v_word(&i).unwrap() * sys.v_word(&j).unwrap();
        prop_assert!(fro(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn transfer_map_of_identity_is_sigma(sys in system()) {
        let e = e_map(&sys, &identity(sys.d())).unwrap();
        prop_assert!(fro(&(e - sigma_matrix(&sys).matrix)) < 1e-13);
    }

    #[test]
    fn identity_observable_has_unit_expectation(sys in system(), len in 1usize..4) {
        let phi = state(&sys);
        let obs = LocalObservable::new(1, vec![identity(sys.d()); len]).unwrap();
        let v = expectation(&sys, &phi, &obs, 1e-8).unwrap();
        prop_assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn padding_with_identities_and_shifting_change_nothing(
        (sys, a, b) in system().prop_flat_map(|s| {
            let d = s.d();
            (Just(s), matrix(d), matrix(d))
        }),
        start in -5i64..5,
    ) {
        let phi = state(&sys);
        let id = identity(sys.d());
        let base = LocalObservable::new(0, vec![a.clone(), b.clone()]).unwrap();
        let shifted = LocalObservable::new(start, vec![a.clone(), b.clone()]).unwrap();
        let padded = LocalObservable::new(start, vec![id.clone(), a, b, id]).unwrap();
        let w = expectation(&sys, &phi, &base, 1e-8).unwrap();
        prop_assert!((expectation(&sys, &phi, &shifted, 1e-8).unwrap() - w).norm() < 1e-10);
        prop_assert!((expectation(&sys, &phi, &padded, 1e-8).unwrap() - w).norm() < 1e-10);
    }

    #[test]
    fn expectation_is_positive_on_squares(
        (sys, a, b) in system().prop_flat_map(|s| {
            let d = s.d();
            (Just(s), matrix(d), matrix(d))
        })
    ) {
        let phi = state(&sys);
        let obs = LocalObservable::new(1, vec![a.adjoint() * &a, b.adjoint() * &b]).unwrap();
        let v = expectation(&sys, &phi, &obs, 1e-8).unwrap();
        prop_assert!(v.im.abs() < 1e-10);
        prop_assert!(v.re > -1e-10);
    }

    #[test]
    fn matrix_unit_products_are_state_moments(
        (sys, pairs) in system().prop_flat_map(|s| {
            let d = s.d();
            (Just(s), prop::collection::vec((0..d, 0..d), 1..=3))
        })
    ) {
        let phi = state(&sys);
        let d = sys.d();
        let factors = pairs.iter().map(|&(i, j)| LocalObservable::matrix_unit(d, i, j).factors[0].clone()).collect();
        let obs = LocalObservable::new(1, factors).unwrap();
        let i = Word::new(pairs.iter().map(|p| p.0).collect());
        let j = Word::new(pairs.iter().map(|p| p.1).collect());
        let table = moments(&sys, MomentSource::State(&phi), 3).unwrap();
        let v = expectation(&sys, &phi, &obs, 1e-8).unwrap();
        prop_assert!((v - table.get(&i, &j)).norm() < 1e-12);
    }

    #[test]
    fn state_moments_obey_the_recursion(sys in system()) {
        let phi = state(&sys);
        let checks = moment_checks(&moments(&sys, MomentSource::State(&phi), 3).unwrap()).unwrap();
        prop_assert!(checks.recursion_residual < 1e-10);
        prop_assert!(checks.psd_min_eig > -1e-10);
    }

    #[test]
    fn dilation_dimension_grows_with_level(sys in small_system()) {
        let mut last = 0;
        for level in 1..=4 {
            let dil = dilation::build(&sys, level, dilation::DEFAULT_GRAM_TOL).unwrap();
            prop_assert!(dil.quotient_dim() >= last);
            prop_assert!(dil.quotient_dim() >= sys.n());
            let r = dilation::cuntz_residuals(&dil);
            prop_assert!(r.isometry_residual < 1e-8 && r.completeness_residual < 1e-8);
            prop_assert!(dilation::compression_residual(&dil, &sys) < 1e-9);
            last = dil.quotient_dim();
        }
    }

    #[test]
    fn modular_conjugation_fixes_the_cyclic_vector(sys in system(), x in matrix(4)) {
        let phi = state(&sys);
        prop_assume!(phi.faithful);
        let md = gns(&sys, &phi, 1e-9).unwrap();
        let v = md.phi_vector();
        prop_assert!((md.apply_j(&v) - &v).norm() < 1e-10);
        prop_assert!((&md.delta_half * &v - &v).norm() < 1e-8);
        let n = sys.n();
        let w = CMatrix::from_fn(n, n, |a, b| x[(a % 4, b % 4)]);
        let wv = popescu::numerics::vec_of(&w);
        prop_assert!((md.apply_j(&md.apply_j(&wv)) - &wv).norm() < 1e-12);
        let prod = &md.delta_half * &md.delta_minus_half;
        prop_assert!(fro(&(prod - identity(n * n))) < 1e-8);
    }

    #[test]
    fn intertwiners_of_a_system_with_itself_are_its_fixed_points(sys in system()) {
        let f = fixed_points(&sys, 1e-9).unwrap().dim();
        let m = mixed_fixed_points(&sys, &sys, 1e-9).unwrap().dim();
        prop_assert_eq!(f, m);
    }

    #[test]
    fn duality_residuals_are_small(sys in system()) {
        let phi = state(&sys);
        prop_assume!(phi.faithful);
        let r = verify_duality(&sys, &phi, 1e-9).unwrap();
        prop_assert!(r.max_residual() < 1e-8, "{:?}", r);
    }

    #[test]
    fn trivial_gauge_group_matches_chain_purity(sys in small_system()) {
        let tol = Tolerances::default();
        let od = classify_od(&sys, &tol).unwrap();
        let ch = classify_chain(&sys, &tol).unwrap();
        if od.ergodic {
            match ch.verdict {
                ChainVerdict::Pure => prop_assert_eq!(od.k(), Some(1)),
                ChainVerdict::NotPure => prop_assert!(od.k().unwrap() > 1),
                ChainVerdict::HypothesesNotMet(_) => {}
            }
        }
    }

    #[test]
    fn system_files_round_trip(sys in system(), seed in any::<u64>()) {
        let file = SystemFile::from_system(&sys, Some(seed));
        let text = serde_json::to_vec(&file).unwrap();
        let back = parse_system_text(&text, "round trip").unwrap().to_system(1e-9).unwrap();
        prop_assert_eq!(back.ops(), sys.ops());
    }
}
