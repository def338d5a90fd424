use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use proptest::prelude::*;

use lgi_core::optics::{
    apply_absorber, apply_beamsplitter, apply_blocker, detection_probabilities, effective_theta,
    propagate, Element, ElementChain, Path, TwoPathState,
};
use lgi_core::protocol::{
    correlators_analytic, correlators_protocol, k_reduced, protocol_probabilities,
    violation_boundary, AbsorberSpec, ProtocolConfig,
};

fn path() -> impl Strategy<Value = Path> {
    prop_oneof![Just(Path::Plus), Just(Path::Minus)]
}

fn element() -> impl Strategy<Value = Element> {
    prop_oneof![
        (0.0..=PI).prop_map(|theta| Element::Beamsplitter { theta }),
        (-10.0..10.0f64).prop_map(|chi| Element::PhaseShifter { chi }),
        (0.0..=1.0f64, path()).prop_map(|(transmission, path)| Element::Absorber { transmission, path }),
        path().prop_map(|path| Element::Blocker { path }),
        (0.0..=1.0f64).prop_map(|visibility| Element::Dephaser { visibility }),
    ]
}

/// Pure state `cos(a)|+⟩ + e^{iφ} sin(a)|−⟩`, optionally mixed toward the
/// identity.
fn state() -> impl Strategy<Value = TwoPathState> {
    (0.0..=FRAC_PI_2, -PI..PI, 0.0..=1.0f64).prop_map(|(a, phi, purity)| {
        let pure = TwoPathState::pure(
            Complex64::new(a.cos(), 0.0),
            Complex64::from_polar(a.sin(), phi),
        );
        let m = pure.matrix();
        let half = Complex64::new(0.5 * (1.0 - purity), 0.0);
        let mixed = [
            [m[0][0] * purity + half, m[0][1] * purity],
            [m[1][0] * purity, m[1][1] * purity + half],
        ];
        TwoPathState::from_matrix(mixed).unwrap()
    })
}

fn protocol() -> impl Strategy<Value = ProtocolConfig> {
    (
        0.0..=PI,
        0.0..=PI,
        -PI..=PI,
        proptest::option::of((0.0..=1.0f64, path())),
        0.0..=1.0f64,
    )
        .prop_map(|(a, b, chi, absorber, visibility)| ProtocolConfig {
            absorber: absorber.map(|(transmission, path)| AbsorberSpec { transmission, path }),
            visibility,
            ..ProtocolConfig::ideal(a, b, chi)
        })
}

fn matrices_close(a: &TwoPathState, b: &TwoPathState, tol: f64) -> bool {
    (0..2).all(|i| (0..2).all(|j| (a.matrix()[i][j] - b.matrix()[i][j]).norm() <= tol))
}

proptest! {
    #[test]
    fn trace_never_increases(start in state(), elements in prop::collection::vec(element(), 1..12)) {
        let mut s = start;
        for e in &elements {
            let next = e.apply(&s).unwrap();
            prop_assert!(next.trace() <= s.trace() + 1e-12);
            s = next;
        }
        let chain = ElementChain::new(elements).unwrap();
        prop_assert!(matrices_close(&propagate(&start, &chain).unwrap(), &s, 1e-15));
    }

    #[test]
    fn elements_keep_states_physical(start in state(), elements in prop::collection::vec(element(), 1..12)) {
        let mut s = start;
        for e in &elements {
            s = e.apply(&s).unwrap();
            prop_assert!(s.is_hermitian(1e-12));
            let [lo, _] = s.eigenvalues();
            prop_assert!(lo >= -1e-12, "eigenvalue {lo}");
        }
    }

    #[test]
    fn beamsplitter_is_unitary(start in state(), theta in 0.0..=PI) {
        let out = apply_beamsplitter(&start, theta).unwrap();
        prop_assert!((out.trace() - start.trace()).abs() <= 1e-14);
        let [a0, a1] = start.eigenvalues();
        let [b0, b1] = out.eigenvalues();
        prop_assert!((a0 - b0).abs() <= 1e-12 && (a1 - b1).abs() <= 1e-12);
    }

    #[test]
    fn opaque_absorber_is_a_blocker(start in state(), p in path()) {
        let absorbed = apply_absorber(&start, 0.0, p).unwrap();
        prop_assert!(matrices_close(&absorbed, &apply_blocker(&start, p), 0.0));
    }

    #[test]
    fn blocked_detection_ignores_phase(config in protocol(), chi in -PI..=PI, p in path()) {
        let a = propagate(&TwoPathState::plus(), &config.chain(Some(p)).unwrap()).unwrap();
        let b = propagate(&TwoPathState::plus(), &config.with_chi(chi).chain(Some(p)).unwrap()).unwrap();
        let (a_plus, a_minus) = detection_probabilities(&a);
        let (b_plus, b_minus) = detection_probabilities(&b);
        prop_assert!((a_plus - b_plus).abs() < 1e-12 && (a_minus - b_minus).abs() < 1e-12);
    }

    #[test]
    fn blocked_runs_sum_to_dephased_marginals(config in protocol()) {
        let table = protocol_probabilities(&config).unwrap();
        let dephased = protocol_probabilities(&ProtocolConfig { visibility: 0.0, ..config }).unwrap();
        for q3 in Path::BOTH {
            let sum = table.blocked(Path::Plus, q3) + table.blocked(Path::Minus, q3);
            prop_assert!((sum - dephased.region3(q3)).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn protocol_matches_closed_form(a in 0.0..=PI, b in 0.0..=PI, chi in -PI..=PI) {
        let p = correlators_protocol(&ProtocolConfig::ideal(a, b, chi)).unwrap();
        let c = correlators_analytic(a, b, chi);
        prop_assert!((p.c21.value - a.cos()).abs() <= 1e-10);
        prop_assert!((p.c32.value - b.cos()).abs() <= 1e-10);
        prop_assert!((p.c31.value - c.c31.value).abs() <= 1e-10);
        prop_assert!((p.k - c.k).abs() <= 1e-10);
    }

    #[test]
    fn k_within_quantum_bounds(a in 0.0..=PI, b in 0.0..=PI, chi in -PI..=PI) {
        let k = correlators_analytic(a, b, chi).k;
        prop_assert!((-3.0 - 1e-12..=1.5 + 1e-12).contains(&k), "K = {k}");
    }

    #[test]
    fn no_coherence_no_violation(config in protocol()) {
        let config = ProtocolConfig { visibility: 0.0, ..config };
        if let Ok(set) = correlators_protocol(&config) {
            prop_assert!(set.k <= 1.0 + 1e-12, "K = {}", set.k);
        }
    }
}

proptest! {
    #[test]
    fn reduced_k_matches_balanced_closed_form(a in 0.0..=PI, chi in -PI..=PI) {
        prop_assert!((k_reduced(a, chi) - correlators_analytic(a, FRAC_PI_2, chi).k).abs() <= 1e-14);
    }

    #[test]
    fn violation_boundary_separates_regions(a in 1e-6..FRAC_PI_2, frac in 0.0..1.0f64) {
        let edge = violation_boundary(a).unwrap();
        prop_assert!((k_reduced(a, edge) - 1.0).abs() <= 1e-12);
        let inside = frac * edge;
        prop_assert!(k_reduced(a, inside) >= 1.0 - 1e-12);
        let outside = edge + frac * (PI - edge);
        if frac > 1e-6 {
            prop_assert!(k_reduced(a, outside) < 1.0);
        }
    }

    #[test]
    fn no_boundary_beyond_quarter_turn(a in (FRAC_PI_2 + 1e-9)..PI) {
        prop_assert!(violation_boundary(a).is_none());
        prop_assert!(k_reduced(a, 0.0) <= 1.0 + 1e-12);
    }

    #[test]
    fn absorber_acts_as_effective_plate(t in 1e-3..=1.0f64, b in 0.0..=PI, chi in -PI..=PI) {
        let with_absorber = ProtocolConfig {
            absorber: Some(AbsorberSpec { transmission: t, path: Path::Minus }),
            ..ProtocolConfig::ideal(FRAC_PI_2, b, chi)
        };
        let set = correlators_protocol(&with_absorber).unwrap();
        let plate = correlators_analytic(effective_theta(t).unwrap(), b, chi);
        prop_assert!((set.c21.value - plate.c21.value).abs() <= 1e-10);
        prop_assert!((set.c31.value - plate.c31.value).abs() <= 1e-10);
        prop_assert!((set.c32.value - plate.c32.value).abs() <= 1e-10);
    }
}
