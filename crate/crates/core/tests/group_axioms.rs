//! Group-axiom conformance: exhaustive checks on discrete enumerations and
//! property-based checks on random elements.

use partequiv_core::group::*;
use proptest::prelude::*;
use std::f32::consts::PI;

fn close(a: FiberElement, b: FiberElement, tol: f32) -> bool {
    wrap_angle(a.theta - b.theta).abs() < tol && a.mirror == b.mirror
}

#[test]
fn axioms_hold_exhaustively_on_discrete_enumerations() {
    for n in [1usize, 2, 4, 8, 16] {
        let mut sets = vec![enumerate_discrete(GroupSpec::new(GroupKind::SO2), n).unwrap()];
        if n % 2 == 0 {
            sets.push(enumerate_discrete(GroupSpec::new(GroupKind::O2), n).unwrap());
        }
        for set in sets {
            let e = FiberElement::identity();
            assert!(set.iter().any(|&g| close(g, e, 1e-6)), "identity missing");
            for &a in &set {
                // identity and inverse
                assert!(close(compose(a, e), a, 1e-6));
                assert!(close(compose(e, a), a, 1e-6));
                let ai = inverse(a);
                assert!(set.iter().any(|&g| close(g, ai, 1e-5)), "inverse not in set");
                assert!(compose(a, ai).is_identity(1e-5));
                for &b in &set {
                    // closure
                    let ab = compose(a, b);
                    assert!(set.iter().any(|&g| close(g, ab, 1e-5)), "not closed");
                    // associativity on all triples
                    for &c in &set {
                        let lhs = compose(compose(a, b), c);
                        let rhs = compose(a, compose(b, c));
                        assert!(
                            close(lhs, rhs, 1e-5),
                            "associativity failed: {a:?} {b:?} {c:?}"
                        );
                    }
                }
            }
        }
    }
}

fn element_strategy() -> impl Strategy<Value = FiberElement> {
    (-10.0f32..10.0, prop::bool::ANY)
        .prop_map(|(theta, m)| FiberElement::new(theta, if m { 1.0 } else { -1.0 }))
}

proptest! {
    #[test]
    fn action_is_an_isometry(g in element_strategy(), x in -5.0f32..5.0, y in -5.0f32..5.0) {
        let p = [x, y];
        let q = act_on_plane(g, p);
        let n0 = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let n1 = (q[0] * q[0] + q[1] * q[1]).sqrt();
        prop_assert!((n0 - n1).abs() < 1e-5 * (1.0 + n0));
    }

    #[test]
    fn composition_chains_stay_canonical(chain in prop::collection::vec(element_strategy(), 10)) {
        let mut acc = FiberElement::identity();
        for g in chain {
            acc = compose(acc, g);
            prop_assert!(acc.theta >= -PI && acc.theta < PI, "theta {} escaped canonical range", acc.theta);
        }
    }

    #[test]
    fn inverse_cancels(g in element_strategy()) {
        prop_assert!(compose(g, inverse(g)).is_identity(1e-5));
        prop_assert!(compose(inverse(g), g).is_identity(1e-5));
    }

    #[test]
    fn action_matches_composition(a in element_strategy(), b in element_strategy()) {
        let p = [0.37, -1.21];
        let lhs = act_on_plane(compose(a, b), p);
        let rhs = act_on_plane(a, act_on_plane(b, p));
        prop_assert!((lhs[0] - rhs[0]).abs() < 1e-5 && (lhs[1] - rhs[1]).abs() < 1e-5);
    }
}

#[test]
fn isometry_on_1000_fixed_random_pairs() {
    let mut rng = partequiv_core::rng::Rng::from_seed(42);
    for _ in 0..1000 {
        let g = FiberElement::new(
            rng.uniform_in(-8.0, 8.0),
            if rng.uniform() < 0.5 { 1.0 } else { -1.0 },
        );
        let p = [rng.uniform_in(-3.0, 3.0), rng.uniform_in(-3.0, 3.0)];
        let q = act_on_plane(g, p);
        let n0 = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let n1 = (q[0] * q[0] + q[1] * q[1]).sqrt();
        assert!((n0 - n1).abs() < 1e-5 * (1.0 + n0));
    }
}
