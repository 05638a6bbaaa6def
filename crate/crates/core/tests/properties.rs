use nalgebra::DMatrix;
use proptest::prelude::*;

use oscillant::catalog::{self, KgBranch};
use oscillant::flow::{flow_spectrum, InteractionMatrix};
use oscillant::interaction::{polarization_vectors, symmetrizer_basis, Coupling};
use oscillant::linalg::{self, c, CMat, CVec, C64};
use oscillant::resonance::{analyze_resonances, Window};
use oscillant::{NumericPolicy, SystemSpec, Triplet};

fn complex() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn cvec(n: usize) -> impl Strategy<Value = CVec> {
    prop::collection::vec(complex(), n).prop_map(CVec::from_vec)
}

/// Two rank-one `n x n` blocks with a trace product bounded away from zero.
fn rank_one_pair() -> impl Strategy<Value = (CMat, CMat)> {
    (1usize..5)
        .prop_flat_map(|n| (cvec(n), cvec(n), cvec(n), cvec(n)))
        .prop_map(|(u, v, w, z)| (&u * v.adjoint(), &w * z.adjoint()))
        .prop_filter("non-vanishing trace", |(p, q)| linalg::trace(&(p * q)).norm() > 1e-3 * linalg::max_abs(p) * linalg::max_abs(q))
}

fn random_spec() -> impl Strategy<Value = SystemSpec> {
    (2usize..5)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(-3.0..3.0f64, n * n),
                prop::collection::vec(-3.0..3.0f64, n * n),
                prop::collection::vec((0..n, 0..n, 0..n, -2.0..2.0f64, 0u8..4), 0..6),
            )
        })
        .prop_map(|(n, a, s, b)| {
            let a = DMatrix::from_vec(n, n, a);
            let s = DMatrix::from_vec(n, n, s);
            let a0 = &a - a.transpose();
            let a1 = &s + s.transpose();
            let b = b.into_iter().map(|(o, l, r, v, m)| Triplet::new(o, l, r, v).conjugated(m)).collect();
            SystemSpec::new("random", a0, vec![a1], b).expect("valid by construction")
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetrizer_reduces_rank_one_pairs((p, q) in rank_one_pair(), a in 0.0..6.3f64, b in 0.0..6.3f64) {
        let s = symmetrizer_basis(&p, &q).unwrap();
        let (nu12, nu21) = (C64::from_polar(1.0, a), C64::from_polar(1.0, b));
        prop_assert!(s.residual(&p, &q, nu12, nu21) < 1e-10);
        let tr = linalg::trace(&(&p * &q));
        prop_assert!((s.c12 * s.c21 - tr).norm() < 1e-10 * (1.0 + tr.norm()));
    }

    #[test]
    fn closed_form_spectrum_matches_dense(
        (p, q) in rank_one_pair(),
        mu1 in -2.0..2.0f64,
        mu2 in -2.0..2.0f64,
        log_eps in -4.0..-1.0f64,
        amp in complex(),
    ) {
        let m = InteractionMatrix::new(mu1, mu2, p, q, 10f64.powf(log_eps), amp + c(0.1)).unwrap();
        let closed = flow_spectrum(&m).unwrap();
        let dense = linalg::general_eigenvalues(&m.matrix());
        prop_assert!(linalg::multiset_distance(&closed, &dense) < 1e-10 * (1.0 + linalg::max_abs(&m.matrix())));
    }

    #[test]
    fn json_round_trip(spec in random_spec()) {
        let back = SystemSpec::from_json(&spec.to_json()).unwrap();
        prop_assert_eq!(&back.a0, &spec.a0);
        prop_assert_eq!(&back.aj, &spec.aj);
        prop_assert_eq!(&back.b, &spec.b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn index_trace_scales_quadratically_and_commutes(s in 0.1..4.0f64, x in -5.0..5.0f64) {
        let base = catalog::kg_equal(1.0, 0.5, 1).unwrap();
        let mut scaled = base.clone();
        for t in &mut scaled.b {
            t.value *= s;
        }
        let phase = catalog::kg_fast_phase(1.0, &[1.0]);
        let window = Window::interval(-7.0, 7.0, 141);
        let (field, _) = analyze_resonances(&base, &phase, &window, NumericPolicy::default()).unwrap();
        let (field_s, _) = analyze_resonances(&scaled, &phase, &window, NumericPolicy::default()).unwrap();
        let pol = polarization_vectors(&base, &phase).unwrap();
        let (i, j) = (KgBranch::FastPlus.index(), KgBranch::SlowPlus.index());
        let a = Coupling::new(&field, &phase, &pol).sample(i, j, &[x]).unwrap();
        let b = Coupling::new(&field_s, &phase, &pol).sample(i, j, &[x]).unwrap();
        prop_assert!((b.gamma - a.gamma * (s * s)).norm() < 1e-12 * (1.0 + b.gamma.norm()));
        let swapped = linalg::trace(&(&a.b_minus * &a.b_plus));
        prop_assert!((swapped - a.gamma).norm() < 1e-12);
    }
}
