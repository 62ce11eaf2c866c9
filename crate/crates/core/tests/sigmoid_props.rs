use neyman_core::numerics::RngStream;
use neyman_core::sigmoid::{bregman_psi, default_grid, dpsi, linspace, psi, verify_condition, SigmoidSpec};
use proptest::prelude::*;

fn families() -> [SigmoidSpec; 2] {
    [SigmoidSpec::arctan(), SigmoidSpec::algebraic()]
}

#[test]
fn phi_is_increasing_and_symmetric_on_the_grid() {
    let grid = default_grid();
    for s in families() {
        for w in grid.windows(2) {
            assert!(s.phi(w[1]) - s.phi(w[0]) > 0.0, "{:?} not increasing at {}", s.kind(), w[0]);
        }
        for &u in &grid {
            assert!((s.phi(u) + s.phi(-u) - 1.0).abs() <= 1e-14);
        }
    }
}

#[test]
fn closed_form_derivatives_match_finite_differences() {
    let h = 1e-5;
    for s in families() {
        let inv = |u: f64| 1.0 / s.phi(u);
        for &u in &linspace(-40.0, 40.0, 4001) {
            // The algebraic family has a kink in the second derivative at 0.
            if s.kind() == neyman_core::SigmoidKind::Algebraic && u.abs() < 2.0 * h {
                continue;
            }
            let (d1, d2) = s.inv_phi_derivs(u);
            let fd1 = (inv(u + h) - inv(u - h)) / (2.0 * h);
            let (g1, _) = s.inv_phi_derivs(u + h);
            let (g0, _) = s.inv_phi_derivs(u - h);
            let fd2 = (g1 - g0) / (2.0 * h);
            assert!((d1 - fd1).abs() <= 1e-5 * d1.abs().max(1e-3), "{:?} d1 at {u}: {d1} vs {fd1}", s.kind());
            assert!((d2 - fd2).abs() <= 1e-5 * d2.abs().max(1e-3), "{:?} d2 at {u}: {d2} vs {fd2}", s.kind());

            let (e1, _) = s.inv_one_minus_phi_derivs(u);
            let inv1 = |v: f64| 1.0 / (1.0 - s.phi(v));
            let fe1 = (inv1(u + h) - inv1(u - h)) / (2.0 * h);
            assert!((e1 - fe1).abs() <= 1e-5 * e1.abs().max(1e-3), "{:?} reflected d1 at {u}", s.kind());
        }
    }
}

#[test]
fn bregman_lower_bound_on_a_hundred_thousand_pairs() {
    let mut rng = RngStream::new(11, 0);
    for _ in 0..100_000 {
        let v = 20.0 * rng.uniform() - 10.0;
        let u = 20.0 * rng.uniform() - 10.0;
        let b = bregman_psi(v, u);
        let bound = 0.5 * (v - u).powi(2) * (1.0 + 0.5 * v.abs() + u.abs());
        assert!(b >= bound - 1e-12, "B({v}|{u}) = {b} < {bound}");
    }
}

#[test]
fn regularizer_is_symmetric() {
    for s in families() {
        // Dyadic points so that 1 − p is exact.
        for k in 1..(1u32 << 14) {
            let p = f64::from(k) / f64::from(1u32 << 14);
            let a = s.regularizer(p).unwrap();
            let b = s.regularizer(1.0 - p).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.max(1.0), "{:?} Ψ({p}) = {a}, Ψ(1−p) = {b}", s.kind());
        }
    }
}

#[test]
fn each_clause_can_be_falsified() {
    use neyman_core::Clause;
    let grid = default_grid();
    let cases = [
        (SigmoidSpec::arctan().with_constants(3.0, 2f64.powf(2.5) * std::f64::consts::PI / 3.0, 0.1), Clause::Bound3a),
        (SigmoidSpec::algebraic().with_constants(2.0, 4.0, 1.0), Clause::Bound3b),
        (SigmoidSpec::arctan().with_constants(std::f64::consts::PI, 6.0, 1.5), Clause::Bound3c),
    ];
    for (spec, clause) in cases {
        let r = verify_condition(&spec, &grid);
        assert!(r.max_violation > 1e-9);
        let worst = r.per_clause.iter().find(|(c, _)| *c == clause).unwrap().1;
        assert!(worst > 1e-9, "{clause:?} not flagged: {r:?}");
    }
}

proptest! {
    #[test]
    fn bregman_matches_its_definition(v in -10.0f64..10.0, u in -10.0f64..10.0) {
        let naive = psi(v) - psi(u) - dpsi(u) * (v - u);
        let b = bregman_psi(v, u);
        prop_assert!(b >= 0.0);
        prop_assert!((b - naive).abs() <= 1e-11 * (1.0 + psi(v) + psi(u)));
    }

    #[test]
    fn phi_inv_round_trips(p in 1e-9f64..(1.0 - 1e-9)) {
        for s in families() {
            let back = s.phi(s.phi_inv(p).unwrap());
            prop_assert!((back - p).abs() <= 1e-12 * p);
        }
    }

    #[test]
    fn psi_parity(u in -100.0f64..100.0) {
        prop_assert_eq!(psi(u), psi(-u));
        prop_assert_eq!(dpsi(u), -dpsi(-u));
    }
}
