//! Property tests for the algebraic invariants: dead-zone norm algebra,
//! transform round trips, companion/filter structure, and the
//! physical/canonical conjugacy of the plant.

use nlobs_core::linalg::{eigenvalues, norm2};
use nlobs_core::norms::{deadzone, deadzone_vec};
use nlobs_core::observer::{lambda_decode, make_omegas, oscillator_field};
use nlobs_core::ode::rk4_integrate;
use nlobs_core::plant::{
    from_canonical, rowat_field, state_from_canonical, state_to_canonical, to_canonical,
    RowatParams,
};
use nlobs_core::poly::{companion_pair, hurwitz, roots};
use proptest::prelude::*;

fn finite_range(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL.prop_map(move |x| lo + (hi - lo) * (x.abs() % 1.0))
}

fn valid_params() -> impl Strategy<Value = RowatParams> {
    (
        finite_range(0.05, 10.0),
        finite_range(0.05, 10.0),
        finite_range(0.0, 3.0),
        finite_range(0.1, 5.0),
        finite_range(0.1, 5.0),
    )
        .prop_map(|(tau_m, tau_s, sigma_s, sigma_f, a_f)| RowatParams {
            tau_m,
            tau_s,
            sigma_s,
            sigma_f,
            a_f,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn deadzone_properties(
        a in -1e3..1e3f64,
        b in -1e3..1e3f64,
        l in prop_oneof![-1e2..-1e-3f64, 1e-3..1e2f64],
        eps in 1e-6..10.0f64,
    ) {
        // monotone in |a|
        if a.abs() <= b.abs() {
            prop_assert!(deadzone(a, eps) <= deadzone(b, eps));
        }
        // subadditive shift
        prop_assert!(deadzone(a.abs() + b.abs(), eps) <= deadzone(a, eps) + b.abs() + 1e-12);
        // scaling
        let lhs = deadzone(l * a, eps);
        let rhs = l.abs() * deadzone(a, eps / l.abs());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        // pair bound
        let (da, db) = (deadzone(a, eps), deadzone(b, eps));
        prop_assert!(da + db <= 2.0 * (da * da + db * db).sqrt() + 1e-12);
    }

    #[test]
    fn deadzone_vec_reduces_to_norm(
        x in -50.0..50.0f64,
        y in -50.0..50.0f64,
        eps in 0.0..10.0f64,
    ) {
        let v = [x, y];
        let direct = (norm2(&v) - eps).max(0.0);
        prop_assert_eq!(deadzone_vec(&v, eps), direct);
    }

    #[test]
    fn parameter_round_trip(p in valid_params()) {
        let back = from_canonical(&to_canonical(&p)).unwrap();
        prop_assert!((back.tau_m - p.tau_m).abs() <= 1e-10 * p.tau_m.max(1.0));
        prop_assert!((back.tau_s - p.tau_s).abs() <= 1e-10 * p.tau_s.max(1.0));
        prop_assert!((back.sigma_s - p.sigma_s).abs() <= 1e-9);
        prop_assert!((back.sigma_f - p.sigma_f).abs() <= 1e-9);
        prop_assert!((back.a_f - p.a_f).abs() <= 1e-10 * p.a_f.max(1.0));
    }

    #[test]
    fn state_round_trip(p in valid_params(), v in -5.0..5.0f64, q in -5.0..5.0f64) {
        let x = state_to_canonical(&p, [v, q]);
        let back = state_from_canonical(&p, x);
        prop_assert!((back[0] - v).abs() <= 1e-13 * v.abs().max(1.0));
        prop_assert!((back[1] - q).abs() <= 1e-12 * q.abs().max(1.0));
    }

    #[test]
    fn stable_polynomials_recognized(r1 in 0.05..5.0f64, r2 in 0.05..5.0f64) {
        // (s + r1)(s + r2): roots strictly in the left half plane
        prop_assert!(hurwitz(&[r1 + r2, r1 * r2]));
        // flip one root to the right half plane
        prop_assert!(!hurwitz(&[r2 - r1, -r1 * r2]));
    }

    #[test]
    fn companion_matrix_spectrum_matches_roots(
        r1 in 0.05..4.0f64,
        r2 in 0.05..4.0f64,
        r3 in 0.05..4.0f64,
    ) {
        let b = [
            r1 + r2 + r3,
            r1 * r2 + r1 * r3 + r2 * r3,
            r1 * r2 * r3,
        ];
        let cp = companion_pair(&b).unwrap();
        let mut lam: Vec<f64> = eigenvalues(&cp.lambda).iter().map(|z| z.re).collect();
        let mut rts: Vec<f64> = roots(&b).iter().map(|z| z.re).collect();
        lam.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (x, y) in lam.iter().zip(&rts) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn lambda_decode_stays_in_box(s1 in -1.0..1.0f64, lo in -3.0..0.0f64, w in 0.0..4.0f64) {
        let mut out = [0.0];
        lambda_decode(&[s1, 0.0], &[[lo, lo + w]], &mut out);
        prop_assert!(out[0] >= lo - 1e-12 && out[0] <= lo + w + 1e-12);
    }

    #[test]
    fn oscillator_radial_flow_sign(r in 0.2..2.0f64, phase in 0.0..6.2831f64) {
        // radius grows below the unit circle and shrinks above it
        let s = [r * phase.cos(), r * phase.sin()];
        let mut ds = [0.0; 2];
        oscillator_field(&s, 1.0, 1.0, &make_omegas(1), &mut ds);
        let radial = s[0] * ds[0] + s[1] * ds[1];
        if r < 0.999 {
            prop_assert!(radial > 0.0);
        } else if r > 1.001 {
            prop_assert!(radial < 0.0);
        }
    }
}

// Conjugacy: integrating the physical model and transforming the states
// matches transforming the initial state and integrating the canonical
// model, here driven through the same transform identity on the field.
#[test]
fn physical_canonical_conjugacy() {
    let p = RowatParams::reference();
    let c = to_canonical(&p);
    let h = 1e-3;
    let steps = 10_000; // t in [0, 10]

    let phys = rk4_integrate(
        |_, x, dx| {
            let d = rowat_field(&p, [x[0], x[1]]);
            dx.copy_from_slice(&d);
        },
        0.0,
        &[1.0, 0.0],
        h,
        steps,
        None,
    )
    .unwrap();

    let x0 = state_to_canonical(&p, [1.0, 0.0]);
    let canon = rk4_integrate(
        |_, x, dx| {
            let y = x[0];
            let tl = libm::tanh(c.lambda * y);
            dx[0] = x[1] + c.theta[0] * y + c.theta[1] * tl;
            dx[1] = c.theta[2] * y + c.theta[3] * tl;
        },
        0.0,
        &x0,
        h,
        steps,
        None,
    )
    .unwrap();

    let mut worst = 0.0f64;
    for i in (0..=steps).step_by(100) {
        let xp = state_to_canonical(&p, [phys.sample(i)[0], phys.sample(i)[1]]);
        let xc = canon.sample(i);
        worst = worst.max((xp[0] - xc[0]).abs().max((xp[1] - xc[1]).abs()));
    }
    assert!(worst <= 1e-6, "conjugacy defect {worst}");
}

// The spec of the root scanner: every equilibrium reported by the plant
// module is genuinely stationary, and the set is symmetric.
#[test]
fn equilibria_symmetry_and_residuals() {
    for sigma_s in [0.5, 0.8, 0.95, 1.05, 1.4] {
        let p = RowatParams {
            sigma_s,
            ..RowatParams::reference()
        };
        let eqs = nlobs_core::plant::equilibria(&p);
        for e in &eqs {
            let d = rowat_field(&p, [e.v, e.q]);
            assert!(norm2(&d) <= 1e-9, "sigma_s={sigma_s} residual={}", norm2(&d));
        }
        let n = eqs.len();
        assert!(n == 1 || n == 3);
        if n == 3 {
            assert!((eqs[0].v + eqs[2].v).abs() < 1e-9);
            assert!(eqs[1].v.abs() < 1e-9);
        }
    }
}
