mod common;

use std::f64::consts::PI;

use isoslow::isostable::{state_transition, Path, Stm};
use nalgebra::DMatrix;
use proptest::prelude::*;

use common::{
    forward_path, goodwin_decay_slope, goodwin_gradient_mismatch, pendulum_pairing_drift, setup,
    shifted_identity_error,
};

proptest! {
    #![proptest_config(ProptestConfig { cases: 3, ..ProptestConfig::default() })]

    #[test]
    fn pendulum_pairing_is_constant_over_fifty_time_units(
        radius in 0.005f64..0.02,
        phase in 0.0f64..(2.0 * PI),
    ) {
        let drift = pendulum_pairing_drift(radius, phase);
        prop_assert!(drift <= 1e-6, "pairing drift {drift:e}");
    }

    #[test]
    fn goodwin_slow_isostable_decays_at_the_slow_rate(
        d in prop::array::uniform3(-0.05f64..0.05),
    ) {
        let (slope, re) = goodwin_decay_slope(d);
        prop_assert!(((slope - re) / re).abs() <= 0.02, "slope {slope} vs {re}");
    }

    #[test]
    fn shifted_transition_matrices_differ_by_the_eigenvalue_factor(
        t1 in 0.0f64..5.0,
        span in 0.1f64..20.0,
        k in 0usize..3,
        j in 0usize..3,
    ) {
        let err = shifted_identity_error(t1, span, k, j);
        prop_assert!(err <= 1e-9, "shifted identity off by {err:e}");
    }

    #[test]
    fn transition_matrices_compose(split in 0.1f64..0.9) {
        let (m, s) = setup("pendulum");
        let start = s.x0.iter().map(|v| v + 0.05).collect::<Vec<_>>();
        let path = forward_path(m.as_ref(), &start, 4.0, 4000);
        let cut = (split * 4000.0).round() as usize;
        let first = Path::new(path.t[..=cut].to_vec(), path.x[..=cut].to_vec(), path.dx[..=cut].to_vec()).unwrap();
        let second = Path::new(path.t[cut..].to_vec(), path.x[cut..].to_vec(), path.dx[cut..].to_vec()).unwrap();
        let whole = state_transition(m.as_ref(), &path).unwrap();
        let composed = state_transition(m.as_ref(), &second)
            .unwrap()
            .compose(&state_transition(m.as_ref(), &first).unwrap())
            .unwrap();
        let err = (&whole.phi - &composed.phi).amax();
        prop_assert!(err <= 1e-8 * whole.phi.amax().max(1.0), "composition off by {err:e}");
        prop_assert_eq!(Stm::identity(3, 1.0).phi, DMatrix::identity(3, 3));
    }
}

#[test]
fn slow_gradient_matches_finite_differences_at_ten_manifold_points() {
    let delta = 1e-5;
    let worst = goodwin_gradient_mismatch(delta);
    assert!(worst <= 1e-4_f64.max(10.0 * delta), "gradient mismatch {worst:e}");
}
