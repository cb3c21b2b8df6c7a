use marketlab::meanfield::{
    allocation_grid, asymptotic_bias, bias_differential_bound, booking_rate_supremum,
    calibrate_phi, cr_variance_limit, find_lambda_star, gte_limit, homogeneous, limit_booking_rate,
    lr_variance_limit, rate_matrices,
};
use marketlab::{Arm, DesignKind, MarketSpec};
use proptest::prelude::*;

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.1..1.0f64, k).prop_map(|w| {
        let total: f64 = w.iter().sum();
        let mut out: Vec<f64> = w.iter().map(|x| x / total).collect();
        let rest: f64 = out[1..].iter().sum();
        out[0] = 1.0 - rest;
        out
    })
}

fn rates(g: usize, t: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0..3.0f64, t), g)
}

/// Heterogeneous market with an arbitrary treatment matrix.
fn spec() -> impl Strategy<Value = MarketSpec> {
    (1usize..4, 1usize..4)
        .prop_flat_map(|(g, t)| {
            (
                simplex(g),
                simplex(t),
                0.05..20.0f64,
                rates(g, t),
                rates(g, t),
            )
        })
        .prop_map(|(sigma, tau, lambda, phi, phi_t)| {
            MarketSpec::new(
                (0..sigma.len()).map(|i| format!("c{i}")).collect(),
                (0..tau.len()).map(|j| format!("l{j}")).collect(),
                sigma,
                tau,
                lambda,
                phi,
                phi_t,
            )
            .unwrap()
        })
}

fn multiplicative(alpha: std::ops::Range<f64>) -> impl Strategy<Value = MarketSpec> {
    (1usize..4, 1usize..4)
        .prop_flat_map(move |(g, t)| {
            (
                simplex(g),
                simplex(t),
                0.1..10.0f64,
                prop::collection::vec(prop::collection::vec(0.05..2.0f64, t), g),
                alpha.clone(),
            )
        })
        .prop_map(|(sigma, tau, lambda, phi, alpha)| {
            MarketSpec::multiplicative(sigma, tau, lambda, phi, alpha).unwrap()
        })
}

fn bias(spec: &MarketSpec, kind: DesignKind, a: f64) -> f64 {
    asymptotic_bias(spec, kind.with_allocation(a).unwrap())
        .unwrap()
        .bias
}

fn lr_curve(spec: &MarketSpec) -> Vec<f64> {
    allocation_grid()
        .into_iter()
        .map(|a| bias(spec, DesignKind::Lr, a).abs())
        .collect()
}

proptest! {
    #[test]
    fn rates_are_dominated(spec in spec()) {
        for arm in [Arm::Control, Arm::Treatment] {
            let r = rate_matrices(&spec, arm);
            for (g, row) in spec.phi(arm).iter().enumerate() {
                for (t, phi) in row.iter().enumerate() {
                    prop_assert!(r.psi[g][t] <= *phi + 1e-15);
                    prop_assert!(r.omega[g][t] <= r.psi[g][t] + 1e-15);
                    prop_assert!(r.omega[g][t] >= 0.0);
                }
            }
            let rate = limit_booking_rate(&spec, arm);
            prop_assert!((0.0..=1.0).contains(&rate));
            prop_assert!(rate <= booking_rate_supremum(spec.lambda()) + 1e-12);
        }
    }

    #[test]
    fn null_intervention_has_no_bias(spec in spec(), a in 0.01..0.99f64) {
        let null = MarketSpec::new(
            spec.customer_types().to_vec(),
            spec.listing_types().to_vec(),
            spec.sigma().to_vec(),
            spec.tau().to_vec(),
            spec.lambda(),
            spec.phi_control().to_vec(),
            spec.phi_control().to_vec(),
        ).unwrap();
        prop_assert_eq!(gte_limit(&null), 0.0);
        prop_assert_eq!(bias(&null, DesignKind::Cr, a), 0.0);
        prop_assert_eq!(bias(&null, DesignKind::Lr, a), 0.0);
    }

    #[test]
    fn positive_lift_overstates(spec in multiplicative(1.05..2.0), a in 0.01..0.99f64) {
        prop_assert!(gte_limit(&spec) > 0.0);
        prop_assert!(bias(&spec, DesignKind::Cr, a) > 0.0);
        prop_assert!(bias(&spec, DesignKind::Lr, a) > 0.0);
    }

    #[test]
    fn negative_lift_overstates_magnitude(spec in multiplicative(0.3..0.95), a in 0.01..0.99f64) {
        prop_assert!(gte_limit(&spec) < 0.0);
        prop_assert!(bias(&spec, DesignKind::Cr, a) < 0.0);
        prop_assert!(bias(&spec, DesignKind::Lr, a) < 0.0);
    }

    #[test]
    fn cr_bias_shrinks_toward_the_treated_side(spec in multiplicative(1.05..2.0)) {
        let curve: Vec<f64> = allocation_grid().into_iter().map(|a| bias(&spec, DesignKind::Cr, a).abs()).collect();
        prop_assert!(curve.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn cr_bias_spread_is_bounded(spec in spec()) {
        let curve: Vec<f64> = allocation_grid().into_iter().map(|a| bias(&spec, DesignKind::Cr, a)).collect();
        let max = curve.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = curve.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(max - min <= bias_differential_bound(&spec));
    }

    #[test]
    fn lr_bias_is_smallest_at_an_endpoint(phi in 0.05..2.0f64, alpha in 0.3..2.0f64, lambda in 0.1..10.0f64) {
        let spec = MarketSpec::homogeneous(phi, alpha * phi, lambda).unwrap();
        let curve = lr_curve(&spec);
        let min = curve.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(curve[0] == min || curve[curve.len() - 1] == min);
    }

    #[test]
    fn lr_direction_flips_at_the_cutoff(phi in 0.05..2.0f64, alpha in prop_oneof![0.5..0.95f64, 1.05..1.5f64]) {
        let star = find_lambda_star(phi, alpha * phi).unwrap();
        let direction = |lambda: f64| {
            (homogeneous::lr_bias(phi, alpha * phi, lambda, 0.9) - homogeneous::lr_bias(phi, alpha * phi, lambda, 0.1)).signum()
        };
        prop_assert_ne!(direction(star / 2.0), direction(star * 2.0));
    }

    #[test]
    fn variance_components_have_signs(phi in 0.0..3.0f64, phi_t in 0.0..3.0f64, lambda in 0.01..50.0f64, a in 0.01..0.99f64) {
        prop_assume!(phi + phi_t > 0.0);
        let lr = lr_variance_limit(phi, phi_t, lambda, a).unwrap();
        prop_assert!(lr.treated >= 0.0 && lr.control >= 0.0 && lr.covariance <= 0.0);
        prop_assert!(lr.total >= 0.0 && lr.total.is_finite());
        let cr = cr_variance_limit(phi, phi_t, lambda, a).unwrap();
        prop_assert!(cr.treated >= 0.0 && cr.control >= 0.0);
        prop_assert!(cr.total >= 0.0 && cr.total.is_finite());
    }

    #[test]
    fn calibration_inverts_the_booking_rate(lambda in 0.05..20.0f64, frac in 0.01..0.99f64) {
        let target = frac * booking_rate_supremum(lambda);
        let phi = calibrate_phi(target, lambda).unwrap();
        prop_assert!((homogeneous::booking_rate(phi, lambda) - target).abs() < 1e-8);
    }

    #[test]
    fn homogeneous_closed_forms_agree(phi in 0.0..3.0f64, phi_t in 0.0..3.0f64, lambda in 0.05..20.0f64, a in 0.01..0.99f64) {
        let spec = MarketSpec::homogeneous(phi, phi_t, lambda).unwrap();
        prop_assert!((gte_limit(&spec) - homogeneous::gte(phi, phi_t, lambda)).abs() < 1e-12);
        prop_assert!((bias(&spec, DesignKind::Cr, a) - homogeneous::cr_bias(phi, phi_t, lambda, a)).abs() < 1e-12);
        prop_assert!((bias(&spec, DesignKind::Lr, a) - homogeneous::lr_bias(phi, phi_t, lambda, a)).abs() < 1e-12);
    }
}

#[test]
fn extremes_favor_cr_then_lr() {
    let phi = calibrate_phi(0.20, 1.0).unwrap();
    let phi_t = calibrate_phi(0.22, 1.0).unwrap();
    let at = |lambda: f64, kind| {
        bias(
            &MarketSpec::homogeneous(phi, phi_t, lambda).unwrap(),
            kind,
            0.5,
        )
        .abs()
    };
    assert!(at(0.01, DesignKind::Cr) < at(0.01, DesignKind::Lr) / 10.0);
    assert!(at(100.0, DesignKind::Lr) < at(100.0, DesignKind::Cr) / 1e6);
}

// The endpoint property is only guaranteed with one type on each side.
// Strong multiplicative lifts over uneven listing types can break it.
#[test]
fn heterogeneous_lr_bias_can_dip_inside() {
    let spec = MarketSpec::multiplicative(
        vec![1.0],
        vec![0.47, 0.53],
        3.3,
        vec![vec![1.98, 0.18]],
        1.6,
    )
    .unwrap();
    let curve = lr_curve(&spec);
    let (argmin, _) =
        curve.iter().enumerate().fold(
            (0, f64::INFINITY),
            |best, (i, &v)| if v < best.1 { (i, v) } else { best },
        );
    assert!(argmin > 0 && argmin < curve.len() - 1, "argmin {argmin}");
}
