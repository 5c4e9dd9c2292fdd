use autogeo::connection::{attached_connection, attached_multipliers, autoparallel_rhs, psi, rhs_f};
use autogeo::euler_poisson::{ep_expression, Jet2Point, ModelParams};
use autogeo::metric::{cross, dot, Metric, Vec3};
use autogeo::reduction::{project_state, HomogeneousState};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(a, b, c)| Vec3::new(a, b, c))
}

fn metric() -> impl Strategy<Value = Metric> {
    prop_oneof![Just(Metric::Euclidean), Just(Metric::Pseudo)]
}

/// A timelike velocity for the given metric.
fn timelike(g: Metric) -> impl Strategy<Value = Vec3> {
    match g {
        Metric::Euclidean => vec3(2.0).prop_filter("speed", |u| u.norm() > 0.3).boxed(),
        Metric::Pseudo => (1.0..2.0f64, -0.6..0.6f64, -0.6..0.6f64)
            .prop_map(|(a, b, c)| Vec3::new(a, b, c))
            .boxed(),
    }
}

fn jet_and_metric() -> impl Strategy<Value = (Metric, Vec3, Vec3, Vec3)> {
    metric().prop_flat_map(|g| (Just(g), timelike(g), vec3(1.0), vec3(1.0)))
}

proptest! {
    #[test]
    fn ep_is_orthogonal_to_u((g, u, ud, udd) in jet_and_metric(), m in -2.0..2.0f64) {
        let e = ep_expression(&Jet2Point::new(u, ud, udd), &ModelParams::new(m, 0.0, g)).unwrap();
        prop_assert!(e.dot(&u).abs() <= 1e-12 * (1.0 + e.norm() * u.norm()));
    }

    #[test]
    fn ep_scales_with_reparametrization((g, u, ud, udd) in jet_and_metric(), m in -2.0..2.0f64, s in 0.2..3.0f64) {
        // u -> s u, u' -> s^2 u', u'' -> s^3 u'' multiplies E by s
        let p = ModelParams::new(m, 0.0, g);
        let e = ep_expression(&Jet2Point::new(u, ud, udd), &p).unwrap();
        let es = ep_expression(&Jet2Point::new(u * s, ud * (s * s), udd * s.powi(3)), &p).unwrap();
        prop_assert!((es - e * s).amax() <= 1e-10 * (1.0 + es.amax()));
    }

    #[test]
    fn cross_is_orthogonal_and_lagrange((g, a, b, _) in jet_and_metric()) {
        let c = cross(&a, &b, g);
        prop_assert!(dot(&c, &a, g).abs() <= 1e-12);
        prop_assert!(dot(&c, &b, g).abs() <= 1e-12);
        let lagrange = dot(&a, &a, g) * dot(&b, &b, g) - dot(&a, &b, g).powi(2);
        prop_assert!((dot(&c, &c, g) - lagrange).abs() <= 1e-12 * (1.0 + lagrange.abs()));
    }

    #[test]
    fn rhs_satisfies_the_third_order_equation((g, u, ud, _) in jet_and_metric(), m in -2.0..2.0f64) {
        let p = ModelParams::new(m, 0.0, g);
        let f = rhs_f(&u, &ud, &p).unwrap();
        let e = ep_expression(&Jet2Point::new(u, ud, f), &p).unwrap();
        prop_assert!(e.amax() <= 1e-10 * (1.0 + f.amax()));
    }

    #[test]
    fn psi_is_homogeneous((g, u, ud, _) in jet_and_metric(), s in 0.2..3.0f64) {
        // Psi has weight 2 under (u, u') -> (s u, s^2 u')
        let a = psi(&u, &ud, 0.0, g).unwrap();
        let b = psi(&(u * s), &(ud * (s * s)), 0.0, g).unwrap();
        prop_assert!((b - a * s * s).abs() <= 1e-11 * (1.0 + b.abs()));
    }

    #[test]
    fn attachment_without_cross_term((g, u, ud, _) in jet_and_metric(), m in -2.0..2.0f64) {
        let p = ModelParams::new(m, 0.0, g);
        let cc = attached_connection(&u, &ud, &p).unwrap();
        let mult = attached_multipliers(&u, &ud, &p).unwrap();
        let f = rhs_f(&u, &ud, &p).unwrap();
        prop_assert!((autoparallel_rhs(&cc, &mult, &u, &ud) - f).amax() <= 1e-9 * (1.0 + f.amax()));
    }

    #[test]
    fn projection_ignores_parameter_changes(x in vec3(2.0), u in vec3(2.0), ud in vec3(2.0), s in 0.2..3.0f64, eps in -2.0..2.0f64) {
        prop_assume!(u[0].abs() > 0.2);
        let base = project_state(&HomogeneousState::new(x, u, ud)).unwrap();
        let moved = project_state(&HomogeneousState::new(x, u * s, (ud + u * eps) * (s * s))).unwrap();
        prop_assert!((base.v - moved.v).amax() <= 1e-12 * (1.0 + base.v.amax()));
        prop_assert!((base.vprime - moved.vprime).amax() <= 1e-10 * (1.0 + base.vprime.amax()));
    }
}
