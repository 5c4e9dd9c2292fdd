//! The projection from second-order velocities onto contact elements,
//! `(x, u, u') -> (t, x^a, v, v')` with `v = u^a/u^0`, and the
//! correspondences between homogeneous and contact-space quantities.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::euler_poisson::{AffineCoeffs, ContactJet, Jet2Point, Mat2};
use crate::metric::{Vec2, Vec3, EPS_NULL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousState {
    pub x: Vec3,
    pub u: Vec3,
    pub udot: Vec3,
}

impl HomogeneousState {
    pub fn new(x: Vec3, u: Vec3, udot: Vec3) -> Self {
        Self { x, u, udot }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContactState {
    pub t: f64,
    pub x: Vec2,
    pub v: Vec2,
    pub vprime: Vec2,
}

fn chart(u0: f64) -> Result<f64> {
    if u0.abs() > EPS_NULL {
        Ok(u0)
    } else {
        Err(Error::ChartViolation("u0 must be nonzero"))
    }
}

pub fn project_state(s: &HomogeneousState) -> Result<ContactState> {
    let u0 = chart(s.u[0])?;
    let ua = Vec2::new(s.u[1], s.u[2]);
    let uda = Vec2::new(s.udot[1], s.udot[2]);
    Ok(ContactState {
        t: s.x[0],
        x: Vec2::new(s.x[1], s.x[2]),
        v: ua / u0,
        vprime: uda / (u0 * u0) - ua * (s.udot[0] / (u0 * u0 * u0)),
    })
}

/// Contact jet `(v, v', v'')` of a curve with velocity data `(u, u', u'')`.
///
/// `v''` is the parameter derivative of `v'` divided by `u^0`:
/// `v'' = u''^a/u0^3 - 3 u'^0 u'^a/u0^4 - u''^0 u^a/u0^4 + 3 (u'^0)^2 u^a/u0^5`.
pub fn contact_jet(p: &Jet2Point) -> Result<ContactJet> {
    let u0 = chart(p.u[0])?;
    let ud0 = p.udot[0];
    let udd0 = p.uddot[0];
    let ua = Vec2::new(p.u[1], p.u[2]);
    let uda = Vec2::new(p.udot[1], p.udot[2]);
    let udda = Vec2::new(p.uddot[1], p.uddot[2]);
    let u2 = u0 * u0;
    let u3 = u2 * u0;
    let u4 = u3 * u0;
    let v = ua / u0;
    let vprime = uda / u2 - ua * (ud0 / u3);
    let vsecond = udda / u3 - uda * (3.0 * ud0 / u4) - ua * (udd0 / u4) + ua * (3.0 * ud0 * ud0 / (u4 * u0));
    Ok(ContactJet::new(v, vprime, vsecond))
}

/// Contact-space components `E_a = e_a / u^0` of a density `e` orthogonal to `u`.
pub fn reduce_ep(density: &Vec3, u: &Vec3) -> Result<Vec2> {
    let u0 = chart(u[0])?;
    let ea = Vec2::new(density[1], density[2]);
    let ua = Vec2::new(u[1], u[2]);
    let predicted = -ua.dot(&ea) / u0;
    let defect = (density[0] - predicted).abs();
    let scale = 1.0 + density.amax() * (1.0 + ua.amax() / u0.abs());
    if defect > 1e-10 * scale {
        return Err(Error::InconsistentDensity(defect));
    }
    Ok(ea / u0)
}

/// Homogeneous Lagrangian `u^0 L`.
pub fn lift_lagrangian(l: f64, u0: f64) -> Result<f64> {
    Ok(chart(u0)? * l)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousCoeffs {
    pub a: Mat2,
    pub b: Mat2,
    pub c: Vec2,
}

/// Scales contact-space coefficients to the homogeneous ones:
/// `A / u0^2`, `B / u0`, `u0 c`.
pub fn coeff_correspondence(c2: &AffineCoeffs, u0: f64) -> Result<HomogeneousCoeffs> {
    let u0 = chart(u0)?;
    Ok(HomogeneousCoeffs {
        a: c2.a / (u0 * u0),
        b: c2.b / u0,
        c: c2.c * u0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euler_poisson::{ep_expression, ep_reduced, CubicCurve, ModelParams};
    use crate::metric::Metric;

    fn v3(a: f64, b: f64, c: f64) -> Vec3 {
        Vec3::new(a, b, c)
    }

    #[test]
    fn project_examples() {
        let s = HomogeneousState::new(v3(0., 1., 2.), v3(2., 4., 6.), v3(1., 1., 1.));
        let c = project_state(&s).unwrap();
        assert_eq!(c.t, 0.0);
        assert_eq!(c.x, Vec2::new(1., 2.));
        assert_eq!(c.v, Vec2::new(2., 3.));
        assert_eq!(c.vprime, Vec2::new(-0.25, -0.5));

        let rest = HomogeneousState::new(Vec3::zeros(), v3(1., 0., 0.), Vec3::zeros());
        let c = project_state(&rest).unwrap();
        assert_eq!((c.v, c.vprime), (Vec2::zeros(), Vec2::zeros()));

        let scaled = HomogeneousState::new(s.x, s.u * 2.0, s.udot * 4.0);
        assert_eq!(project_state(&scaled).unwrap(), project_state(&s).unwrap());
    }

    #[test]
    fn project_is_blind_to_udot_along_u() {
        let s = HomogeneousState::new(v3(0.3, 1., 2.), v3(1.3, -0.4, 0.8), v3(0.2, 0.9, -1.1));
        let base = project_state(&s).unwrap();
        for eps in [0.5, -2.0, 7.0] {
            let shifted = HomogeneousState::new(s.x, s.u, s.udot + s.u * eps);
            let c = project_state(&shifted).unwrap();
            assert!((c.vprime - base.vprime).amax() < 1e-14);
            assert_eq!(c.v, base.v);
        }
    }

    #[test]
    fn chart_violation() {
        let s = HomogeneousState::new(Vec3::zeros(), v3(0., 1., 1.), Vec3::zeros());
        assert!(matches!(project_state(&s), Err(Error::ChartViolation(_))));
        assert!(lift_lagrangian(1.0, 0.0).is_err());
    }

    #[test]
    fn reduce_examples() {
        assert_eq!(reduce_ep(&v3(0., 2., 0.), &v3(1., 0., 0.)).unwrap(), Vec2::new(2., 0.));
        assert_eq!(reduce_ep(&Vec3::zeros(), &v3(0.5, 1., -2.)).unwrap(), Vec2::zeros());
        assert!(matches!(
            reduce_ep(&v3(1., 0., 0.), &v3(1., 0., 0.)),
            Err(Error::InconsistentDensity(_))
        ));
    }

    #[test]
    fn lift_examples() {
        assert_eq!(lift_lagrangian(3.0, 2.0).unwrap(), 6.0);
        let l = -1.0 / 2f64.sqrt();
        assert_eq!(lift_lagrangian(l, 1.0).unwrap(), l);
        assert_eq!(lift_lagrangian(0.0, -4.0).unwrap(), 0.0);
    }

    #[test]
    fn coefficient_scalings() {
        let c2 = AffineCoeffs {
            a: Mat2::new(0., 1., -1., 0.),
            b: Mat2::identity(),
            c: Vec2::new(1., 1.),
        };
        let h = coeff_correspondence(&c2, 2.0).unwrap();
        assert_eq!(h.a, Mat2::new(0., 0.25, -0.25, 0.));
        assert_eq!(h.b, Mat2::identity() * 0.5);
        let h = coeff_correspondence(&c2, 3.0).unwrap();
        assert_eq!(h.c, Vec2::new(3., 3.));
        assert_eq!(h.a + h.a.transpose(), Mat2::zeros());
    }

    #[test]
    fn contact_jet_matches_differences_of_projection() {
        // v' from project_state along a cubic, differentiated in x^0.
        let curve = CubicCurve::through(
            v3(0.1, 0.2, -0.3),
            v3(1.2, 0.4, -0.7),
            v3(0.3, -0.5, 0.6),
            v3(-0.4, 0.8, 0.2),
        );
        let h = 1e-5;
        let state = |z: f64| {
            let s = HomogeneousState::new(curve.position(z), curve.velocity(z), curve.acceleration(z));
            project_state(&s).unwrap()
        };
        let jet = contact_jet(&curve.jet(0.0)).unwrap();
        let (plus, minus) = (state(h), state(-h));
        let vsecond_fd = (plus.vprime - minus.vprime) / (plus.t - minus.t);
        let vprime_fd = (plus.v - minus.v) / (plus.t - minus.t);
        assert!(
            (jet.vsecond - vsecond_fd).amax() < 1e-7,
            "{} vs {}",
            jet.vsecond,
            vsecond_fd
        );
        assert!((jet.vprime - vprime_fd).amax() < 1e-7);
    }

    #[test]
    fn reduction_consistency_example() {
        let p = Jet2Point::new(v3(1., 0., 0.), v3(0., 1., 0.), v3(0., 0., 1.));
        let params = ModelParams::new(1.0, 0.0, Metric::Euclidean);
        let lhs = reduce_ep(&ep_expression(&p, &params).unwrap(), &p.u).unwrap();
        let rhs = ep_reduced(&contact_jet(&p).unwrap(), 1.0).unwrap();
        assert!((lhs - rhs).amax() < 1e-12);
        assert_eq!(lhs, Vec2::new(2., 0.));
    }
}
