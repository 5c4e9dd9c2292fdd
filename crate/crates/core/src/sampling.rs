//! Seeded random inputs. Sample `i` of a run with seed `s` draws from its own
//! ChaCha8 stream, so results do not depend on evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::euler_poisson::Jet2Point;
use crate::metric::{dot, Metric, Vec3};

pub fn sample_rng(seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

pub fn uniform_vec(rng: &mut impl Rng, lo: f64, hi: f64) -> Vec3 {
    Vec3::new(
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
    )
}

/// Timelike velocity with `u^0 > 0` and `u.u` bounded away from zero.
pub fn forward_velocity(rng: &mut impl Rng, g: Metric) -> Vec3 {
    match g {
        Metric::Euclidean => Vec3::new(
            rng.random_range(0.3..1.5),
            rng.random_range(-1.5..1.5),
            rng.random_range(-1.5..1.5),
        ),
        Metric::Pseudo => Vec3::new(
            rng.random_range(1.0..2.0),
            rng.random_range(-0.6..0.6),
            rng.random_range(-0.6..0.6),
        ),
    }
}

/// Timelike velocity; in the Euclidean case any direction with `|u| >= 0.3`.
pub fn velocity(rng: &mut impl Rng, g: Metric) -> Vec3 {
    match g {
        Metric::Euclidean => loop {
            let u = uniform_vec(rng, -1.5, 1.5);
            if u.norm() >= 0.3 {
                return u;
            }
        },
        Metric::Pseudo => {
            let u = forward_velocity(rng, g);
            if rng.random_bool(0.5) {
                u
            } else {
                -u
            }
        }
    }
}

pub fn random_jet(rng: &mut impl Rng, g: Metric) -> Jet2Point {
    let u = velocity(rng, g);
    Jet2Point::new(u, uniform_vec(rng, -1.0, 1.0), uniform_vec(rng, -1.0, 1.0))
}

/// `(u, u')` with `u' x u` well away from zero:
/// `|zeta| >= 0.04 (u.u) |u'.u'|` and `|zeta| >= 0.01 (u.u) |u'|_E^2`.
pub fn admissible_pair(rng: &mut impl Rng, g: Metric) -> (Vec3, Vec3) {
    loop {
        let u = velocity(rng, g);
        let ud = uniform_vec(rng, -1.0, 1.0);
        let (n, p, q) = (dot(&u, &u, g), dot(&ud, &u, g), dot(&ud, &ud, g));
        let zeta = (n * q - p * p).abs();
        if zeta >= 0.04 * n * q.abs() && zeta >= 0.01 * n * ud.norm_squared() {
            return (u, ud);
        }
    }
}
