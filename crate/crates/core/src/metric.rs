//! Signature-aware linear algebra on three-dimensional (pseudo-)Euclidean space.
//!
//! Vectors carry contravariant components in an orthonormal frame. The
//! index-2 signature is `diag(+1, -1, -1)` with the 0-axis timelike.

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec2 = Vector2<f64>;
pub type Mat3 = Matrix3<f64>;

/// Relative threshold below which `|v.v|` counts as null.
pub const EPS_NULL: f64 = 1e-9;

/// Signature of the ambient space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    /// index 0: `(+, +, +)`
    Euclidean,
    /// index 2: `(+, -, -)`
    Pseudo,
}

impl Metric {
    pub fn from_index(index: u32) -> Result<Self> {
        match index {
            0 => Ok(Metric::Euclidean),
            2 => Ok(Metric::Pseudo),
            other => Err(Error::InvalidMetricIndex(other)),
        }
    }

    pub fn index(self) -> u32 {
        match self {
            Metric::Euclidean => 0,
            Metric::Pseudo => 2,
        }
    }

    pub fn diag(self) -> [f64; 3] {
        match self {
            Metric::Euclidean => [1.0, 1.0, 1.0],
            Metric::Pseudo => [1.0, -1.0, -1.0],
        }
    }

    /// The Gram matrix `G`. It is its own inverse.
    pub fn gram(self) -> Mat3 {
        let d = self.diag();
        Mat3::from_diagonal(&Vec3::new(d[0], d[1], d[2]))
    }

    /// Lowers an index: `v_a = g_ab v^b`.
    pub fn lower(self, v: &Vec3) -> Vec3 {
        let d = self.diag();
        Vec3::new(d[0] * v[0], d[1] * v[1], d[2] * v[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CausalClass {
    /// `v.v > 0`
    TimelikePositive,
    /// `v.v < 0`
    SpacelikeNegative,
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norm {
    pub magnitude: f64,
    pub class: CausalClass,
}

pub fn dot(v: &Vec3, w: &Vec3, g: Metric) -> f64 {
    let d = g.diag();
    d[0] * v[0] * w[0] + d[1] * v[1] * w[1] + d[2] * v[2] * w[2]
}

pub fn classify(v: &Vec3, g: Metric) -> CausalClass {
    let q = dot(v, v, g);
    let scale = v.amax().powi(2);
    if q.abs() <= EPS_NULL * scale || scale == 0.0 {
        CausalClass::Null
    } else if q > 0.0 {
        CausalClass::TimelikePositive
    } else {
        CausalClass::SpacelikeNegative
    }
}

pub fn norm(v: &Vec3, g: Metric) -> Norm {
    Norm {
        magnitude: dot(v, v, g).abs().sqrt(),
        class: classify(v, g),
    }
}

/// Squared speed `u.u` of a velocity that must be timelike-positive.
pub fn timelike_square(u: &Vec3, g: Metric) -> Result<f64> {
    let n = dot(u, u, g);
    match classify(u, g) {
        CausalClass::TimelikePositive => Ok(n),
        _ => Err(Error::NullSpeed(n)),
    }
}

/// Metric cross product `(v x w)^a = g^aa e_abc v^b w^c`, `e_012 = +1`.
pub fn cross(v: &Vec3, w: &Vec3, g: Metric) -> Vec3 {
    g.lower(&v.cross(w))
}

/// Parallelepipedal product: determinant of the rows `(a, b, c)`.
pub fn triple(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    a.dot(&b.cross(c))
}

/// Two-dimensional dual `(*w)_a = e_ba w^b` with `e_12 = +1`.
pub fn dual2(w: &Vec2) -> Vec2 {
    Vec2::new(-w[1], w[0])
}

/// Deterministic proper (pseudo-)rotation `R` with `R^T G R = G`, `det R = 1`.
///
/// A generator `K = G S` with `S` skew-symmetric (entries uniform in
/// `[-1, 1]`) lies in the Lie algebra of the isometry group; `R = exp(K)`.
pub fn random_pseudo_rotation(seed: u64, g: Metric) -> Mat3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: f64 = rng.random_range(-1.0..=1.0);
    let b: f64 = rng.random_range(-1.0..=1.0);
    let c: f64 = rng.random_range(-1.0..=1.0);
    let skew = Mat3::new(0.0, a, b, -a, 0.0, c, -b, -c, 0.0);
    expm(&(g.gram() * skew))
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn expm(k: &Mat3) -> Mat3 {
    let norm = k.abs().row_sum().amax();
    let mut squarings = 0;
    let mut scaled = *k;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as i32;
        scaled = k / 2f64.powi(squarings);
    }
    let mut sum = Mat3::identity();
    let mut term = Mat3::identity();
    for n in 1..40 {
        term = term * scaled / n as f64;
        sum += term;
        if term.amax() < 1e-14 {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// `max |R^T G R - G|`.
pub fn isometry_defect(r: &Mat3, g: Metric) -> f64 {
    let gram = g.gram();
    (r.transpose() * gram * r - gram).amax()
}
