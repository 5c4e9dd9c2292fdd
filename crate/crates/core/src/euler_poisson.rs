//! The third-order Euler–Poisson expression of the (pseudo-)Euclidean group,
//! its contact-space form, the Lagrangian family producing it, and an
//! independent finite-difference Euler–Poisson operator used as an oracle.

use std::sync::Arc;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{cross, dot, dual2, isometry_defect, timelike_square, triple, Mat3, Metric, Vec2, Vec3};

pub type Mat2 = Matrix2<f64>;

/// Threshold on `|<u x e, u x e>|` below which `L_(rho)` is singular.
pub const EPS_SING: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Coupling of the `u' (u.u) - u (u'.u)` term.
    pub m: f64,
    /// Free constant of the connection (`A`).
    pub a: f64,
    pub metric: Metric,
}

impl ModelParams {
    pub fn new(m: f64, a: f64, metric: Metric) -> Self {
        Self { m, a, metric }
    }
}

/// Velocity data `(u, u', u'')` of a curve at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2Point {
    pub u: Vec3,
    pub udot: Vec3,
    pub uddot: Vec3,
}

impl Jet2Point {
    pub fn new(u: Vec3, udot: Vec3, uddot: Vec3) -> Self {
        Self { u, udot, uddot }
    }

    pub fn transformed(&self, r: &Mat3) -> Self {
        Self::new(r * self.u, r * self.udot, r * self.uddot)
    }
}

/// `(v, v', v'')` on the contact chart `R x T'E^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactJet {
    pub v: Vec2,
    pub vprime: Vec2,
    pub vsecond: Vec2,
}

impl ContactJet {
    pub fn new(v: Vec2, vprime: Vec2, vsecond: Vec2) -> Self {
        Self { v, vprime, vsecond }
    }
}

/// Covariant Euler–Poisson expression.
///
/// Evaluated as `G (u'' x u / |u|^3 - 3 (u' x u)(u'.u) / |u|^5
/// + m (u' (u.u) - u (u'.u)) / |u|^3)` with the metric cross product, so the
/// result contracts to zero with `u` and transforms with `R^{-T}`.
pub fn ep_expression(p: &Jet2Point, params: &ModelParams) -> Result<Vec3> {
    let g = params.metric;
    let n = timelike_square(&p.u, g)?;
    let speed = n.sqrt();
    let s3 = n * speed;
    let s5 = s3 * n;
    let ud_u = dot(&p.udot, &p.u, g);
    let contra = cross(&p.uddot, &p.u, g) / s3 - cross(&p.udot, &p.u, g) * (3.0 * ud_u / s5)
        + (p.udot * n - p.u * ud_u) * (params.m / s3);
    Ok(g.lower(&contra))
}

/// Contact-space Euler–Poisson expression (Euclidean plane).
pub fn ep_reduced(c: &ContactJet, m: f64) -> Result<Vec2> {
    let s = 1.0 + c.v.dot(&c.v);
    if !(s > 0.0) {
        return Err(Error::ChartViolation("1 + v.v must be positive"));
    }
    let vp_v = c.vprime.dot(&c.v);
    let s32 = s * s.sqrt();
    let s52 = s32 * s;
    Ok(-dual2(&c.vsecond) / s32 + dual2(&c.vprime) * (3.0 * vp_v / s52) + (c.vprime * s - c.v * vp_v) * (m / s32))
}

/// A function `phi(u)` with `u . grad(phi) = 0`, supplied with its gradient.
pub trait GaugePotential: Send + Sync {
    fn value(&self, u: &Vec3) -> f64;
    fn gradient(&self, u: &Vec3) -> Vec3;
}

/// `phi(u) = u^i u^j / |u|_E^2`, homogeneous of degree zero.
#[derive(Debug, Clone, Copy)]
pub struct RatioPotential {
    pub i: usize,
    pub j: usize,
    pub scale: f64,
}

impl GaugePotential for RatioPotential {
    fn value(&self, u: &Vec3) -> f64 {
        self.scale * u[self.i] * u[self.j] / u.norm_squared()
    }

    fn gradient(&self, u: &Vec3) -> Vec3 {
        let r2 = u.norm_squared();
        let mut grad = u * (-2.0 * u[self.i] * u[self.j] / (r2 * r2));
        grad[self.i] += u[self.j] / r2;
        grad[self.j] += u[self.i] / r2;
        grad * self.scale
    }
}

/// `u' . grad(phi) + a . u`: adds a total derivative to a Lagrangian.
#[derive(Clone, Default)]
pub struct GaugeTerm {
    pub potential: Option<Arc<dyn GaugePotential>>,
    /// Constant row vector `a`, contracted with `u` without the metric.
    pub avec: Vec3,
}

impl std::fmt::Debug for GaugeTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaugeTerm")
            .field("potential", &self.potential.is_some())
            .field("avec", &self.avec)
            .finish()
    }
}

impl GaugeTerm {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(potential: Option<Arc<dyn GaugePotential>>, avec: Vec3) -> Self {
        Self { potential, avec }
    }

    pub fn value(&self, u: &Vec3, udot: &Vec3) -> f64 {
        let phi_term = self.potential.as_ref().map_or(0.0, |phi| udot.dot(&phi.gradient(u)));
        phi_term + self.avec.dot(u)
    }

    /// Checks `u . grad(phi) = 0` and the supplied gradient by central
    /// differences at the given points.
    pub fn check(&self, points: &[Vec3]) -> Result<()> {
        const TOL: f64 = 1e-6;
        const H: f64 = 1e-5;
        let Some(phi) = self.potential.as_ref() else {
            return Ok(());
        };
        for u in points {
            let radial = (phi.value(&(u * (1.0 + H))) - phi.value(&(u * (1.0 - H)))) / (2.0 * H);
            if radial.abs() > TOL {
                return Err(Error::GaugeNotHomogeneous(radial));
            }
            let grad = phi.gradient(u);
            for k in 0..3 {
                let mut e = Vec3::zeros();
                e[k] = H;
                let fd = (phi.value(&(u + e)) - phi.value(&(u - e))) / (2.0 * H);
                if (fd - grad[k]).abs() > TOL {
                    return Err(Error::GaugeNotHomogeneous(fd - grad[k]));
                }
            }
        }
        Ok(())
    }
}

/// Member `rho` of the Lagrangian family whose Euler–Poisson expression is
/// [`ep_expression`]:
///
/// `u_rho [u, u', e_rho] / (|u| <u x e_rho, u x e_rho>) - m |u| + gauge`.
pub fn lagrangian(rho: usize, u: &Vec3, udot: &Vec3, params: &ModelParams, gauge: &GaugeTerm) -> Result<f64> {
    assert!(rho < 3, "frame axis out of range");
    let g = params.metric;
    let speed = timelike_square(u, g)?.sqrt();
    let mut axis = Vec3::zeros();
    axis[rho] = 1.0;
    let w = cross(u, &axis, g);
    let w2 = dot(&w, &w, g);
    if w2.abs() <= EPS_SING {
        return Err(Error::AxisSingular { axis: rho, value: w2 });
    }
    let u_rho = g.diag()[rho] * u[rho];
    Ok(u_rho * triple(u, udot, &axis) / (speed * w2) - params.m * speed + gauge.value(u, udot))
}

/// `x(z) = c0 + c1 z + c2 z^2 + c3 z^3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicCurve {
    pub coeffs: [Vec3; 4],
}

impl CubicCurve {
    /// The cubic with the given position and derivatives (up to third) at `z = 0`.
    pub fn through(x: Vec3, u: Vec3, udot: Vec3, uddot: Vec3) -> Self {
        Self {
            coeffs: [x, u, udot / 2.0, uddot / 6.0],
        }
    }

    pub fn position(&self, z: f64) -> Vec3 {
        let [c0, c1, c2, c3] = &self.coeffs;
        c0 + (c1 + (c2 + c3 * z) * z) * z
    }

    pub fn velocity(&self, z: f64) -> Vec3 {
        let [_, c1, c2, c3] = &self.coeffs;
        c1 + (c2 * 2.0 + c3 * (3.0 * z)) * z
    }

    pub fn acceleration(&self, z: f64) -> Vec3 {
        let [_, _, c2, c3] = &self.coeffs;
        c2 * 2.0 + c3 * (6.0 * z)
    }

    pub fn jerk(&self) -> Vec3 {
        self.coeffs[3] * 6.0
    }

    pub fn jet(&self, z: f64) -> Jet2Point {
        Jet2Point::new(self.velocity(z), self.acceleration(z), self.jerk())
    }
}

/// Default step of [`ep_operator_oracle`].
pub const ORACLE_STEP: f64 = 1e-3;

fn d1_stencil(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)
}

fn d2_stencil(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-f(-2.0 * h) + 16.0 * f(-h) - 30.0 * f(0.0) + 16.0 * f(h) - f(2.0 * h)) / (12.0 * h * h)
}

/// Euler–Poisson expression `-D(dL/du) + D^2(dL/du')` of an autonomous
/// Lagrangian `L(u, u')` along `curve` at `zeta`.
///
/// Partials of `L` and total derivatives along the curve are both taken with
/// five-point central stencils of step `h`; the curve itself is exact.
pub fn ep_operator_oracle<L>(lagr: L, curve: &CubicCurve, zeta: f64, h: f64) -> Result<Vec3>
where
    L: Fn(&Vec3, &Vec3) -> f64,
{
    if !(1e-6..=1e-2).contains(&h) {
        return Err(Error::StepOutOfRange(h));
    }
    let partial = |rho: usize, wrt_udot: bool, z: f64| {
        let u = curve.velocity(z);
        let ud = curve.acceleration(z);
        d1_stencil(
            |s| {
                let mut du = Vec3::zeros();
                du[rho] = s;
                if wrt_udot {
                    lagr(&u, &(ud + du))
                } else {
                    lagr(&(u + du), &ud)
                }
            },
            h,
        )
    };
    let mut out = Vec3::zeros();
    for rho in 0..3 {
        let d_pu = d1_stencil(|s| partial(rho, false, zeta + s), h);
        let dd_pud = d2_stencil(|s| partial(rho, true, zeta + s), h);
        out[rho] = -d_pu + dd_pud;
    }
    Ok(out)
}

/// Coefficients of `E = A v'' + (v'.d_v)A v' + B v' + c` on the contact chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineCoeffs {
    pub a: Mat2,
    pub b: Mat2,
    pub c: Vec2,
}

impl AffineCoeffs {
    pub fn to_array(&self) -> [f64; 10] {
        [
            self.a[(0, 0)],
            self.a[(0, 1)],
            self.a[(1, 0)],
            self.a[(1, 1)],
            self.b[(0, 0)],
            self.b[(0, 1)],
            self.b[(1, 0)],
            self.b[(1, 1)],
            self.c[0],
            self.c[1],
        ]
    }

    pub fn skew_defect(&self) -> f64 {
        (self.a + self.a.transpose()).amax()
    }
}

/// `e_ab` with `e_12 = +1`.
fn levi_civita2() -> Mat2 {
    Mat2::new(0.0, 1.0, -1.0, 0.0)
}

fn reduced_coeffs(v: &Vec2, m: f64) -> Result<(AffineCoeffs, [Mat2; 2])> {
    let s = 1.0 + v.dot(v);
    if !(s > 0.0) {
        return Err(Error::ChartViolation("1 + v.v must be positive"));
    }
    let s12 = s.sqrt();
    let s32 = s * s12;
    let s52 = s32 * s;
    let eps = levi_civita2();
    let a = eps / s32;
    // d_{v^c} A
    let grad_a = [eps * (-3.0 * v[0] / s52), eps * (-3.0 * v[1] / s52)];
    let b = (Mat2::identity() * s - v * v.transpose()) * (m / s32);
    Ok((AffineCoeffs { a, b, c: Vec2::zeros() }, grad_a))
}

/// Closed-form `A`, `B`, `c` of the contact-space expression at `v`,
/// checked against [`ep_reduced`] before being returned.
pub fn extract_affine_coeffs(v: &Vec2, m: f64) -> Result<AffineCoeffs> {
    const PROBES: [[f64; 4]; 3] = [[0.7, -0.3, 1.1, 0.4], [-1.3, 0.5, -0.2, 2.0], [0.25, 1.75, -0.9, -0.6]];
    let (coeffs, grad_a) = reduced_coeffs(v, m)?;
    for probe in PROBES {
        let vp = Vec2::new(probe[0], probe[1]);
        let vs = Vec2::new(probe[2], probe[3]);
        let dir_a = grad_a[0] * vp[0] + grad_a[1] * vp[1];
        let affine = coeffs.a * vs + dir_a * vp + coeffs.b * vp + coeffs.c;
        let direct = ep_reduced(&ContactJet::new(*v, vp, vs), m)?;
        let defect = (affine - direct).amax();
        if defect > 1e-10 * (1.0 + direct.amax()) {
            return Err(Error::CoefficientMismatch(defect));
        }
    }
    Ok(coeffs)
}

/// Source of affine coefficients as functions of `(t, x, v)`.
pub trait AffineField {
    fn coeffs(&self, t: f64, x: &Vec2, v: &Vec2) -> Result<AffineCoeffs>;
}

/// The coefficients of the contact-space expression, which depend on `v` only.
#[derive(Debug, Clone, Copy)]
pub struct ReducedField {
    pub m: f64,
}

impl AffineField for ReducedField {
    fn coeffs(&self, _t: f64, _x: &Vec2, v: &Vec2) -> Result<AffineCoeffs> {
        extract_affine_coeffs(v, self.m)
    }
}

/// Max-abs residual of each of the six Helmholtz conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HelmholtzReport {
    pub blocks: [f64; 6],
}

impl HelmholtzReport {
    pub fn max(&self) -> f64 {
        self.blocks.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
struct JetPoint {
    t: f64,
    x: Vec2,
    v: Vec2,
}

type Arr = [f64; 10];

fn ia(a: usize, b: usize) -> usize {
    2 * a + b
}
fn ib(a: usize, b: usize) -> usize {
    4 + 2 * a + b
}
fn ic(a: usize) -> usize {
    8 + a
}

fn lin(x: &Arr, y: &Arr, ax: f64, ay: f64) -> Arr {
    std::array::from_fn(|k| ax * x[k] + ay * y[k])
}

/// Central-difference calculus on array-valued functions of `(t, x, v)`.
struct Calculus<'a> {
    f: &'a dyn Fn(&JetPoint) -> Result<Arr>,
    h: f64,
}

impl Calculus<'_> {
    fn at(&self, p: &JetPoint) -> Result<Arr> {
        (self.f)(p)
    }

    fn shifted(p: &JetPoint, dt: f64, dx: Vec2, dv: Vec2) -> JetPoint {
        JetPoint {
            t: p.t + dt,
            x: p.x + dx,
            v: p.v + dv,
        }
    }

    fn unit(c: usize) -> Vec2 {
        let mut e = Vec2::zeros();
        e[c] = 1.0;
        e
    }

    /// `d/dv^c` of `g`.
    fn dv<G>(&self, g: &G, p: &JetPoint, c: usize) -> Result<Arr>
    where
        G: Fn(&JetPoint) -> Result<Arr>,
    {
        let e = Self::unit(c) * self.h;
        let plus = g(&Self::shifted(p, 0.0, Vec2::zeros(), e))?;
        let minus = g(&Self::shifted(p, 0.0, Vec2::zeros(), -e))?;
        Ok(lin(&plus, &minus, 0.5 / self.h, -0.5 / self.h))
    }

    /// `d/dx^c` of `g`.
    fn dx<G>(&self, g: &G, p: &JetPoint, c: usize) -> Result<Arr>
    where
        G: Fn(&JetPoint) -> Result<Arr>,
    {
        let e = Self::unit(c) * self.h;
        let plus = g(&Self::shifted(p, 0.0, e, Vec2::zeros()))?;
        let minus = g(&Self::shifted(p, 0.0, -e, Vec2::zeros()))?;
        Ok(lin(&plus, &minus, 0.5 / self.h, -0.5 / self.h))
    }

    /// `D1^k g` with `D1 = d_t + v.d_x`, a constant direction at fixed `v`.
    fn d1_pow<G>(&self, g: &G, p: &JetPoint, k: u32) -> Result<Arr>
    where
        G: Fn(&JetPoint) -> Result<Arr>,
    {
        let h = self.h;
        let along = |s: f64| g(&Self::shifted(p, s, p.v * s, Vec2::zeros()));
        match k {
            1 => Ok(lin(&along(h)?, &along(-h)?, 0.5 / h, -0.5 / h)),
            2 => {
                let mid = along(0.0)?;
                let sum = lin(&along(h)?, &along(-h)?, 1.0, 1.0);
                Ok(lin(&sum, &mid, 1.0 / (h * h), -2.0 / (h * h)))
            }
            3 => {
                let outer = lin(&along(2.0 * h)?, &along(-2.0 * h)?, 1.0, -1.0);
                let inner = lin(&along(h)?, &along(-h)?, 1.0, -1.0);
                let denom = 2.0 * h * h * h;
                Ok(lin(&outer, &inner, 1.0 / denom, -2.0 / denom))
            }
            _ => unreachable!("only D1, D1^2 and D1^3 occur"),
        }
    }
}

/// Residuals of the six Helmholtz conditions for a general coefficient field
/// at `(t, x, v)`; all derivatives by central differences with step `h`.
pub fn helmholtz_residuals_for(field: &dyn AffineField, t: f64, x: &Vec2, v: &Vec2, h: f64) -> Result<HelmholtzReport> {
    let f = |p: &JetPoint| field.coeffs(p.t, &p.x, &p.v).map(|c| c.to_array());
    let calc = Calculus { f: &f, h };
    let p = JetPoint { t, x: *x, v: *v };
    let base = calc.at(&p)?;

    let dv: Vec<Arr> = (0..2).map(|c| calc.dv(&f, &p, c)).collect::<Result<_>>()?;
    let dx: Vec<Arr> = (0..2).map(|c| calc.dx(&f, &p, c)).collect::<Result<_>>()?;
    let d1 = calc.d1_pow(&f, &p, 1)?;
    let d1_cubed = calc.d1_pow(&f, &p, 3)?;
    // D1 d_v^c and D1^2 d_v^c
    let mut d1_dv = Vec::with_capacity(2);
    let mut d1sq_dv = Vec::with_capacity(2);
    for c in 0..2 {
        let g = |q: &JetPoint| calc.dv(&f, q, c);
        d1_dv.push(calc.d1_pow(&g, &p, 1)?);
        d1sq_dv.push(calc.d1_pow(&g, &p, 2)?);
    }
    // d_v^c d_v^d
    let mut dv_dv = [[[0.0; 10]; 2]; 2];
    for c in 0..2 {
        for d in 0..2 {
            let g = |q: &JetPoint| calc.dv(&f, q, d);
            dv_dv[c][d] = calc.dv(&g, &p, c)?;
        }
    }
    // D1 d_x^c
    let mut d1_dx = Vec::with_capacity(2);
    for c in 0..2 {
        let g = |q: &JetPoint| calc.dx(&f, q, c);
        d1_dx.push(calc.d1_pow(&g, &p, 1)?);
    }
    // D1 d_v^a c_b
    let antisym3 = |t: &dyn Fn(usize, usize, usize) -> f64, a: usize, b: usize, c: usize| {
        (t(a, b, c) + t(b, c, a) + t(c, a, b) - t(b, a, c) - t(a, c, b) - t(c, b, a)) / 6.0
    };

    let mut blocks = [0.0f64; 6];
    let mut bump = |k: usize, r: f64| blocks[k] = blocks[k].max(r.abs());
    for a in 0..2 {
        for b in 0..2 {
            // block 2: 2 B_[ab] - 3 D1 A_ab
            bump(1, (base[ib(a, b)] - base[ib(b, a)]) - 3.0 * d1[ia(a, b)]);
            // block 4: d_v(a c_b) - D1 B_(ab)
            bump(
                3,
                0.5 * (dv[a][ic(b)] + dv[b][ic(a)]) - 0.5 * (d1[ib(a, b)] + d1[ib(b, a)]),
            );
            // block 6: 4 d_x[a c_b] - 2 D1 d_v[a c_b] - D1^3 A_ab
            let dx_curl_c = 0.5 * (dx[a][ic(b)] - dx[b][ic(a)]);
            let d1_dv_curl_c = 0.5 * (d1_dv[a][ic(b)] - d1_dv[b][ic(a)]);
            bump(5, 4.0 * dx_curl_c - 2.0 * d1_dv_curl_c - d1_cubed[ia(a, b)]);
            for c in 0..2 {
                // block 1: d_v[a A_bc]
                let dva = |i: usize, j: usize, k: usize| dv[i][ia(j, k)];
                bump(0, antisym3(&dva, a, b, c));
                // block 3
                let r3 = (dv[a][ib(b, c)] - dv[b][ib(a, c)]) - 2.0 * (dx[a][ia(b, c)] - dx[b][ia(a, c)])
                    + dx[c][ia(a, b)]
                    + 2.0 * d1_dv[c][ia(a, b)];
                bump(2, r3);
                // block 5
                let dxa = |i: usize, j: usize, k: usize| d1_dx[i][ia(j, k)];
                let r5 = (dv_dv[c][a][ic(b)] - dv_dv[c][b][ic(a)]) - 2.0 * (dx[a][ib(b, c)] - dx[b][ib(a, c)])
                    + d1sq_dv[c][ia(a, b)]
                    + 6.0 * antisym3(&dxa, a, b, c);
                bump(4, r5);
            }
        }
    }
    Ok(HelmholtzReport { blocks })
}

/// Helmholtz residuals of the contact-space expression at `v`.
pub fn helmholtz_residuals(v: &Vec2, m: f64, h: f64) -> Result<HelmholtzReport> {
    helmholtz_residuals_for(&ReducedField { m }, 0.0, &Vec2::zeros(), v, h)
}

/// `|E(Ru, Ru', Ru'') - R^{-T} E(u, u', u'')|_inf`.
pub fn equivariance_residual(p: &Jet2Point, params: &ModelParams, r: &Mat3) -> Result<f64> {
    let g = params.metric;
    let defect = isometry_defect(r, g);
    if defect > 1e-10 {
        return Err(Error::NotAnIsometry(defect));
    }
    let gram = g.gram();
    let r_inv_t = gram * r * gram;
    let lhs = ep_expression(&p.transformed(r), params)?;
    let rhs = r_inv_t * ep_expression(p, params)?;
    Ok((lhs - rhs).amax())
}
