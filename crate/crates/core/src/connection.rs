//! The solved third-order system, its reducibility multipliers and the
//! attached second-order connection in a flat orthonormal frame.
//!
//! Derivation note for [`f_derivatives`]. With the scalar invariants
//! `n = u.u`, `p = u'.u`, `q = u'.u'` and `zeta = n q - p^2 = (u x u').(u x u')`
//! (an identity for both signatures, `det G = 1`), the right-hand side is
//!
//! ```text
//! F = 3 P u' - 3 K u - m u x u',   P = p/n,
//! K = p^2/n^2 - q/(2n) - A |zeta|^(2/3)/n.
//! ```
//!
//! Gradients and Hessians of `P` and `K` in `(n, p, q)` are elementary; they
//! are pulled back to `y = (u, u')` with
//! `grad n = (2Gu, 0)`, `grad p = (Gu', Gu)`, `grad q = (0, 2Gu')` and the
//! constant Hessians `[[2G,0],[0,0]]`, `[[0,G],[G,0]]`, `[[0,0],[0,2G]]`.
//! Products with `u'^rho`, `u^rho` contribute the cross terms of the
//! Leibniz rule; `u x u'` is bilinear, so its Hessian is the constant
//! `G (e_b x e_c)` block.

use nalgebra::{SMatrix, SVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::euler_poisson::ModelParams;
use crate::metric::{cross, dot, timelike_square, Mat3, Metric, Vec3, EPS_NULL};

type Vec6 = SVector<f64, 6>;
type Mat6 = SMatrix<f64, 6, 6>;

/// `|u' x u| >= DERIV_GUARD |u| |u'|` is required for second derivatives when `A != 0`.
pub const DERIV_GUARD: f64 = 0.1;

/// A function of `(n, p, q)` with its gradient and Hessian.
#[derive(Debug, Clone, Copy)]
struct Scalar {
    val: f64,
    d: [f64; 3],
    dd: [[f64; 3]; 3],
}

impl Scalar {
    fn zero() -> Self {
        Self {
            val: 0.0,
            d: [0.0; 3],
            dd: [[0.0; 3]; 3],
        }
    }

    fn add_scaled(mut self, other: &Scalar, k: f64) -> Self {
        self.val += k * other.val;
        for a in 0..3 {
            self.d[a] += k * other.d[a];
            for b in 0..3 {
                self.dd[a][b] += k * other.dd[a][b];
            }
        }
        self
    }
}

const N: usize = 0;
const P: usize = 1;
const Q: usize = 2;

/// Scalar invariants at `(u, u')` and their pull-back data.
#[derive(Debug, Clone, Copy)]
struct Invariants {
    n: f64,
    p: f64,
    q: f64,
    zeta: f64,
    grad: [Vec6; 3],
    hess: [Mat6; 3],
}

impl Invariants {
    fn new(u: &Vec3, udot: &Vec3, g: Metric) -> Result<Self> {
        let n = timelike_square(u, g)?;
        let p = dot(udot, u, g);
        let q = dot(udot, udot, g);
        let gu = g.lower(u);
        let gud = g.lower(udot);
        let stack = |a: Vec3, b: Vec3| Vec6::new(a[0], a[1], a[2], b[0], b[1], b[2]);
        let grad = [
            stack(gu * 2.0, Vec3::zeros()),
            stack(gud, gu),
            stack(Vec3::zeros(), gud * 2.0),
        ];
        let gram = g.gram();
        let mut hn = Mat6::zeros();
        hn.fixed_view_mut::<3, 3>(0, 0).copy_from(&(gram * 2.0));
        let mut hp = Mat6::zeros();
        hp.fixed_view_mut::<3, 3>(0, 3).copy_from(&gram);
        hp.fixed_view_mut::<3, 3>(3, 0).copy_from(&gram);
        let mut hq = Mat6::zeros();
        hq.fixed_view_mut::<3, 3>(3, 3).copy_from(&(gram * 2.0));
        Ok(Self {
            n,
            p,
            q,
            zeta: n * q - p * p,
            grad,
            hess: [hn, hp, hq],
        })
    }

    fn gradient(&self, f: &Scalar) -> Vec6 {
        self.grad[N] * f.d[N] + self.grad[P] * f.d[P] + self.grad[Q] * f.d[Q]
    }

    fn hessian(&self, f: &Scalar) -> Mat6 {
        let mut h = Mat6::zeros();
        for a in 0..3 {
            h += self.hess[a] * f.d[a];
            for b in 0..3 {
                h += self.grad[a] * self.grad[b].transpose() * f.dd[a][b];
            }
        }
        h
    }

    /// `P = p / n`
    fn ratio(&self) -> Scalar {
        let (n, p) = (self.n, self.p);
        let mut s = Scalar::zero();
        s.val = p / n;
        s.d[N] = -p / (n * n);
        s.d[P] = 1.0 / n;
        s.dd[N][N] = 2.0 * p / (n * n * n);
        s.dd[N][P] = -1.0 / (n * n);
        s.dd[P][N] = s.dd[N][P];
        s
    }

    /// `p^2 / n^2`
    fn ratio_sq(&self) -> Scalar {
        let (n, p) = (self.n, self.p);
        let n2 = n * n;
        let mut s = Scalar::zero();
        s.val = p * p / n2;
        s.d[N] = -2.0 * p * p / (n2 * n);
        s.d[P] = 2.0 * p / n2;
        s.dd[N][N] = 6.0 * p * p / (n2 * n2);
        s.dd[N][P] = -4.0 * p / (n2 * n);
        s.dd[P][N] = s.dd[N][P];
        s.dd[P][P] = 2.0 / n2;
        s
    }

    /// `q / n`
    fn accel_ratio(&self) -> Scalar {
        let (n, q) = (self.n, self.q);
        let mut s = Scalar::zero();
        s.val = q / n;
        s.d[N] = -q / (n * n);
        s.d[Q] = 1.0 / n;
        s.dd[N][N] = 2.0 * q / (n * n * n);
        s.dd[N][Q] = -1.0 / (n * n);
        s.dd[Q][N] = s.dd[N][Q];
        s
    }

    /// `|zeta|^(2/3) / n`, i.e. `|u' x u|^(4/3) / |u|^2`.
    fn cross_term(&self) -> Scalar {
        let (n, z) = (self.n, self.zeta);
        let az = z.abs();
        let w = az.powf(2.0 / 3.0);
        let w_z = (2.0 / 3.0) * z.signum() * az.powf(-1.0 / 3.0);
        let w_zz = -(2.0 / 9.0) * az.powf(-4.0 / 3.0);
        let z_d = [self.q, -2.0 * self.p, n];
        let mut z_dd = [[0.0; 3]; 3];
        z_dd[N][Q] = 1.0;
        z_dd[Q][N] = 1.0;
        z_dd[P][P] = -2.0;
        let mut wd = [0.0; 3];
        let mut wdd = [[0.0; 3]; 3];
        for a in 0..3 {
            wd[a] = w_z * z_d[a];
            for b in 0..3 {
                wdd[a][b] = w_zz * z_d[a] * z_d[b] + w_z * z_dd[a][b];
            }
        }
        // (W / n) by the quotient rule in the n-slot only
        let mut s = Scalar::zero();
        s.val = w / n;
        for a in 0..3 {
            s.d[a] = wd[a] / n - if a == N { w / (n * n) } else { 0.0 };
            for b in 0..3 {
                let mut v = wdd[a][b] / n;
                if b == N {
                    v -= wd[a] / (n * n);
                }
                if a == N {
                    v -= wd[b] / (n * n);
                }
                if a == N && b == N {
                    v += 2.0 * w / (n * n * n);
                }
                s.dd[a][b] = v;
            }
        }
        s
    }

    fn check_cross(&self, a: f64, guard: Option<f64>) -> Result<()> {
        if a == 0.0 {
            return Ok(());
        }
        let floor = match guard {
            Some(k) => k * k * self.n * self.q.abs(),
            None => EPS_NULL * (self.n * self.q.abs() + self.p * self.p),
        };
        if self.zeta.abs() <= floor || self.zeta == 0.0 {
            return Err(Error::CrossSingular(self.zeta));
        }
        Ok(())
    }

    /// `K` of the derivation note.
    fn k_coeff(&self, a: f64) -> Scalar {
        let mut k = self.ratio_sq().add_scaled(&self.accel_ratio(), -0.5);
        if a != 0.0 {
            k = k.add_scaled(&self.cross_term(), -a);
        }
        k
    }

    fn psi(&self, a: f64) -> Scalar {
        let mut s = Scalar::zero().add_scaled(&self.accel_ratio(), 1.5);
        if a != 0.0 {
            s = s.add_scaled(&self.cross_term(), 3.0 * a);
        }
        s
    }
}

/// `Psi = 3/2 (u'.u')/(u.u) + 3A |u' x u|^(4/3)/(u.u)`.
pub fn psi(u: &Vec3, udot: &Vec3, a: f64, g: Metric) -> Result<f64> {
    let inv = Invariants::new(u, udot, g)?;
    inv.check_cross(a, None)?;
    Ok(inv.psi(a).val)
}

/// Right-hand side `u''' = F(u, u')` of the solved system.
pub fn rhs_f(u: &Vec3, udot: &Vec3, params: &ModelParams) -> Result<Vec3> {
    let g = params.metric;
    let inv = Invariants::new(u, udot, g)?;
    inv.check_cross(params.a, None)?;
    let ratio = inv.p / inv.n;
    let k = inv.k_coeff(params.a).val;
    Ok(udot * (3.0 * ratio) - u * (3.0 * k) - cross(u, udot, g) * params.m)
}

/// `psi(z) = |z.z|^(2/3)` (that is `|z|^(4/3)`).
pub fn psi_of_z(z: &Vec3, g: Metric) -> f64 {
    dot(z, z, g).abs().powf(2.0 / 3.0)
}

/// First-prolongation coefficients of `F`: `F2 = dF/du'`, `F1 = dF/du`,
/// `F22[rho] = d^2 F^rho / du' du'`, `F21[rho][(beta, mu)] = d^2 F^rho / du'^beta du^mu`.
/// The `x`-derivatives `F0`, `F20` vanish (autonomous, flat frame).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FDeriv {
    pub f: Vec3,
    pub f2: Mat3,
    pub f1: Mat3,
    pub f0: Mat3,
    pub f22: [Mat3; 3],
    pub f21: [Mat3; 3],
    pub f20: [Mat3; 3],
    pub metric: Metric,
}

impl FDeriv {
    /// Coefficients with only `F` and the first derivatives set.
    pub fn first_order(f: Vec3, f1: Mat3, f2: Mat3, metric: Metric) -> Self {
        Self {
            f,
            f2,
            f1,
            f0: Mat3::zeros(),
            f22: [Mat3::zeros(); 3],
            f21: [Mat3::zeros(); 3],
            f20: [Mat3::zeros(); 3],
            metric,
        }
    }
}

/// Closed-form derivatives of [`rhs_f`].
pub fn f_derivatives(u: &Vec3, udot: &Vec3, params: &ModelParams) -> Result<FDeriv> {
    let g = params.metric;
    let m = params.m;
    let inv = Invariants::new(u, udot, g)?;
    inv.check_cross(params.a, Some(DERIV_GUARD))?;
    let ratio = inv.ratio();
    let k = inv.k_coeff(params.a);
    let grad_ratio = inv.gradient(&ratio);
    let grad_k = inv.gradient(&k);
    let hess_ratio = inv.hessian(&ratio);
    let hess_k = inv.hessian(&k);

    let e = |i: usize| {
        let mut v = Vec3::zeros();
        v[i] = 1.0;
        v
    };
    // dz/du^b = e_b x u', dz/du'^b = u x e_b, d2z/du^b du'^c = e_b x e_c
    let dz_du = Mat3::from_columns(&[0, 1, 2].map(|b| cross(&e(b), udot, g)));
    let dz_dud = Mat3::from_columns(&[0, 1, 2].map(|b| cross(u, &e(b), g)));

    let f = udot * (3.0 * ratio.val) - u * (3.0 * k.val) - cross(u, udot, g) * m;
    let mut jac = SMatrix::<f64, 3, 6>::zeros();
    for rho in 0..3 {
        for i in 0..6 {
            let mut v = 3.0 * grad_ratio[i] * udot[rho] - 3.0 * grad_k[i] * u[rho];
            if i == 3 + rho {
                v += 3.0 * ratio.val;
            }
            if i == rho {
                v -= 3.0 * k.val;
            }
            v -= m * if i < 3 { dz_du[(rho, i)] } else { dz_dud[(rho, i - 3)] };
            jac[(rho, i)] = v;
        }
    }
    let mut hess = [Mat6::zeros(); 3];
    for (rho, h) in hess.iter_mut().enumerate() {
        *h = hess_ratio * (3.0 * udot[rho]) - hess_k * (3.0 * u[rho]);
        for i in 0..6 {
            // Leibniz cross terms with u'^rho (slot 3 + rho) and u^rho (slot rho)
            h[(i, 3 + rho)] += 3.0 * grad_ratio[i];
            h[(3 + rho, i)] += 3.0 * grad_ratio[i];
            h[(i, rho)] -= 3.0 * grad_k[i];
            h[(rho, i)] -= 3.0 * grad_k[i];
        }
        if m != 0.0 {
            for b in 0..3 {
                for c in 0..3 {
                    let zbc = cross(&e(b), &e(c), g)[rho];
                    h[(b, 3 + c)] -= m * zbc;
                    h[(3 + c, b)] -= m * zbc;
                }
            }
        }
    }
    let f1 = jac.fixed_view::<3, 3>(0, 0).into_owned();
    let f2 = jac.fixed_view::<3, 3>(0, 3).into_owned();
    let f22 = hess.map(|h| h.fixed_view::<3, 3>(3, 3).into_owned());
    let f21 = hess.map(|h| h.fixed_view::<3, 3>(3, 0).into_owned());
    Ok(FDeriv {
        f,
        f2,
        f1,
        f0: Mat3::zeros(),
        f22,
        f21,
        f20: [Mat3::zeros(); 3],
        metric: g,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reducibility {
    pub mu: f64,
    pub lambda: f64,
    /// Metric norms of the parts of the two left-hand sides orthogonal to `u`.
    pub residuals: [f64; 2],
    pub reducible: bool,
}

/// Relative tolerance of the reducible / not-reducible verdict.
pub const REDUCIBLE_TOL: f64 = 1e-8;

/// Splits `3F - F1 u - 2 F2 u'` and `3u' - F2 u` into multiples of `u`
/// plus metric-orthogonal remainders.
pub fn reducibility_multipliers(fd: &FDeriv, u: &Vec3, udot: &Vec3) -> Result<Reducibility> {
    let g = fd.metric;
    let n = timelike_square(u, g)?;
    let first = fd.f * 3.0 - fd.f1 * u - fd.f2 * udot * 2.0;
    let second = udot * 3.0 - fd.f2 * u;
    let split = |lhs: Vec3| {
        let coeff = dot(&lhs, u, g) / (3.0 * n);
        let rest = lhs - u * (3.0 * coeff);
        (coeff, dot(&rest, &rest, g).abs().sqrt())
    };
    let (mu, r1) = split(first);
    let (lambda, r2) = split(second);
    let scale = 1.0 + (fd.f * 3.0).amax() + (udot * 3.0).amax();
    Ok(Reducibility {
        mu,
        lambda,
        residuals: [r1, r2],
        reducible: r1 <= REDUCIBLE_TOL * scale && r2 <= REDUCIBLE_TOL * scale,
    })
}

/// A scalar `Psi(u, u')` with its gradients in `u` and `u'`.
pub trait PsiFunction {
    fn eval(&self, u: &Vec3, udot: &Vec3) -> Result<(f64, Vec3, Vec3)>;
}

/// The `Psi` of the autogeodesic equation.
#[derive(Debug, Clone, Copy)]
pub struct ConnectionPsi {
    pub a: f64,
    pub metric: Metric,
}

impl PsiFunction for ConnectionPsi {
    fn eval(&self, u: &Vec3, udot: &Vec3) -> Result<(f64, Vec3, Vec3)> {
        let inv = Invariants::new(u, udot, self.metric)?;
        inv.check_cross(self.a, None)?;
        let s = inv.psi(self.a);
        let grad = inv.gradient(&s);
        Ok((
            s.val,
            grad.fixed_rows::<3>(0).into_owned(),
            grad.fixed_rows::<3>(3).into_owned(),
        ))
    }
}

/// `mu = (2 Psi - 2 u'.dPsi/du' - u.dPsi/du)/3`, `lambda = p/n - u.dPsi/du' / 3`
/// for `F = 3 p/n u' - 3 p^2/n^2 u - m u x u' + Psi u`.
pub fn mu_lambda_for(psi: &dyn PsiFunction, u: &Vec3, udot: &Vec3, g: Metric) -> Result<(f64, f64)> {
    let n = timelike_square(u, g)?;
    let (val, d_u, d_ud) = psi.eval(u, udot)?;
    let mu = (2.0 * val - 2.0 * udot.dot(&d_ud) - u.dot(&d_u)) / 3.0;
    let lambda = dot(u, udot, g) / n - u.dot(&d_ud) / 3.0;
    Ok((mu, lambda))
}

pub fn mu_lambda_analytic(u: &Vec3, udot: &Vec3, a: f64, g: Metric) -> Result<(f64, f64)> {
    mu_lambda_for(&ConnectionPsi { a, metric: g }, u, udot, g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Multipliers {
    pub mu: f64,
    pub lambda: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Multipliers {
    pub fn zero() -> Self {
        Self {
            mu: 0.0,
            lambda: 0.0,
            lambda1: 0.0,
            lambda2: 0.0,
        }
    }

    /// Multipliers for constant `mu`, `lambda` (all `d lambda` coefficients
    /// vanish): `lambda1 = mu - 2 lambda^2`, `lambda2 = 2 lambda`.
    pub fn for_constant(mu: f64, lambda: f64) -> Self {
        Self {
            mu,
            lambda,
            lambda1: mu - 2.0 * lambda * lambda,
            lambda2: 2.0 * lambda,
        }
    }

    pub fn is_stable(&self) -> bool {
        self.lambda1 == 0.0 && self.lambda2 == 0.0
    }
}

/// Coefficients of `d lambda = l0 . omega + l1 . dU + l2 . dU'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaDifferential {
    pub l0: Vec3,
    pub l1: Vec3,
    pub l2: Vec3,
}

/// General `lambda^(1)` with the operator missing between the second and
/// third terms of the printed formula read as `+`. Not used by the attached
/// pipeline, where `mu = lambda = 0`.
#[allow(clippy::too_many_arguments)]
pub fn lambda1_printed_sum_reading(
    mu: f64,
    lambda: f64,
    dl: &LambdaDifferential,
    u: &Vec3,
    udot: &Vec3,
    uddot: &Vec3,
    f2: &Mat3,
) -> f64 {
    dl.l0.dot(u) + dl.l1.dot(udot) + dl.l2.dot(uddot) + mu * (1.0 - dl.l2.dot(u))
        - lambda * (dl.l1.dot(u) + (2.0 / 3.0) * dl.l2.dot(&(f2 * u)))
        - 2.0 * lambda * lambda
}

/// `Gamma1 = Γ^ρ_β`; `gamma2[rho]` is the symmetric matrix `Γ^ρ_βγ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectionCoeffs {
    pub gamma1: Mat3,
    pub gamma2: [Mat3; 3],
}

/// Connection coefficients built from prolongation coefficients:
/// `Γ^ρ_β = F2/3`, `Γ^ρ_βγ = sym(Π)` with
/// `Π = F20/3 + (F22 F1 + F21 F2)/9 + 2/27 F22 F2 F2`.
pub fn connection_from(fd: &FDeriv) -> ConnectionCoeffs {
    let gamma1 = fd.f2 / 3.0;
    let f2_sq = fd.f2 * fd.f2;
    let gamma2 = [0, 1, 2].map(|rho| {
        let pi =
            fd.f20[rho] / 3.0 + (fd.f22[rho] * fd.f1 + fd.f21[rho] * fd.f2) / 9.0 + fd.f22[rho] * f2_sq * (2.0 / 27.0);
        (pi + pi.transpose()) * 0.5
    });
    ConnectionCoeffs { gamma1, gamma2 }
}

pub fn attached_connection(u: &Vec3, udot: &Vec3, params: &ModelParams) -> Result<ConnectionCoeffs> {
    Ok(connection_from(&f_derivatives(u, udot, params)?))
}

/// Multipliers of the attached connection: verifies strict reducibility and
/// returns the stable (all-zero) multipliers.
pub fn attached_multipliers(u: &Vec3, udot: &Vec3, params: &ModelParams) -> Result<Multipliers> {
    let fd = f_derivatives(u, udot, params)?;
    let red = reducibility_multipliers(&fd, u, udot)?;
    let scale = 1.0 + (fd.f * 3.0).amax() + (udot * 3.0).amax();
    if !red.reducible || red.mu.abs() > REDUCIBLE_TOL * scale || red.lambda.abs() > REDUCIBLE_TOL * scale {
        return Err(Error::NotStrictlyReducible {
            mu: red.mu,
            lambda: red.lambda,
        });
    }
    Ok(Multipliers::zero())
}

/// Autoparallel transport `U'' = Γ_μ U'^μ + Γ_μν U^μ U^ν + λ2 U' + λ1 U`.
pub fn autoparallel_rhs(cc: &ConnectionCoeffs, mult: &Multipliers, u: &Vec3, udot: &Vec3) -> Vec3 {
    let quad = Vec3::from_fn(|rho, _| u.dot(&(cc.gamma2[rho] * u)));
    cc.gamma1 * udot + quad + udot * mult.lambda2 + u * mult.lambda1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v3(a: f64, b: f64, c: f64) -> Vec3 {
        Vec3::new(a, b, c)
    }

    fn params(m: f64, a: f64) -> ModelParams {
        ModelParams::new(m, a, Metric::Euclidean)
    }

    #[test]
    fn psi_examples() {
        let e = Metric::Euclidean;
        assert!((psi(&v3(1., 0., 0.), &v3(0., 1., 0.), 1.0, e).unwrap() - 4.5).abs() < 1e-15);
        assert_eq!(psi(&v3(0.3, 1., 0.), &Vec3::zeros(), 0.0, e).unwrap(), 0.0);
        assert_eq!(psi(&v3(2., 0., 0.), &v3(0., 2., 0.), 0.0, e).unwrap(), 1.5);
        assert!(matches!(
            psi(&v3(1., 0., 0.), &v3(0.5, 0., 0.), 1.0, e),
            Err(Error::CrossSingular(_))
        ));
        assert!(matches!(
            psi(&Vec3::zeros(), &v3(1., 0., 0.), 0.0, e),
            Err(Error::NullSpeed(_))
        ));
    }

    #[test]
    fn rhs_examples() {
        let (u, ud) = (v3(1., 0., 0.), v3(0., 1., 0.));
        assert_eq!(rhs_f(&u, &ud, &params(0.0, 0.0)).unwrap(), v3(1.5, 0., 0.));
        assert_eq!(rhs_f(&u, &ud, &params(1.0, 0.0)).unwrap(), v3(1.5, 0., -1.));
        assert_eq!(
            rhs_f(&v3(0.2, -1., 0.4), &Vec3::zeros(), &params(0.0, 0.0)).unwrap(),
            Vec3::zeros()
        );
    }

    #[test]
    fn f_derivative_examples() {
        let fd = f_derivatives(&v3(1., 0., 0.), &Vec3::zeros(), &params(0.0, 0.0)).unwrap();
        assert_eq!(fd.f2, Mat3::zeros());
        let fd = f_derivatives(&v3(1., 0., 0.), &v3(0., 1., 0.), &params(0.0, 0.0)).unwrap();
        assert_eq!(fd.f2 * v3(1., 0., 0.), v3(0., 3., 0.));
        assert_eq!(fd.f0, Mat3::zeros());
        assert!(fd.f20.iter().all(|m| *m == Mat3::zeros()));
    }

    #[test]
    fn derivative_guard() {
        // u' nearly parallel to u: |u' x u| = 0.05 |u| |u'|
        let r = f_derivatives(&v3(1., 0., 0.), &v3(1., 0.05, 0.), &params(0.0, 1.0));
        assert!(matches!(r, Err(Error::CrossSingular(_))));
        assert!(f_derivatives(&v3(1., 0., 0.), &v3(1., 0.05, 0.), &params(0.0, 0.0)).is_ok());
    }

    #[test]
    fn reducibility_examples() {
        let (u, ud) = (v3(1., 0., 0.), v3(0., 1., 0.));
        for (m, a) in [(0.0, 0.0), (1.0, 1.0), (-0.5, 2.0)] {
            let fd = f_derivatives(&u, &ud, &params(m, a)).unwrap();
            let r = reducibility_multipliers(&fd, &u, &ud).unwrap();
            assert!(r.mu.abs() <= 1e-10 && r.lambda.abs() <= 1e-10, "{r:?}");
            assert!(r.residuals.iter().all(|x| *x <= 1e-10) && r.reducible);
        }

        let zero = FDeriv::first_order(Vec3::zeros(), Mat3::zeros(), Mat3::zeros(), Metric::Euclidean);
        let r = reducibility_multipliers(&zero, &u, &ud).unwrap();
        assert_eq!(r.lambda, 0.0);
        assert_eq!(r.residuals[1], 3.0);
        assert!(!r.reducible);

        // F = psi0 u: F1 = psi0 I, F2 = 0
        let psi0 = 2.0;
        let (u, ud) = (v3(1., 0., 0.), v3(0.5, 0., 0.));
        let fd = FDeriv::first_order(u * psi0, Mat3::identity() * psi0, Mat3::zeros(), Metric::Euclidean);
        let r = reducibility_multipliers(&fd, &u, &ud).unwrap();
        assert_eq!(r.lambda, 0.5);
        assert_eq!(r.residuals[1], 0.0);
    }

    struct AccelSquared;
    impl PsiFunction for AccelSquared {
        fn eval(&self, _u: &Vec3, udot: &Vec3) -> Result<(f64, Vec3, Vec3)> {
            Ok((udot.norm_squared(), Vec3::zeros(), udot * 2.0))
        }
    }

    #[test]
    fn mu_lambda_examples() {
        let e = Metric::Euclidean;
        for (u, ud, a) in [
            (v3(1., 0., 0.), v3(0., 1., 0.), 1.0),
            (v3(0.4, -1.1, 0.3), v3(0.7, 0.2, -0.9), -2.5),
        ] {
            let (mu, lambda) = mu_lambda_analytic(&u, &ud, a, e).unwrap();
            assert!(mu.abs() < 1e-12 && lambda.abs() < 1e-12, "{mu} {lambda}");
        }
        let (mu, lambda) = mu_lambda_for(&AccelSquared, &v3(1., 0., 0.), &v3(0., 1., 0.), e).unwrap();
        assert!((mu + 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(lambda, 0.0);
        assert_eq!(
            mu_lambda_analytic(&v3(1., 2., 0.), &Vec3::zeros(), 0.0, e).unwrap(),
            (0.0, 0.0)
        );
    }

    #[test]
    fn attached_connection_examples() {
        let (u, ud) = (v3(1., 0., 0.), v3(0., 1., 0.));
        let p = params(0.0, 0.0);
        let cc = attached_connection(&u, &ud, &p).unwrap();
        assert!((cc.gamma1.column(0) - v3(0., 1., 0.)).amax() < 1e-15);
        assert!((cc.gamma1.column(1) - v3(1., 0., 0.)).amax() < 1e-15);
        assert!(cc.gamma1.column(2).amax() < 1e-15);
        let quad = autoparallel_rhs(&cc, &Multipliers::zero(), &u, &Vec3::zeros());
        assert!((cc.gamma1 * ud - v3(1., 0., 0.)).amax() < 1e-15);
        assert!((quad - v3(0.5, 0., 0.)).amax() < 1e-15);

        let mult = attached_multipliers(&u, &ud, &p).unwrap();
        assert!(mult.is_stable());
        let rhs = autoparallel_rhs(&cc, &mult, &u, &ud);
        assert!((rhs - v3(1.5, 0., 0.)).amax() < 1e-14);

        let cc0 = attached_connection(&v3(0.3, 1., -0.2), &Vec3::zeros(), &p).unwrap();
        assert_eq!(cc0.gamma1, Mat3::zeros());

        let cc = attached_connection(&v3(0.3, 1., -0.2), &v3(0.5, 0.1, 0.9), &params(1.3, 0.7)).unwrap();
        for g in cc.gamma2 {
            assert_eq!(g, g.transpose());
        }
    }

    #[test]
    fn zero_connection_transports_nothing() {
        let cc = ConnectionCoeffs {
            gamma1: Mat3::zeros(),
            gamma2: [Mat3::zeros(); 3],
        };
        let r = autoparallel_rhs(&cc, &Multipliers::zero(), &v3(1., 2., 3.), &v3(-1., 0., 4.));
        assert_eq!(r, Vec3::zeros());
    }

    #[test]
    fn constant_multipliers() {
        let m = Multipliers::for_constant(0.3, 0.5);
        assert_eq!(m.lambda2, 1.0);
        assert!((m.lambda1 - (0.3 - 0.5)).abs() < 1e-15);
        let dl = LambdaDifferential {
            l0: Vec3::zeros(),
            l1: Vec3::zeros(),
            l2: Vec3::zeros(),
        };
        let l1 = lambda1_printed_sum_reading(
            0.3,
            0.5,
            &dl,
            &v3(1., 0., 0.),
            &v3(0., 1., 0.),
            &v3(0., 0., 1.),
            &Mat3::identity(),
        );
        assert!((l1 - m.lambda1).abs() < 1e-15);
    }

    #[test]
    fn psi_of_z_gradient_law() {
        // d psi / dz = 4/3 z_a psi / (z.z)
        for g in [Metric::Euclidean, Metric::Pseudo] {
            let z = v3(0.3, -1.2, 0.7);
            let psi0 = psi_of_z(&z, g);
            let zz = dot(&z, &z, g);
            for k in 0..3 {
                let mut e = Vec3::zeros();
                e[k] = 1e-6;
                let fd = (psi_of_z(&(z + e), g) - psi_of_z(&(z - e), g)) / 2e-6;
                let analytic = 4.0 / 3.0 * g.lower(&z)[k] * psi0 / zz;
                assert!((fd - analytic).abs() <= 1e-6, "{g:?} {k}: {fd} vs {analytic}");
            }
        }
    }

    fn fd_jacobian(u: &Vec3, ud: &Vec3, p: &ModelParams, h: f64) -> (Mat3, Mat3) {
        let mut f1 = Mat3::zeros();
        let mut f2 = Mat3::zeros();
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = h;
            let d1 = (rhs_f(&(u + e), ud, p).unwrap() - rhs_f(&(u - e), ud, p).unwrap()) / (2.0 * h);
            let d2 = (rhs_f(u, &(ud + e), p).unwrap() - rhs_f(u, &(ud - e), p).unwrap()) / (2.0 * h);
            f1.set_column(k, &d1);
            f2.set_column(k, &d2);
        }
        (f1, f2)
    }

    fn probes() -> Vec<(Vec3, Vec3, ModelParams)> {
        vec![
            (
                v3(0.4, -1.1, 0.3),
                v3(0.7, 0.2, -0.9),
                ModelParams::new(1.3, 0.0, Metric::Euclidean),
            ),
            (
                v3(0.4, -1.1, 0.3),
                v3(0.7, 0.2, -0.9),
                ModelParams::new(-0.6, 0.8, Metric::Euclidean),
            ),
            (
                v3(1.6, 0.3, -0.5),
                v3(0.2, 0.9, 0.4),
                ModelParams::new(0.9, -1.7, Metric::Pseudo),
            ),
            (
                v3(2.0, 0.7, 0.1),
                v3(-0.3, 0.1, 1.2),
                ModelParams::new(0.0, 0.5, Metric::Pseudo),
            ),
        ]
    }

    #[test]
    fn derivatives_match_differences() {
        let h = 1e-5;
        for (u, ud, p) in probes() {
            let fd = f_derivatives(&u, &ud, &p).unwrap();
            assert!((fd.f - rhs_f(&u, &ud, &p).unwrap()).amax() < 1e-13);
            let (f1, f2) = fd_jacobian(&u, &ud, &p, h);
            let tol = 1e-6 * (1.0 + fd.f1.amax().max(fd.f2.amax()));
            assert!((fd.f1 - f1).amax() < tol, "{:?} F1 {}", p, (fd.f1 - f1).amax());
            assert!((fd.f2 - f2).amax() < tol, "{:?} F2 {}", p, (fd.f2 - f2).amax());
            for k in 0..3 {
                let mut e = Vec3::zeros();
                e[k] = h;
                // column k of F22[rho] and F21[rho]: derivative of F2 row rho in u'^k / u^k
                let plus = f_derivatives(&u, &(ud + e), &p).unwrap().f2;
                let minus = f_derivatives(&u, &(ud - e), &p).unwrap().f2;
                let d_ud = (plus - minus) / (2.0 * h);
                let plus = f_derivatives(&(u + e), &ud, &p).unwrap().f2;
                let minus = f_derivatives(&(u - e), &ud, &p).unwrap().f2;
                let d_u = (plus - minus) / (2.0 * h);
                for rho in 0..3 {
                    let scale = 1e-6 * (1.0 + fd.f22[rho].amax() + fd.f21[rho].amax());
                    for beta in 0..3 {
                        assert!((fd.f22[rho][(beta, k)] - d_ud[(rho, beta)]).abs() < scale);
                        assert!((fd.f21[rho][(beta, k)] - d_u[(rho, beta)]).abs() < scale);
                    }
                }
            }
        }
    }

    #[test]
    fn connection_reproduces_the_third_order_system() {
        for (u, ud, p) in probes() {
            let cc = attached_connection(&u, &ud, &p).unwrap();
            let mult = attached_multipliers(&u, &ud, &p).unwrap();
            let f = rhs_f(&u, &ud, &p).unwrap();
            let r = autoparallel_rhs(&cc, &mult, &u, &ud);
            assert!((r - f).amax() <= 1e-10 * (1.0 + f.amax()), "{p:?}: {r} vs {f}");
        }
    }

    #[test]
    fn rhs_is_homogeneous_of_degree_three() {
        for (u, ud, p) in probes() {
            let s = 1.7;
            let f = rhs_f(&u, &ud, &p).unwrap();
            let fs = rhs_f(&(u * s), &(ud * (s * s)), &p).unwrap();
            assert!((fs - f * s.powi(3)).amax() < 1e-12 * (1.0 + fs.amax()));
        }
    }
}
