//! Fixed-step RK4 for the solved system `x' = u, u' = u', u'' = F(u, u')`,
//! with curve diagnostics and a parameter-free comparison of images.

use rayon::prelude::*;
use serde::Serialize;

use crate::connection::rhs_f;
use crate::error::{Error, Result};
use crate::euler_poisson::{ep_expression, Jet2Point, ModelParams};
use crate::metric::{classify, cross, dot, timelike_square, triple, CausalClass, Mat3, Vec3, EPS_NULL};

/// Upper bound on the number of steps of one run.
pub const MAX_STEPS: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct State3 {
    pub t: f64,
    pub x: Vec3,
    pub u: Vec3,
    pub udot: Vec3,
}

impl State3 {
    pub fn new(t: f64, x: Vec3, u: Vec3, udot: Vec3) -> Self {
        Self { t, x, u, udot }
    }

    fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().chain(&self.u).chain(&self.udot).all(|c| c.is_finite())
    }

    /// The state with all vectors mapped by `r`.
    pub fn transformed(&self, r: &Mat3) -> Self {
        Self {
            t: self.t,
            x: r * self.x,
            u: r * self.u,
            udot: r * self.udot,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<State3>,
    pub params: ModelParams,
    pub h: f64,
    pub scheme: &'static str,
    /// `|E|` along the samples, relative to the size of its terms.
    pub ep_residuals: Vec<f64>,
}

impl Trajectory {
    fn empty(params: ModelParams, h: f64) -> Self {
        Self {
            samples: Vec::new(),
            params,
            h,
            scheme: "rk4",
            ep_residuals: Vec::new(),
        }
    }

    fn push(&mut self, s: State3) -> Result<()> {
        let uddot = rhs_f(&s.u, &s.udot, &self.params)?;
        let residual = ep_residual(&Jet2Point::new(s.u, s.udot, uddot), &self.params)?;
        let diag = curvature_torsion(&s.u, &s.udot, &uddot, self.params.metric)?;
        if !residual.is_finite() || !diag.kappa.is_finite() || diag.tau.is_some_and(|t| !t.is_finite()) {
            return Err(Error::NonFinite("diagnostics"));
        }
        self.ep_residuals.push(residual);
        self.samples.push(s);
        Ok(())
    }

    pub fn max_ep_residual(&self) -> f64 {
        self.ep_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn last(&self) -> Option<&State3> {
        self.samples.last()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.samples.iter().map(|s| s.x).collect()
    }

    /// Curvature and torsion at every sample.
    pub fn diagnostics(&self) -> Vec<Result<CurveDiagnostics>> {
        self.samples
            .iter()
            .map(|s| {
                let uddot = rhs_f(&s.u, &s.udot, &self.params)?;
                curvature_torsion(&s.u, &s.udot, &uddot, self.params.metric)
            })
            .collect()
    }

    /// Euclidean length of the position polyline.
    pub fn arc_length(&self) -> f64 {
        self.samples.windows(2).map(|w| (w[1].x - w[0].x).norm()).sum()
    }
}

/// `|E(u, u', F)|` divided by `1 +` the largest of its terms.
pub fn ep_residual(p: &Jet2Point, params: &ModelParams) -> Result<f64> {
    let g = params.metric;
    let e = ep_expression(p, params)?;
    let n = timelike_square(&p.u, g)?;
    let s3 = n * n.sqrt();
    let pu = dot(&p.udot, &p.u, g);
    let scale = (cross(&p.uddot, &p.u, g) / s3).amax()
        + (cross(&p.udot, &p.u, g) * (3.0 * pu / (s3 * n))).amax()
        + ((p.udot * n - p.u * pu) * (params.m / s3)).amax();
    Ok(e.amax() / (1.0 + scale))
}

/// Failure inside one RK4 step. `stage` is 1..=4, or 5 for the updated state.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("stage {stage}: {cause}")]
pub struct StepError {
    pub stage: u8,
    pub cause: Error,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IntegrateError {
    #[error("left the domain at t = {t} ({cause})")]
    DomainExit {
        t: f64,
        cause: StepError,
        partial: Box<Trajectory>,
    },
    #[error("{0} steps exceed the budget")]
    StepBudgetExceeded(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

fn derivative(s: &State3, params: &ModelParams, stage: u8) -> std::result::Result<[Vec3; 3], StepError> {
    if !s.is_finite() {
        return Err(StepError {
            stage,
            cause: Error::NonFinite("state"),
        });
    }
    let f = rhs_f(&s.u, &s.udot, params).map_err(|cause| StepError { stage, cause })?;
    if !f.iter().all(|c| c.is_finite()) {
        return Err(StepError {
            stage,
            cause: Error::NonFinite("right-hand side"),
        });
    }
    Ok([s.u, s.udot, f])
}

fn advance(s: &State3, d: &[Vec3; 3], dt: f64) -> State3 {
    State3::new(s.t + dt, s.x + d[0] * dt, s.u + d[1] * dt, s.udot + d[2] * dt)
}

/// One classical fourth-order Runge–Kutta step.
pub fn step_rk4(s: &State3, params: &ModelParams, h: f64) -> std::result::Result<State3, StepError> {
    let k1 = derivative(s, params, 1)?;
    let k2 = derivative(&advance(s, &k1, h / 2.0), params, 2)?;
    let k3 = derivative(&advance(s, &k2, h / 2.0), params, 3)?;
    let k4 = derivative(&advance(s, &k3, h), params, 4)?;
    let comb = |i: usize| (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
    let next = State3::new(s.t + h, s.x + comb(0), s.u + comb(1), s.udot + comb(2));
    if !next.is_finite() {
        return Err(StepError {
            stage: 5,
            cause: Error::NonFinite("state"),
        });
    }
    Ok(next)
}

/// Number of uniform steps covering `span` with a nominal step `h`.
pub fn step_count(span: f64, h: f64) -> usize {
    ((span / h).round() as usize).max(1)
}

/// Fixed-step sweep from `s0.t` to `t_end`; every sample is recorded.
///
/// The step is `(t_end - t0)/n` with `n = max(1, round((t_end - t0)/h))`, so
/// the last sample lands on `t_end`.
pub fn integrate(
    s0: &State3,
    params: &ModelParams,
    t_end: f64,
    h: f64,
) -> std::result::Result<Trajectory, IntegrateError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(IntegrateError::InvalidArgument("h must be positive"));
    }
    if !(t_end > s0.t && t_end.is_finite()) {
        return Err(IntegrateError::InvalidArgument("t_end must exceed the initial t"));
    }
    let span = t_end - s0.t;
    if span / h > MAX_STEPS {
        return Err(IntegrateError::StepBudgetExceeded(span / h));
    }
    let n = step_count(span, h);
    let dt = span / n as f64;
    let mut traj = Trajectory::empty(*params, dt);
    let exit = |traj: Trajectory, t: f64, cause: StepError| IntegrateError::DomainExit {
        t,
        cause,
        partial: Box::new(traj),
    };
    if let Err(cause) = derivative(s0, params, 1) {
        return Err(exit(
            traj,
            s0.t,
            StepError {
                stage: 0,
                cause: cause.cause,
            },
        ));
    }
    if let Err(cause) = traj.push(*s0) {
        return Err(exit(traj, s0.t, StepError { stage: 0, cause }));
    }
    let mut s = *s0;
    for i in 1..=n {
        let mut next = match step_rk4(&s, params, dt) {
            Ok(next) => next,
            Err(cause) => return Err(exit(traj, s.t, cause)),
        };
        next.t = s0.t + dt * i as f64;
        if let Err(cause) = traj.push(next) {
            return Err(exit(traj, s.t, StepError { stage: 5, cause }));
        }
        s = next;
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveDiagnostics {
    pub kappa: f64,
    /// Absent on straight lines (and on null `u x u'` in index 2).
    pub tau: Option<f64>,
    /// Causal class of `u x u'`.
    pub class: CausalClass,
}

impl CurveDiagnostics {
    pub fn torsion(&self) -> Result<f64> {
        self.tau.ok_or(Error::StraightLine)
    }
}

/// `kappa = |u x u'| / |u|^3`, `tau = [u, u', u''] / |u x u'|^2`, with metric norms.
pub fn curvature_torsion(u: &Vec3, udot: &Vec3, uddot: &Vec3, g: crate::metric::Metric) -> Result<CurveDiagnostics> {
    let n = timelike_square(u, g)?;
    let z = cross(u, udot, g);
    let zz = dot(&z, &z, g);
    let class = classify(&z, g);
    let straight = z.amax() <= EPS_NULL * u.amax() * udot.amax() || class == CausalClass::Null;
    let kappa = if z.amax() == 0.0 {
        0.0
    } else {
        zz.abs().sqrt() / (n * n.sqrt())
    };
    let tau = if straight {
        None
    } else {
        Some(triple(u, udot, uddot) / zz.abs())
    };
    Ok(CurveDiagnostics { kappa, tau, class })
}

fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    };
    (p - (a + ab * s)).norm()
}

fn mean_distance_to_polyline(points: &[Vec3], line: &[Vec3]) -> f64 {
    let total: f64 = points
        .par_iter()
        .map(|p| {
            if line.len() == 1 {
                return (p - line[0]).norm();
            }
            line.windows(2)
                .map(|w| point_segment_distance(p, &w[0], &w[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / points.len() as f64
}

/// Symmetric mean point-to-polyline distance between the two position sequences.
pub fn compare_images(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    compare_polylines(&a.positions(), &b.positions())
}

pub fn compare_polylines(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    Ok(0.5 * (mean_distance_to_polyline(a, b) + mean_distance_to_polyline(b, a)))
}

/// The initial piece of `traj` of Euclidean arc length `len`; the last
/// sample is linearly interpolated.
pub fn trim_to_arc_length(traj: &Trajectory, len: f64) -> Result<Trajectory> {
    let first = *traj.samples.first().ok_or(Error::EmptyTrajectory)?;
    let mut out = Trajectory {
        samples: vec![first],
        ep_residuals: traj.ep_residuals[..1].to_vec(),
        ..traj.clone()
    };
    let mut acc = 0.0;
    for (i, w) in traj.samples.windows(2).enumerate() {
        let seg = (w[1].x - w[0].x).norm();
        if acc + seg >= len {
            let s = if seg > 0.0 { (len - acc) / seg } else { 0.0 };
            let lerp = |a: Vec3, b: Vec3| a + (b - a) * s;
            out.samples.push(State3::new(
                w[0].t + (w[1].t - w[0].t) * s,
                lerp(w[0].x, w[1].x),
                lerp(w[0].u, w[1].u),
                lerp(w[0].udot, w[1].udot),
            ));
            out.ep_residuals.push(traj.ep_residuals[i + 1]);
            return Ok(out);
        }
        acc += seg;
        out.samples.push(w[1]);
        out.ep_residuals.push(traj.ep_residuals[i + 1]);
    }
    Ok(out)
}

/// Richardson estimate `|x_h - x_{h/2}| / 15` of the final-position error.
pub fn richardson_error(
    s0: &State3,
    params: &ModelParams,
    t_end: f64,
    h: f64,
) -> std::result::Result<f64, IntegrateError> {
    let coarse = integrate(s0, params, t_end, h)?;
    let fine = integrate(s0, params, t_end, h / 2.0)?;
    Ok((coarse.last().unwrap().x - fine.last().unwrap().x).norm() / 15.0)
}

/// Observed order `log2(|x_h - x_{h/2}| / |x_{h/2} - x_{h/4}|)` at `t_end`.
pub fn convergence_order(
    s0: &State3,
    params: &ModelParams,
    t_end: f64,
    h: f64,
) -> std::result::Result<f64, IntegrateError> {
    let end = |step: f64| integrate(s0, params, t_end, step).map(|t| *t.last().unwrap());
    let (a, b, c) = (end(h)?, end(h / 2.0)?, end(h / 4.0)?);
    let diff = |p: &State3, q: &State3| (p.x - q.x).amax().max((p.u - q.u).amax()).max((p.udot - q.udot).amax());
    Ok((diff(&a, &b) / diff(&b, &c)).log2())
}
