//! Randomized verification suites. Each suite reduces per-sample residuals
//! with `max`, so reports are independent of the worker count.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::connection::{
    attached_connection, attached_multipliers, autoparallel_rhs, f_derivatives, mu_lambda_analytic,
    reducibility_multipliers, rhs_f,
};
use crate::error::Result;
use crate::euler_poisson::{
    ep_expression, ep_operator_oracle, ep_reduced, equivariance_residual, helmholtz_residuals_for, lagrangian,
    AffineCoeffs, AffineField, CubicCurve, GaugeTerm, Jet2Point, ModelParams, RatioPotential, ReducedField,
    ORACLE_STEP,
};
use crate::integrate::{
    compare_images, convergence_order, curvature_torsion, integrate, trim_to_arc_length, IntegrateError, State3,
    Trajectory,
};
use crate::metric::{cross, dot, random_pseudo_rotation, Metric, Vec2, Vec3};
use crate::reduction::{contact_jet, reduce_ep};
use crate::sampling::{admissible_pair, forward_velocity, random_jet, sample_rng, uniform_vec, velocity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Weierstrass,
    LagrangianOracle,
    Helmholtz,
    Equivariance,
    Reducibility,
    Attachment,
    GeodesicCircle,
    ImageIndependence,
    Reduction,
    Rk4Order,
}

impl Suite {
    pub const ALL: [Suite; 10] = [
        Suite::Weierstrass,
        Suite::LagrangianOracle,
        Suite::Helmholtz,
        Suite::Equivariance,
        Suite::Reducibility,
        Suite::Attachment,
        Suite::GeodesicCircle,
        Suite::ImageIndependence,
        Suite::Reduction,
        Suite::Rk4Order,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Weierstrass => "weierstrass",
            Suite::LagrangianOracle => "lagrangian-oracle",
            Suite::Helmholtz => "helmholtz",
            Suite::Equivariance => "equivariance",
            Suite::Reducibility => "reducibility",
            Suite::Attachment => "attachment",
            Suite::GeodesicCircle => "geodesic-circle",
            Suite::ImageIndependence => "image-independence",
            Suite::Reduction => "reduction",
            Suite::Rk4Order => "rk4-order",
        }
    }

    pub fn from_name(name: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn default_samples(self) -> usize {
        match self {
            Suite::Weierstrass | Suite::Reducibility | Suite::Attachment => 1000,
            Suite::LagrangianOracle => 100,
            Suite::Helmholtz => 25,
            Suite::Equivariance => 200,
            Suite::Reduction => 500,
            Suite::GeodesicCircle | Suite::ImageIndependence | Suite::Rk4Order => 1,
        }
    }

    pub fn default_tol(self) -> f64 {
        match self {
            Suite::Weierstrass => 1e-12,
            Suite::LagrangianOracle => 5e-5,
            Suite::Helmholtz => 1e-6,
            Suite::Equivariance | Suite::Reducibility => 1e-10,
            Suite::Attachment => 1e-8,
            Suite::GeodesicCircle => 1.0,
            Suite::ImageIndependence => 1e-5,
            Suite::Reduction => 1e-9,
            Suite::Rk4Order => 0.2,
        }
    }

    pub fn run(self, cfg: &SuiteConfig) -> SuiteReport {
        let samples = cfg.samples.unwrap_or_else(|| self.default_samples());
        let tol = cfg.tol.unwrap_or_else(|| self.default_tol());
        let (samples, max_residual, extra_pass) = match self {
            Suite::Weierstrass => (samples, fan_out(samples, |i| weierstrass(cfg, i)), true),
            Suite::LagrangianOracle => (samples, fan_out(samples, |i| lagrangian_oracle(cfg, i)), true),
            Suite::Helmholtz => helmholtz(cfg, samples),
            Suite::Equivariance => (samples, fan_out(samples, |i| equivariance(cfg, i)), true),
            Suite::Reducibility => (samples, fan_out(samples, |i| reducibility(cfg, i)), true),
            Suite::Attachment => (samples, fan_out(samples, |i| attachment(cfg, i)), true),
            Suite::GeodesicCircle => (samples, fan_out(samples, |_| geodesic_circle(cfg)), true),
            Suite::ImageIndependence => (samples, fan_out(samples, |i| image_independence(cfg, i)), true),
            Suite::Reduction => (samples, fan_out(samples, |i| reduction(cfg, i)), true),
            Suite::Rk4Order => (samples, fan_out(samples, |i| rk4_order(cfg, i)), true),
        };
        SuiteReport {
            suite: self.name().to_string(),
            samples,
            seed: cfg.seed,
            max_residual,
            tol,
            pass: extra_pass && max_residual <= tol,
        }
    }
}

/// Overrides for a suite run; `None` picks the suite's own sampling.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SuiteConfig {
    pub samples: Option<usize>,
    pub seed: u64,
    pub m: Option<f64>,
    pub a: Option<f64>,
    pub metric: Option<Metric>,
    pub tol: Option<f64>,
}

impl SuiteConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    fn metric(&self, i: usize) -> Metric {
        self.metric.unwrap_or(if i.is_multiple_of(2) {
            Metric::Euclidean
        } else {
            Metric::Pseudo
        })
    }

    fn m(&self, rng: &mut impl Rng) -> f64 {
        let m = rng.random_range(-2.0..2.0);
        self.m.unwrap_or(m)
    }

    fn a(&self, rng: &mut impl Rng) -> f64 {
        let a = rng.random_range(-2.0..2.0);
        self.a.unwrap_or(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub samples: usize,
    pub seed: u64,
    /// Non-finite values (failed samples) serialize as `null` and fail the suite.
    pub max_residual: f64,
    pub tol: f64,
    pub pass: bool,
}

fn worst(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::INFINITY
    } else {
        a.max(b)
    }
}

fn fan_out(samples: usize, f: impl Fn(usize) -> Result<f64> + Sync) -> f64 {
    (0..samples)
        .into_par_iter()
        .map(|i| f(i).unwrap_or(f64::INFINITY))
        .reduce(|| 0.0, worst)
}

fn weierstrass(cfg: &SuiteConfig, i: usize) -> Result<f64> {
    let mut rng = sample_rng(cfg.seed, i as u64);
    let g = cfg.metric(i);
    let params = ModelParams::new(cfg.m(&mut rng), 0.0, g);
    let jet = random_jet(&mut rng, g);
    let e = ep_expression(&jet, &params)?;
    let scale = e.norm() * jet.u.norm();
    Ok(if scale == 0.0 { 0.0 } else { e.dot(&jet.u).abs() / scale })
}

fn lagrangian_oracle(cfg: &SuiteConfig, i: usize) -> Result<f64> {
    let mut rng = sample_rng(cfg.seed, i as u64);
    let g = cfg.metric.unwrap_or(Metric::Euclidean);
    let params = ModelParams::new(cfg.m(&mut rng), 0.0, g);
    // keep |<u x e, u x e>| >= 0.1 |u|_E^2 for every axis
    let u = loop {
        let u = velocity(&mut rng, g);
        let clear = (0..3).all(|rho| {
            let mut e = Vec3::zeros();
            e[rho] = 1.0;
            let w = cross(&u, &e, g);
            dot(&w, &w, g).abs() >= 0.1 * u.norm_squared()
        });
        if clear {
            break u;
        }
    };
    let curve = CubicCurve::through(
        uniform_vec(&mut rng, -1.0, 1.0),
        u,
        uniform_vec(&mut rng, -1.0, 1.0),
        uniform_vec(&mut rng, -1.0, 1.0),
    );
    let (gi, gj) = (rng.random_range(0..3), rng.random_range(0..3));
    let potential = RatioPotential {
        i: gi,
        j: gj,
        scale: rng.random_range(-1.0..1.0),
    };
    let gauge = GaugeTerm::new(Some(Arc::new(potential)), uniform_vec(&mut rng, -1.0, 1.0));
    gauge.check(&[u, curve.velocity(0.01), curve.velocity(-0.01)])?;

    let expected = ep_expression(&curve.jet(0.0), &params)?;
    let zero = GaugeTerm::zero();
    let mut worst_defect: f64 = 0.0;
    for rho in 0..3 {
        let plain = ep_operator_oracle(
            |u: &Vec3, ud: &Vec3| lagrangian(rho, u, ud, &params, &zero).unwrap_or(f64::NAN),
            &curve,
            0.0,
            ORACLE_STEP,
        )?;
        let gauged = ep_operator_oracle(
            |u: &Vec3, ud: &Vec3| lagrangian(rho, u, ud, &params, &gauge).unwrap_or(f64::NAN),
            &curve,
            0.0,
            ORACLE_STEP,
        )?;
        worst_defect = worst(worst_defect, (plain - expected).amax());
        worst_defect = worst(worst_defect, (gauged - plain).amax());
    }
    Ok(worst_defect)
}

/// The reduced field with `B[0][1]` shifted by `0.1`; it is not variational.
pub struct CorruptedField(pub ReducedField);

impl AffineField for CorruptedField {
    fn coeffs(&self, t: f64, x: &Vec2, v: &Vec2) -> Result<AffineCoeffs> {
        let mut c = self.0.coeffs(t, x, v)?;
        c.b[(0, 1)] += 0.1;
        Ok(c)
    }
}

/// Smallest residual the detector must report on the corrupted field.
pub const DETECTOR_FLOOR: f64 = 0.01;

const HELMHOLTZ_STEP: f64 = 1e-4;

fn helmholtz_grid(side: usize) -> Vec<Vec2> {
    let coord = |k: usize| {
        if side == 1 {
            0.0
        } else {
            -1.0 + 2.0 * k as f64 / (side - 1) as f64
        }
    };
    (0..side * side)
        .map(|k| Vec2::new(coord(k / side), coord(k % side)))
        .collect()
}

fn helmholtz(cfg: &SuiteConfig, samples: usize) -> (usize, f64, bool) {
    let side = ((samples as f64).sqrt().round() as usize).max(1);
    let grid = helmholtz_grid(side);
    let ms: Vec<f64> = cfg.m.map_or_else(|| vec![0.0, 1.0, -2.0], |m| vec![m]);
    let jobs: Vec<(f64, Vec2)> = ms.iter().flat_map(|&m| grid.iter().map(move |v| (m, *v))).collect();
    let residual = jobs
        .par_iter()
        .map(|(m, v)| {
            helmholtz_residuals_for(&ReducedField { m: *m }, 0.0, &Vec2::zeros(), v, HELMHOLTZ_STEP)
                .map_or(f64::INFINITY, |r| r.max())
        })
        .reduce(|| 0.0, worst);
    let detected = ms.iter().all(|&m| {
        let field = CorruptedField(ReducedField { m });
        grid.iter().any(|v| {
            helmholtz_residuals_for(&field, 0.0, &Vec2::zeros(), v, HELMHOLTZ_STEP)
                .is_ok_and(|r| r.max() >= DETECTOR_FLOOR)
        })
    });
    (grid.len(), residual, detected)
}

const JETS_PER_ROTATION: usize = 20;

fn equivariance(cfg: &SuiteConfig, i: usize) -> Result<f64> {
    let mut rng = sample_rng(cfg.seed, i as u64);
    let g = cfg.metric(i);
    let r = random_pseudo_rotation(rng.random(), g);
    let mut out: f64 = 0.0;
    for _ in 0..JETS_PER_ROTATION {
        let params = ModelParams::new(cfg.m(&mut rng), cfg.a(&mut rng), g);
        let (u, ud) = admissible_pair(&mut rng, g);
        let jet = Jet2Point::new(u, ud, uniform_vec(&mut rng, -1.0, 1.0));
        let scale = 1.0 + r.amax().powi(2);
        let e = ep_expression(&jet, &params)?;
        out = worst(
            out,
            equivariance_residual(&jet, &params, &r)? / (scale * (1.0 + e.amax())),
        );
        let f = rhs_f(&u, &ud, &params)?;
        let rotated = rhs_f(&(r * u), &(r * ud), &params)?;
        out = worst(out, (rotated - r * f).amax() / (scale * (1.0 + f.amax())));
    }
    Ok(out)
}

fn reducibility(cfg: &SuiteConfig, i: usize) -> Result<f64> {
    let mut rng = sample_rng(cfg.seed, i as u64);
    let g = cfg.metric(i);
    let (u, ud) = admissible_pair(&mut rng, g);
    let combos: Vec<(f64, f64)> = match (cfg.m, cfg.a) {
        (Some(m), Some(a)) => vec![(m, a)],
        (m, a) => {
            let ms = m.map_or(vec![0.0, 1.0], |m| vec![m]);
            let as_ = a.map_or(vec![0.0, 1.0], |a| vec![a]);
            ms.iter().flat_map(|&m| as_.iter().map(move |&a| (m, a))).collect()
        }
    };
    let mut out: f64 = 0.0;
    for (m, a) in combos {
        let params = ModelParams::new(m, a, g);
        let fd = f_derivatives(&u, &ud, &params)?;
        let red = reducibility_multipliers(&fd, &u, &ud)?;
        let (mu, lambda) = mu_lambda_analytic(&u, &ud, a, g)?;
        for v in [red.mu, red.lambda, red.residuals[0], red.residuals[1], mu, lambda] {
            out = worst(out, v.abs());
        }
    }
    Ok(out)
}

fn attachment(cfg: &SuiteConfig, i: usize) -> Result<f64> {
    let mut rng = sample_rng(cfg.seed, i as u64);
    let g = cfg.metric(i);
    let params = ModelParams::new(cfg.m(&mut rng), cfg.a(&mut rng), g);
    let (u, ud) = admissible_pair(&mut rng, g);
    let cc = attached_connection(&u, &ud, &params)?;
    let mult = attached_multipliers(&u, &ud, &params)?;
    let f = rhs_f(&u, &ud, &params)?;
    Ok((autoparallel_rhs(&cc, &mult, &u, &ud) - f).amax() / (1.0 + f.amax()))
}

/// Circle data: unit speed, unit curvature, in the 0-1 plane.
pub fn circle_state() -> State3 {
    State3::new(
        0.0,
        Vec3::new(1., 0., 0.),
        Vec3::new(0., 1., 0.),
        Vec3::new(-1., 0., 0.),
    )
}

/// Tolerances of the geodesic-circle run, in the order (kappa spread, |tau|, closure gap).
pub const CIRCLE_TOLS: [f64; 3] = [1e-6, 1e-8, 1e-9];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CircleRun {
    pub completed: bool,
    pub t_reached: f64,
    /// `std / mean` of kappa over the samples.
    pub kappa_spread: f64,
    pub max_abs_tau: f64,
    pub closure_gap: f64,
}

impl CircleRun {
    /// Largest ratio of a measured quantity to its tolerance; infinite if the
    /// run did not reach `t_end`.
    pub fn normalized(&self) -> f64 {
        if !self.completed {
            return f64::INFINITY;
        }
        let r = [self.kappa_spread, self.max_abs_tau, self.closure_gap];
        r.iter().zip(CIRCLE_TOLS).map(|(v, t)| v / t).fold(0.0, worst)
    }
}

fn circle_stats(traj: &Trajectory, completed: bool) -> Result<CircleRun> {
    let mut kappas = Vec::with_capacity(traj.samples.len());
    let mut max_tau: f64 = 0.0;
    for s in &traj.samples {
        let uddot = rhs_f(&s.u, &s.udot, &traj.params)?;
        let d = curvature_torsion(&s.u, &s.udot, &uddot, traj.params.metric)?;
        kappas.push(d.kappa);
        max_tau = worst(max_tau, d.tau.map_or(0.0, f64::abs));
    }
    let n = kappas.len() as f64;
    let mean = kappas.iter().sum::<f64>() / n;
    let var = kappas.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / n;
    let first = traj.samples.first().map(|s| s.x).unwrap_or_default();
    let last = traj.last().map(|s| s.x).unwrap_or_default();
    Ok(CircleRun {
        completed,
        t_reached: traj.last().map_or(0.0, |s| s.t),
        kappa_spread: var.sqrt() / mean,
        max_abs_tau: max_tau,
        closure_gap: (last - first).norm(),
    })
}

/// Integrates circle data over `[0, 2 pi]` and measures the circle properties
/// over whatever part of the run stayed in the domain.
pub fn circle_run(m: f64, a: f64, h: f64) -> Result<CircleRun> {
    let params = ModelParams::new(m, a, Metric::Euclidean);
    match integrate(&circle_state(), &params, TAU, h) {
        Ok(traj) => circle_stats(&traj, true),
        Err(IntegrateError::DomainExit { partial, .. }) => circle_stats(&partial, false),
        Err(_) => Ok(CircleRun {
            completed: false,
            t_reached: 0.0,
            kappa_spread: f64::INFINITY,
            max_abs_tau: f64::INFINITY,
            closure_gap: f64::INFINITY,
        }),
    }
}

fn geodesic_circle(cfg: &SuiteConfig) -> Result<f64> {
    Ok(circle_run(cfg.m.unwrap_or(0.0), cfg.a.unwrap_or(0.0), 1e-3)?.normalized())
}

fn run_or_partial(s0: &State3, params: &ModelParams, t_end: f64, h: f64) -> Option<Trajectory> {
    match integrate(s0, params, t_end, h) {
        Ok(t) => Some(t),
        Err(IntegrateError::DomainExit { partial, .. }) if partial.samples.len() > 1 => Some(*partial),
        Err(_) => None,
    }
}

/// Images of two runs from the same data, differing only in `A`, compared
/// over their common arc length (capped at `max_len`).
pub fn image_gap(s0: &State3, m: f64, a0: f64, a1: f64, t_end: f64, h: f64, max_len: f64) -> Option<f64> {
    let run = |a: f64| run_or_partial(s0, &ModelParams::new(m, a, Metric::Euclidean), t_end, h);
    let (p, q) = (run(a0)?, run(a1)?);
    let len = p.arc_length().min(q.arc_length()).min(max_len);
    compare_images(&trim_to_arc_length(&p, len).ok()?, &trim_to_arc_length(&q, len).ok()?).ok()
}

fn image_independence(cfg: &SuiteConfig, i: usize) -> Result<f64> {
    let s0 = if i == 0 {
        circle_state()
    } else {
        let mut rng = sample_rng(cfg.seed, i as u64);
        let (u, ud) = admissible_pair(&mut rng, Metric::Euclidean);
        State3::new(0.0, uniform_vec(&mut rng, -1.0, 1.0), u, ud)
    };
    let gap = image_gap(&s0, cfg.m.unwrap_or(0.0), 0.0, cfg.a.unwrap_or(1.0), 0.5, 1e-3, 1.0);
    Ok(gap.unwrap_or(f64::INFINITY))
}

fn reduction(cfg: &SuiteConfig, i: usize) -> Result<f64> {
    let mut rng = sample_rng(cfg.seed, i as u64);
    let m = cfg.m(&mut rng);
    let u = forward_velocity(&mut rng, Metric::Euclidean);
    let jet = Jet2Point::new(u, uniform_vec(&mut rng, -1.0, 1.0), uniform_vec(&mut rng, -1.0, 1.0));
    let params = ModelParams::new(m, 0.0, Metric::Euclidean);
    let lhs = reduce_ep(&ep_expression(&jet, &params)?, &jet.u)?;
    let rhs = ep_reduced(&contact_jet(&jet)?, m)?;
    Ok((lhs - rhs).amax() / (1.0 + lhs.amax()))
}

/// Smooth reference problem for the order check.
pub fn order_problem() -> (State3, ModelParams) {
    (
        State3::new(
            0.0,
            Vec3::new(0.2, 0., 0.),
            Vec3::new(1.1, 0.3, -0.2),
            Vec3::new(0.1, 0.4, 0.2),
        ),
        ModelParams::new(1.0, 0.5, Metric::Euclidean),
    )
}

fn rk4_order(_cfg: &SuiteConfig, _i: usize) -> Result<f64> {
    let (s0, params) = order_problem();
    Ok(convergence_order(&s0, &params, 1.0, 0.02).map_or(f64::INFINITY, |p| (p - 4.0).abs()))
}
