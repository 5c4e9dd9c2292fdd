use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("null speed: |u.u| = {0:e} is below the null threshold or u is not timelike")]
    NullSpeed(f64),
    #[error("chart violation: {0}")]
    ChartViolation(&'static str),
    #[error("u is parallel to frame axis {axis} (|u x e|^2 = {value:e})")]
    AxisSingular { axis: usize, value: f64 },
    #[error("finite-difference step {0:e} outside [1e-6, 1e-2]")]
    StepOutOfRange(f64),
    #[error("density is not orthogonal to u (defect {0:e})")]
    InconsistentDensity(f64),
    #[error("matrix is not an isometry of the metric (defect {0:e})")]
    NotAnIsometry(f64),
    #[error("u' x u is (nearly) zero: |z.z| = {0:e}")]
    CrossSingular(f64),
    #[error("straight line: torsion undefined")]
    StraightLine,
    #[error("gauge potential violates u.grad(phi) = 0 (defect {0:e})")]
    GaugeNotHomogeneous(f64),
    #[error("equation is not strictly reducible (mu = {mu:e}, lambda = {lambda:e})")]
    NotStrictlyReducible { mu: f64, lambda: f64 },
    #[error("affine coefficients do not reproduce the reduced expression (defect {0:e})")]
    CoefficientMismatch(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("invalid metric index {0}; expected 0 or 2")]
    InvalidMetricIndex(u32),
}

pub type Result<T> = std::result::Result<T, Error>;
