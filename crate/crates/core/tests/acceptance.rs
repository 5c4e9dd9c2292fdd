//! Acceptance criteria. Each test prints one `criterion N ... PASS|FAIL` line.

use std::time::{Duration, Instant};

use autogeo::euler_poisson::{helmholtz_residuals_for, ModelParams, ReducedField};
use autogeo::integrate::{compare_images, convergence_order, integrate, trim_to_arc_length};
use autogeo::metric::{Metric, Vec2};
use autogeo::verify::{circle_run, circle_state, order_problem, CorruptedField, Suite, SuiteConfig, SuiteReport};

fn line(n: u32, name: &str, pass: bool, detail: String) -> bool {
    println!(
        "criterion {n:>2} {name:<20} {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn suite(n: u32, s: Suite, cfg: SuiteConfig, limit: Option<Duration>) {
    let (r, took): (SuiteReport, _) = timed(|| s.run(&cfg));
    let in_time = limit.is_none_or(|l| took <= l);
    let ok = line(
        n,
        s.name(),
        r.pass && in_time,
        format!(
            "samples={} max_residual={:e} tol={:e} time={:.3}s",
            r.samples,
            r.max_residual,
            r.tol,
            took.as_secs_f64()
        ),
    );
    assert!(ok, "{r:?} in {took:?}");
}

#[test]
fn criterion_01_weierstrass() {
    let cfg = SuiteConfig {
        samples: Some(1000),
        ..SuiteConfig::with_seed(1)
    };
    suite(1, Suite::Weierstrass, cfg, Some(Duration::from_secs(1)));
}

#[test]
fn criterion_02_lagrangian_oracle() {
    let cfg = SuiteConfig {
        samples: Some(100),
        ..SuiteConfig::with_seed(2)
    };
    suite(2, Suite::LagrangianOracle, cfg, Some(Duration::from_secs(10)));
}

#[test]
fn criterion_03_helmholtz() {
    let cfg = SuiteConfig {
        samples: Some(25),
        ..SuiteConfig::with_seed(3)
    };
    let r = Suite::Helmholtz.run(&cfg);
    let corrupted = helmholtz_residuals_for(
        &CorruptedField(ReducedField { m: 1.0 }),
        0.0,
        &Vec2::zeros(),
        &Vec2::new(0.3, -0.2),
        1e-4,
    )
    .unwrap()
    .max();
    let ok = line(
        3,
        "helmholtz",
        r.pass && r.max_residual <= 1e-6 && corrupted >= 0.01,
        format!(
            "grid={} m=0,1,-2 max_block={:e} corrupted_B={:e}",
            r.samples, r.max_residual, corrupted
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_04_reducibility() {
    let cfg = SuiteConfig {
        samples: Some(1000),
        ..SuiteConfig::with_seed(4)
    };
    suite(4, Suite::Reducibility, cfg, None);
}

#[test]
fn criterion_05_attachment() {
    for metric in [Metric::Euclidean, Metric::Pseudo] {
        let cfg = SuiteConfig {
            samples: Some(1000),
            metric: Some(metric),
            ..SuiteConfig::with_seed(5)
        };
        suite(5, Suite::Attachment, cfg, None);
    }
}

#[test]
fn criterion_06_equivariance() {
    let cfg = SuiteConfig {
        samples: Some(200),
        ..SuiteConfig::with_seed(6)
    };
    suite(6, Suite::Equivariance, cfg, None);
}

#[test]
fn criterion_07_geodesic_circle() {
    let (run, took) = timed(|| circle_run(0.0, 0.0, 1e-3).unwrap());
    let ok = line(
        7,
        "geodesic-circle",
        run.normalized() <= 1.0 && took <= Duration::from_secs(5),
        format!(
            "completed={} t_reached={:.4} kappa_std/mean={:e} max|tau|={:e} closure={:e} time={:.3}s",
            run.completed,
            run.t_reached,
            run.kappa_spread,
            run.max_abs_tau,
            run.closure_gap,
            took.as_secs_f64()
        ),
    );
    assert!(ok, "{run:?}");
}

#[test]
fn criterion_08_image_independence() {
    let s0 = circle_state();
    let run = |a: f64| {
        let p = ModelParams::new(0.0, a, Metric::Euclidean);
        integrate(&s0, &p, 0.5, 1e-3).unwrap()
    };
    let (p, q) = (run(0.0), run(1.0));
    let len = p.arc_length().min(q.arc_length());
    let gap = compare_images(
        &trim_to_arc_length(&p, len).unwrap(),
        &trim_to_arc_length(&q, len).unwrap(),
    )
    .unwrap();
    let ok = line(
        8,
        "image-independence",
        gap <= 1e-5,
        format!("common_arc={len:.4} gap={gap:e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_09_rk4_order() {
    let (s0, params) = order_problem();
    let order = convergence_order(&s0, &params, 1.0, 0.02).unwrap();
    let ok = line(
        9,
        "rk4-order",
        (3.8..=4.2).contains(&order),
        format!("observed_order={order:.4}"),
    );
    assert!(ok);
}

#[test]
fn criterion_10_reduction_consistency() {
    let cfg = SuiteConfig {
        samples: Some(500),
        ..SuiteConfig::with_seed(10)
    };
    suite(10, Suite::Reduction, cfg, None);
}
