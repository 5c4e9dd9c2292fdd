//! `autogeo`: integration runs, verification suites and the contact projection.
//!
//! Exit codes: 0 success, 1 a suite failed (or output could not be written),
//! 2 invalid configuration, 3 integration left the domain.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;

use autogeo::connection::psi;
use autogeo::euler_poisson::ModelParams;
use autogeo::integrate::{integrate, IntegrateError, State3, Trajectory, MAX_STEPS};
use autogeo::metric::{classify, CausalClass, Metric, Vec3};
use autogeo::reduction::{project_state, HomogeneousState};
use autogeo::verify::{Suite, SuiteConfig, SuiteReport};
use autogeo::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "autogeo",
    version,
    about = "Third-order variational curves in 3D (pseudo-)Euclidean space"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the solved third-order system with fixed-step RK4.
    Integrate(IntegrateArgs),
    /// Run verification suites and print a JSON report.
    Verify(VerifyArgs),
    /// Project (x, u, du) to contact coordinates (t, x, v, vprime).
    Project(ProjectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclid,
    Pseudo,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Metric {
        match m {
            MetricArg::Euclid => Metric::Euclidean,
            MetricArg::Pseudo => Metric::Pseudo,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {}", parts.len()));
    }
    let mut out = [0.0f64; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| format!("'{p}' is not a number"))?;
        if !o.is_finite() {
            return Err(format!("'{p}' is not finite"));
        }
    }
    Ok(out)
}

#[derive(Args)]
struct StateArgs {
    /// Position, as x0,x1,x2.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true, default_value = "0,0,0")]
    x: [f64; 3],
    /// Velocity u, as u0,u1,u2.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true, default_value = "1,0,0")]
    u: [f64; 3],
    /// Acceleration du, as du0,du1,du2.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true, default_value = "0,0,0")]
    du: [f64; 3],
}

#[derive(Args)]
struct IntegrateArgs {
    #[arg(long, value_enum, default_value = "euclid")]
    metric: MetricArg,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    m: f64,
    #[arg(long = "A", allow_hyphen_values = true, default_value_t = 0.0)]
    a: f64,
    #[command(flatten)]
    state: StateArgs,
    #[arg(long = "t-end", allow_hyphen_values = true, default_value_t = 1.0)]
    t_end: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 1e-3)]
    h: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite name; repeat or comma-separate for several. All suites by default.
    #[arg(long, value_delimiter = ',')]
    suite: Vec<String>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, env = "AUTOGEO_SEED", default_value_t = 0)]
    seed: u64,
    /// Restrict sampling to one metric (suites mix both by default).
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    #[arg(long, allow_hyphen_values = true)]
    m: Option<f64>,
    #[arg(long = "A", allow_hyphen_values = true)]
    a: Option<f64>,
    /// Override every selected suite's tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct ProjectArgs {
    #[command(flatten)]
    state: StateArgs,
}

/// Outcome of a command: exit code plus a message for stderr.
struct Failure {
    code: u8,
    message: String,
}

fn invalid(field: &str, what: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: format!("{field}: {what}"),
    }
}

fn io_failure(e: io::Error) -> Failure {
    Failure {
        code: 1,
        message: format!("output: {e}"),
    }
}

/// Shortest round-trip decimal; exponent form outside `[1e-5, 1e16)`.
fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn emit(output: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match output {
        Some(path) => fs::write(path, text).map_err(io_failure),
        None => io::stdout().lock().write_all(text.as_bytes()).map_err(io_failure),
    }
}

const CSV_HEADER: &str = "t,x0,x1,x2,u0,u1,u2,du0,du1,du2,kappa,tau,ep_residual";

fn trajectory_csv(traj: &Trajectory, exit_t: Option<f64>) -> String {
    let mut out = String::with_capacity(traj.samples.len() * 200);
    out.push_str(CSV_HEADER);
    out.push('\n');
    let diags = traj.diagnostics();
    for ((s, d), r) in traj.samples.iter().zip(&diags).zip(&traj.ep_residuals) {
        let mut fields: Vec<String> = [s.t]
            .iter()
            .chain(&s.x)
            .chain(&s.u)
            .chain(&s.udot)
            .map(|v| fmt_f64(*v))
            .collect();
        match d {
            Ok(d) => {
                fields.push(fmt_f64(d.kappa));
                fields.push(d.tau.map(fmt_f64).unwrap_or_default());
            }
            Err(_) => fields.extend([String::new(), String::new()]),
        }
        fields.push(fmt_f64(*r));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    if let Some(t) = exit_t {
        let _ = writeln!(out, "# domain-exit t={}", fmt_f64(t));
    }
    out
}

fn trajectory_json(traj: &Trajectory, exit: Option<(f64, String)>) -> String {
    let diags = traj.diagnostics();
    let samples: Vec<_> = traj
        .samples
        .iter()
        .zip(&diags)
        .zip(&traj.ep_residuals)
        .map(|((s, d), r)| {
            let d = d.as_ref().ok();
            json!({
                "t": s.t,
                "x": s.x.as_slice(),
                "u": s.u.as_slice(),
                "du": s.udot.as_slice(),
                "kappa": d.map(|d| d.kappa),
                "tau": d.and_then(|d| d.tau),
                "ep_residual": r,
            })
        })
        .collect();
    let p = &traj.params;
    let doc = json!({
        "metric": match p.metric { Metric::Euclidean => "euclid", Metric::Pseudo => "pseudo" },
        "m": p.m,
        "A": p.a,
        "h": traj.h,
        "scheme": traj.scheme,
        "max_ep_residual": traj.max_ep_residual(),
        "domain_exit": exit.map(|(t, cause)| json!({ "t": t, "cause": cause })),
        "samples": samples,
    });
    serde_json::to_string_pretty(&doc).expect("json") + "\n"
}

fn validate_integrate(args: &IntegrateArgs) -> Result<(State3, ModelParams), Failure> {
    let metric: Metric = args.metric.into();
    let [x, u, du] = [args.state.x, args.state.u, args.state.du].map(Vec3::from);
    if !args.m.is_finite() {
        return Err(invalid("m", "must be finite"));
    }
    if !args.a.is_finite() {
        return Err(invalid("A", "must be finite"));
    }
    match classify(&u, metric) {
        CausalClass::TimelikePositive => {}
        CausalClass::Null => return Err(invalid("u", "null speed")),
        CausalClass::SpacelikeNegative => return Err(invalid("u", "spacelike; the index-2 metric needs timelike u")),
    }
    if !(args.h > 0.0 && args.h.is_finite()) {
        return Err(invalid("h", "must be positive"));
    }
    if !(args.t_end > 0.0 && args.t_end.is_finite()) {
        return Err(invalid("t-end", "must be positive"));
    }
    if args.t_end / args.h > MAX_STEPS {
        return Err(invalid("h", format!("more than {MAX_STEPS:e} steps")));
    }
    if let Err(Error::CrossSingular(_)) = psi(&u, &du, args.a, metric) {
        return Err(invalid("du", "parallel to u, which A != 0 does not allow"));
    }
    Ok((State3::new(0.0, x, u, du), ModelParams::new(args.m, args.a, metric)))
}

fn cmd_integrate(args: &IntegrateArgs) -> Result<(), Failure> {
    let (s0, params) = validate_integrate(args)?;
    match integrate(&s0, &params, args.t_end, args.h) {
        Ok(traj) => {
            let text = match args.format {
                Format::Csv => trajectory_csv(&traj, None),
                Format::Json => trajectory_json(&traj, None),
            };
            emit(&args.output, &text)
        }
        Err(IntegrateError::DomainExit { t, cause, partial }) => {
            let text = match args.format {
                Format::Csv => trajectory_csv(&partial, Some(t)),
                Format::Json => trajectory_json(&partial, Some((t, cause.to_string()))),
            };
            emit(&args.output, &text)?;
            Err(Failure {
                code: 3,
                message: format!("domain exit at t={}: {cause}", fmt_f64(t)),
            })
        }
        Err(e) => Err(invalid("integrate", e)),
    }
}

fn select_suites(names: &[String]) -> Result<Vec<Suite>, Failure> {
    if names.is_empty() {
        return Ok(Suite::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| Suite::from_name(n.trim()).ok_or_else(|| invalid("suite", format!("unknown suite '{n}'"))))
        .collect()
}

fn reports_csv(reports: &[SuiteReport]) -> String {
    let mut out = String::from("suite,samples,seed,max_residual,tol,pass\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.suite,
            r.samples,
            r.seed,
            fmt_f64(r.max_residual),
            fmt_f64(r.tol),
            r.pass
        );
    }
    out
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), Failure> {
    let suites = select_suites(&args.suite)?;
    if args.samples == Some(0) {
        return Err(invalid("samples", "must be at least 1"));
    }
    if let Some(t) = args.tol {
        if !(t >= 0.0) {
            return Err(invalid("tol", "must be non-negative"));
        }
    }
    let cfg = SuiteConfig {
        samples: args.samples,
        seed: args.seed,
        m: args.m,
        a: args.a,
        metric: args.metric.map(Metric::from),
        tol: args.tol,
    };
    let reports: Vec<SuiteReport> = suites.iter().map(|s| s.run(&cfg)).collect();
    let text = match args.format {
        Format::Json => serde_json::to_string_pretty(&reports).expect("json") + "\n",
        Format::Csv => reports_csv(&reports),
    };
    emit(&args.output, &text)?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.suite.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: format!("failed: {}", failed.join(", ")),
        })
    }
}

fn cmd_project(args: &ProjectArgs) -> Result<(), Failure> {
    let [x, u, du] = [args.state.x, args.state.u, args.state.du].map(Vec3::from);
    let c = project_state(&HomogeneousState::new(x, u, du)).map_err(|_| invalid("u0", "chart violation"))?;
    let doc = json!({
        "t": c.t,
        "x": c.x.as_slice(),
        "v": c.v.as_slice(),
        "vprime": c.vprime.as_slice(),
    });
    emit(&None, &(doc.to_string() + "\n"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Integrate(a) => cmd_integrate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Project(a) => cmd_project(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("autogeo: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
