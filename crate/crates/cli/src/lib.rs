//! Command-line front end: config loading, solver and simulation runs, and
//! deterministic CSV/JSON output.
//!
//! Exit codes: 0 success, 1 solver or output failure, 2 invalid input.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use gradcap::config::{load_config, ConfigError, ProblemSpec};
use gradcap::control::{
    estimate_penalized_value, parse_control_specs, penalized_policy, verify_value_equality, ControlError,
    ControlPathSpec, ControlPolicy, VerifyMode,
};
use gradcap::geometry::SolutionField;
use gradcap::hjb::{hjb_residual, solve_hjb, HjbError, HjbOptions};
use gradcap::io::{read_field_csv, write_field_csv};
use gradcap::nidd::{solve_nidd, NiddError, NiddSystem};
use gradcap::problem::Problem;

pub const THREADS_ENV: &str = "GRADCAP_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Solver(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Input(_) => 2,
            CliError::Solver(_) | CliError::Output { .. } => 1,
        }
    }
}

impl From<ControlError> for CliError {
    fn from(e: ControlError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "gradcap", version, about = "Penalized solver and Monte Carlo verifier for gradient-constrained HJB equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    Penalized,
    Null,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeKind {
    Penalized,
    Singular,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the penalized problem at one eps.
    SolveNidd {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the last entry of the config's eps schedule.
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `report.json` next to `--out`.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the assembled operator in Matrix Market format.
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
    },
    /// Run the eps continuation towards the constrained equation.
    SolveHjb {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
        /// Run the whole schedule even when the residuals are already small.
        #[arg(long)]
        no_early_stop: bool,
    },
    /// Residuals of a stored field: the limit equation, or the penalized one with `--eps`.
    Residual {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Monte Carlo cost of a policy from one start point.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        policy: PolicyKind,
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        eps: Option<f64>,
        /// Comma-separated coordinates.
        #[arg(long, allow_negative_numbers = true)]
        x0: String,
        /// Unit direction for `--policy constant`, comma-separated.
        #[arg(long, allow_negative_numbers = true)]
        direction: Option<String>,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a field with Monte Carlo costs at several start points.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeKind,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        /// Repeatable; comma-separated coordinates.
        #[arg(long = "x0", allow_negative_numbers = true, required = true)]
        x0: Vec<String>,
        /// JSON control spec or list of specs for singular mode; defaults to
        /// the null control and two constant-rate controls.
        #[arg(long)]
        controls: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse arguments, run, print any error and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn thread_count() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{s}`"))),
        },
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count()?)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(cli.command))
}

struct Loaded {
    spec: ProblemSpec,
    hash: String,
}

fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|source| CliError::Config(ConfigError::Io { path: path.display().to_string(), source }))?;
    let spec = load_config(path)?;
    Ok(Loaded { spec, hash: format!("{:x}", Sha256::digest(&bytes)) })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Output { path: path.display().to_string(), source })
}

fn envelope(command: &str, loaded: &Loaded, seed: u64, status: &str, body: Value) -> String {
    let mut v = json!({
        "command": command,
        "config_sha256": loaded.hash,
        "seed": seed,
        "status": status,
    });
    if let (Value::Object(m), Value::Object(b)) = (&mut v, body) {
        m.extend(b);
    }
    let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
    s.push('\n');
    s
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("report serializes")
}

fn report_path(out: &Path, report: Option<PathBuf>) -> PathBuf {
    report.unwrap_or_else(|| out.with_file_name("report.json"))
}

fn csv_comments(loaded: &Loaded, seed: u64) -> Vec<String> {
    vec![format!("config_sha256={}, seed={}", loaded.hash, seed)]
}

fn nidd_csv(problem: &Problem, eps: f64, field: &SolutionField, comments: &[String]) -> Result<String, CliError> {
    let u = field.interior_values();
    let sys = NiddSystem::new(problem, eps).map_err(|e| CliError::Input(e.to_string()))?;
    let res = sys.residual(&u);
    let grads = problem.neighbours.grad_norms(&u);
    write_field_csv(field, &grads, &res, comments).map_err(|e| CliError::Solver(e.to_string()))
}

fn hjb_csv(problem: &Problem, field: &SolutionField, comments: &[String]) -> Result<String, CliError> {
    let r = hjb_residual(problem, field).map_err(|e| CliError::Solver(e.to_string()))?;
    let grads: Vec<f64> = r.per_node.iter().map(|n| n.grad_norm).collect();
    let res: Vec<f64> = r.per_node.iter().map(|n| n.r_pde.max(n.r_grad)).collect();
    write_field_csv(field, &grads, &res, comments).map_err(|e| CliError::Solver(e.to_string()))
}

fn dump_matrix(problem: &Problem, path: Option<&Path>) -> Result<(), CliError> {
    if let Some(p) = path {
        write_file(p, &problem.matrix.to_csr().to_matrix_market())?;
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<f64, CliError> {
    if eps > 0.0 && eps < 1.0 {
        Ok(eps)
    } else {
        Err(CliError::Usage(format!("--eps must lie in (0, 1), got {eps}")))
    }
}

fn parse_point(s: &str, dim: usize, what: &str) -> Result<Vec<f64>, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("{what} `{s}` is not a comma-separated list of numbers")))?;
    if v.len() != dim || v.iter().any(|x| !x.is_finite()) {
        return Err(CliError::Usage(format!("{what} `{s}` must have {dim} finite coordinates")));
    }
    Ok(v)
}

fn read_field(problem: &Problem, path: &Path) -> Result<SolutionField, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    read_field_csv(&text, problem.grid.clone()).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::SolveNidd { config, eps, out, report, seed, dump_matrix: dm } => {
            let loaded = load(&config)?;
            let problem = loaded.spec.build_problem()?;
            dump_matrix(&problem, dm.as_deref())?;
            let eps = check_eps(eps.unwrap_or(*loaded.spec.eps_schedule.last().expect("validated nonempty")))?;
            let comments = csv_comments(&loaded, seed);
            let report_path = report_path(&out, report);
            match solve_nidd(&problem, eps, &loaded.spec.solver) {
                Ok(r) => {
                    write_file(&out, &nidd_csv(&problem, eps, r.solution(), &comments)?)?;
                    write_file(&report_path, &envelope("solve-nidd", &loaded, seed, "ok", json!({ "report": to_value(&r) })))
                }
                Err(e) => {
                    let best = match &e {
                        NiddError::MaxIterationsExceeded(r) => Some(r.as_ref()),
                        NiddError::BoundViolation { report, .. } => Some(report.as_ref()),
                        _ => None,
                    };
                    let body = match best {
                        Some(r) => {
                            if let Some(f) = &r.solution {
                                write_file(&out, &nidd_csv(&problem, eps, f, &comments)?)?;
                            }
                            json!({ "error": e.to_string(), "report": to_value(r) })
                        }
                        None => json!({ "error": e.to_string() }),
                    };
                    write_file(&report_path, &envelope("solve-nidd", &loaded, seed, "error", body))?;
                    Err(CliError::Solver(e.to_string()))
                }
            }
        }
        Command::SolveHjb { config, out, report, seed, dump_matrix: dm, no_early_stop } => {
            let loaded = load(&config)?;
            let problem = loaded.spec.build_problem()?;
            dump_matrix(&problem, dm.as_deref())?;
            let opts = HjbOptions { solver: loaded.spec.solver.clone(), early_stop: !no_early_stop, ..Default::default() };
            let comments = csv_comments(&loaded, seed);
            let report_path = report_path(&out, report);
            match solve_hjb(&problem, &loaded.spec.eps_schedule, &opts) {
                Ok(r) => {
                    write_file(&out, &hjb_csv(&problem, r.solution(), &comments)?)?;
                    write_file(&report_path, &envelope("solve-hjb", &loaded, seed, "ok", json!({ "report": to_value(&r) })))
                }
                Err(e) => {
                    let (field, partial): (Option<&SolutionField>, Value) = match &e {
                        HjbError::MonotonicityViolation { report, .. } => (report.solution.as_ref(), to_value(report.as_ref())),
                        HjbError::Nidd { source, partial, .. } => {
                            let from_source = match source {
                                NiddError::MaxIterationsExceeded(r) => r.solution.as_ref(),
                                NiddError::BoundViolation { report, .. } => report.solution.as_ref(),
                                _ => None,
                            };
                            let from_partial = partial.as_ref().as_ref().and_then(|p| p.solution.as_ref());
                            let value = partial.as_ref().as_ref().map(to_value).unwrap_or(Value::Null);
                            (from_source.or(from_partial), value)
                        }
                        _ => (None, Value::Null),
                    };
                    if let Some(f) = field {
                        write_file(&out, &hjb_csv(&problem, f, &comments)?)?;
                    }
                    let body = json!({ "error": e.to_string(), "report": partial });
                    write_file(&report_path, &envelope("solve-hjb", &loaded, seed, "error", body))?;
                    match e {
                        HjbError::InvalidSchedule | HjbError::GridMismatch => Err(CliError::Input(e.to_string())),
                        _ => Err(CliError::Solver(e.to_string())),
                    }
                }
            }
        }
        Command::Residual { config, field, eps, out, seed } => {
            let loaded = load(&config)?;
            let problem = loaded.spec.build_problem()?;
            let u = read_field(&problem, &field)?;
            let limit = hjb_residual(&problem, &u).map_err(|e| CliError::Input(e.to_string()))?;
            let mut body = json!({ "hjb": to_value(&limit) });
            if let Some(eps) = eps {
                let sys = NiddSystem::new(&problem, check_eps(eps)?).map_err(|e| CliError::Input(e.to_string()))?;
                let r = sys.residual(&u.interior_values());
                let sup = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                body["nidd"] = json!({ "eps": eps, "residual_sup": sup });
            }
            emit(out.as_deref(), &envelope("residual", &loaded, seed, "ok", body))
        }
        Command::Simulate { config, policy, field, eps, x0, direction, rate, paths, seed, out } => {
            let loaded = load(&config)?;
            let dim = loaded.spec.dim();
            let params = loaded.spec.sde_params()?;
            let x0 = parse_point(&x0, dim, "--x0")?;
            let pol = match policy {
                PolicyKind::Null => ControlPolicy::NullControl,
                PolicyKind::Penalized => {
                    let eps = check_eps(eps.ok_or_else(|| CliError::Usage("--policy penalized needs --eps".into()))?)?;
                    let path = field.ok_or_else(|| CliError::Usage("--policy penalized needs --field".into()))?;
                    let problem = loaded.spec.build_problem()?;
                    let u = read_field(&problem, &path)?;
                    penalized_policy(&u, eps, &loaded.spec.coefficients.g_cost)
                }
                PolicyKind::Constant => {
                    let eps = check_eps(eps.ok_or_else(|| CliError::Usage("--policy constant needs --eps".into()))?)?;
                    let d = direction.ok_or_else(|| CliError::Usage("--policy constant needs --direction".into()))?;
                    let rate = rate.ok_or_else(|| CliError::Usage("--policy constant needs --rate".into()))?;
                    ControlPolicy::ConstantRate { n: parse_point(&d, dim, "--direction")?, rate, eps }
                }
            };
            let est = estimate_penalized_value(&params, &pol, &x0, paths, seed)?;
            let body = json!({
                "policy": format!("{policy:?}").to_lowercase(),
                "x0": x0,
                "dt": params.dt,
                "t_max": params.t_max,
                "estimate": to_value(&est),
            });
            emit(out.as_deref(), &envelope("simulate", &loaded, seed, "ok", body))
        }
        Command::Verify { config, mode, field, eps, x0, controls, paths, seed, out } => {
            let loaded = load(&config)?;
            let dim = loaded.spec.dim();
            let params = loaded.spec.sde_params()?;
            let problem = loaded.spec.build_problem()?;
            let u = read_field(&problem, &field)?;
            let points: Vec<Vec<f64>> = x0.iter().map(|s| parse_point(s, dim, "--x0")).collect::<Result<_, _>>()?;
            let vmode = match mode {
                ModeKind::Penalized => VerifyMode::Penalized {
                    eps: check_eps(eps.ok_or_else(|| CliError::Usage("--mode penalized needs --eps".into()))?)?,
                },
                ModeKind::Singular => VerifyMode::Singular {
                    controls: match controls {
                        Some(p) => {
                            let text = std::fs::read_to_string(&p)
                                .map_err(|e| CliError::Input(format!("cannot read {}: {e}", p.display())))?;
                            parse_control_specs(&text, dim)?
                        }
                        None => default_test_controls(dim),
                    },
                },
            };
            let report = verify_value_equality(&params, &u, &vmode, &points, paths, seed)?;
            let status = if report.all_pass { "pass" } else { "fail" };
            eprintln!("verification: {}", status.to_uppercase());
            emit(out.as_deref(), &envelope("verify", &loaded, seed, status, json!({ "verification": to_value(&report) })))
        }
    }
}

/// The null control and two constant-rate controls along the first axis.
pub fn default_test_controls(dim: usize) -> Vec<ControlPathSpec> {
    let mut e1 = vec![0.0; dim];
    e1[0] = 1.0;
    let minus: Vec<f64> = e1.iter().map(|v| -v).collect();
    vec![
        ControlPathSpec::null(dim),
        ControlPathSpec { direction: e1, rate: 0.5, pushes: Vec::new() },
        ControlPathSpec { direction: minus, rate: 2.0, pushes: Vec::new() },
    ]
}
