//! Command-line pipeline: synthesize (with the refinement loop over `K`),
//! verify, floquet, export-sdpa, check-complex and certify.
//!
//! Exit codes: 0 success, 1 infeasible up to `k_max`, 2 verification
//! failed, 3 input error, 4 numerical failure.

pub mod certificate;
pub mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpa_metric::CpaMetric;
use crate::floquet_oracle::{find_periodic_orbit, integrate, monodromy, FloquetError};
use crate::sdp_assembly::{assemble, sdpa, SdpProblem, VariableMap};
use crate::sdp_solver::{certify, solve, SolveStatus, SolverError};
use crate::system::SystemDefinition;
use crate::triangulation::{build_complex, check_complex, SimplicialComplex, TriangulationError};
use crate::verifier::{verify, SampleOptions, VerificationReport, VerifyError};

pub use certificate::{Certificate, SolverStats};
pub use config::{Config, Mode, RegionSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::NotFeasibleInput(_) | VerifyError::Io(_) => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidSettings(_) => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Complex of level `k` with derivative bounds attached.
pub fn build(config: &Config, sys: &SystemDefinition, k: u32) -> Result<SimplicialComplex, CliError> {
    let mut complex = build_complex(&config.region()?, sys.period(), k, &config.scaling_matrix()?).map_err(|e| match e {
        TriangulationError::SingularSimplex(_) => CliError::Numerical(e.to_string()),
        _ => CliError::Input(e.to_string()),
    })?;
    complex.attach_bounds(sys).map_err(|e| CliError::Input(format!("derivative bounds: {e}")))?;
    Ok(complex)
}

pub fn build_problem(config: &Config, sys: &SystemDefinition, complex: &SimplicialComplex) -> Result<(SdpProblem, VariableMap), CliError> {
    assemble(complex, sys, &config.assembly_options()).map_err(|e| CliError::Input(e.to_string()))
}

/// Options shared by the commands that verify.
#[derive(Debug, Clone, Copy, PartialEq, Args)]
pub struct VerifyArgs {
    /// Interior samples in total, spread evenly over the simplices.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Samples per boundary facet for the advisory flow scan.
    #[arg(long, default_value_t = 4)]
    pub boundary_samples: usize,
}

impl Default for VerifyArgs {
    fn default() -> Self {
        Self { samples: 100_000, seed: 0, tol: 1e-6, boundary_samples: 4 }
    }
}

impl VerifyArgs {
    fn sample_options(&self, record: bool) -> Result<SampleOptions, CliError> {
        if self.samples == 0 {
            return Err(CliError::Input("--samples must be at least 1".into()));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(CliError::Input("--tol must be a nonnegative number".into()));
        }
        Ok(SampleOptions { samples: self.samples, seed: self.seed, tol: self.tol, record, ..SampleOptions::default() })
    }
}

/// Short description of the last infeasibility certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaySummary {
    pub value: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Synthesis {
    Certified(Box<Certificate>),
    /// No feasible level up to `k_max`.
    Exhausted { k: u32, status: SolveStatus, ray: Option<RaySummary> },
}

/// Runs the refinement loop `K = k_min..=k_max`. Progress goes to stderr.
pub fn synthesize(config: &Config, verify_args: &VerifyArgs, csv: Option<&Path>) -> Result<Synthesis, CliError> {
    config.validate()?;
    let sys = config.system()?;
    for w in sys.warnings() {
        eprintln!("warning: {w}");
    }
    let options = verify_args.sample_options(csv.is_some())?;
    let mut last = (config.k_min, SolveStatus::Infeasible, None);
    for k in config.k_min..=config.k_max {
        let t0 = Instant::now();
        let complex = build(config, &sys, k)?;
        let (problem, map) = build_problem(config, &sys, &complex)?;
        let sol = solve(&problem, &config.solver)?;
        eprintln!(
            "K = {k}: {} simplices, {} variables, {} blocks: {:?} after {} iterations ({:.2} s)",
            complex.num_simplices(),
            problem.num_vars(),
            problem.num_blocks(),
            sol.status,
            sol.iterations,
            t0.elapsed().as_secs_f64()
        );
        if !sol.is_feasible() {
            let ray = sol.dual_ray.as_ref().map(|r| RaySummary { value: r.value, residual: r.residual });
            last = (k, sol.status, ray);
            continue;
        }
        let cpa = CpaMetric::new(&complex, map.metric_values(&sol.y)).map_err(|e| CliError::Numerical(e.to_string()))?;
        let bounds = crate::verifier::MetricBounds { c: map.c_values(&sol.y), d: map.d_values(&sol.y) };
        let report = verify(&cpa, &sys, &bounds, config.epsilon0, Some((&problem, &sol.y)), &options, verify_args.boundary_samples)?;
        if let Some(path) = csv {
            let file = std::fs::File::create(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            report.sampled.write_csv(std::io::BufWriter::new(file)).map_err(|e| CliError::Input(e.to_string()))?;
        }
        let stats = SolverStats {
            status: sol.status,
            iterations: sol.iterations,
            gap: sol.gap,
            objective: sol.objective,
            variables: problem.num_vars(),
            blocks: problem.num_blocks(),
        };
        return Ok(Synthesis::Certified(Box::new(Certificate::new(config, &complex, &map, &sol.y, stats, report))));
    }
    Ok(Synthesis::Exhausted { k: last.0, status: last.1, ray: last.2 })
}

/// Rebuilds the complex of the certificate and runs every verifier check.
pub fn verify_certificate(
    cert: &Certificate,
    config: Option<&Config>,
    verify_args: &VerifyArgs,
    csv: Option<&Path>,
) -> Result<VerificationReport, CliError> {
    let config = config.unwrap_or(&cert.config);
    let sys = config.system()?;
    let complex = build(config, &sys, cert.k)?;
    if !cert.matches(&complex) {
        return Err(CliError::Input("certificate vertices do not match the complex of the config".into()));
    }
    let (problem, map) = build_problem(config, &sys, &complex)?;
    let y = cert.variable_vector(&map)?;
    let cpa = CpaMetric::new(&complex, cert.metric_values()).map_err(|e| CliError::Input(e.to_string()))?;
    let options = verify_args.sample_options(csv.is_some())?;
    let report = verify(&cpa, &sys, &cert.bounds(), config.epsilon0, Some((&problem, &y)), &options, verify_args.boundary_samples)?;
    if let Some(path) = csv {
        let file = std::fs::File::create(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        report.sampled.write_csv(std::io::BufWriter::new(file)).map_err(|e| CliError::Input(e.to_string()))?;
    }
    Ok(report)
}

/// Oracle exponents next to the certified bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloquetComparison {
    pub x_star: Vec<f64>,
    pub residual: f64,
    pub exponents: Vec<f64>,
    /// `-1/(2C)` from the certificate.
    pub bound: Option<f64>,
    /// The bound lies below the largest exponent by more than the tolerance.
    pub violated: bool,
}

pub fn floquet(config: &Config, cert: Option<&Certificate>, tol: f64, csv: Option<&Path>) -> Result<FloquetComparison, CliError> {
    let sys = config.system()?;
    let guess = config.orbit_guess.clone().unwrap_or_else(|| vec![0.0; sys.dim()]);
    let steps = config.floquet_steps;
    let oracle_err = |e: FloquetError| match e {
        FloquetError::InvalidInput(m) => CliError::Input(m),
        other => CliError::Numerical(other.to_string()),
    };
    let orbit = find_periodic_orbit(&sys, &guess, 1e-10, 50, steps).map_err(oracle_err)?;
    let fl = monodromy(&sys, &orbit, steps).map_err(oracle_err)?;
    if let Some(path) = csv {
        let tr = integrate(&sys, 0.0, &fl.x_star, sys.period(), steps).map_err(oracle_err)?;
        let file = std::fs::File::create(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        tr.write_csv(std::io::BufWriter::new(file)).map_err(|e| CliError::Input(e.to_string()))?;
    }
    let bound = cert.map(|c| crate::verifier::floquet_bound(c.bounds().c_max())).transpose()?;
    let top = fl.max_exponent().unwrap_or(f64::NEG_INFINITY);
    Ok(FloquetComparison {
        violated: bound.is_some_and(|b| b < top - tol),
        x_star: fl.x_star,
        residual: fl.residual,
        exponents: fl.exponents,
        bound,
    })
}

#[derive(Debug, Parser)]
#[command(name = "cpa-contraction", version, about = "Contraction metrics for time-periodic ODEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Refine K from k_min until the SDP is feasible, then verify and write a certificate.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        /// Certificate path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides k_max from the config.
        #[arg(long)]
        max_k: Option<u32>,
        /// CSV dump of the verification samples.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        verify: VerifyArgs,
    },
    /// Re-verify a certificate.
    Verify {
        certificate: PathBuf,
        /// Config to rebuild from instead of the one stored in the certificate.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        verify: VerifyArgs,
    },
    /// Periodic orbit, monodromy and Floquet exponents, with the certified bound if given.
    Floquet {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        certificate: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// CSV dump of one period of the orbit.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write the SDP of level K in sparse SDPA format.
    ExportSdpa {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate the triangulation of level K.
    CheckComplex {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: u32,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check an externally computed solution vector against the SDP of level K.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        k: u32,
        #[arg(long)]
        import_y: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
}

fn load_config(path: &Path) -> Result<Config, CliError> {
    Config::from_json(&read(path)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write(p, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn print_report(r: &VerificationReport) {
    let s = &r.sampled;
    eprintln!(
        "verification: {} samples, max lambda_max {:.6e}, max L_M {:.6e} (bound {:.6e}), min lambda_min(M) {:.6e}",
        s.samples, s.max_lambda, s.max_lm, s.lm_bound, s.min_metric_eigenvalue
    );
    if let Some(v) = &r.vertex {
        eprintln!("vertex constraints: {} violations, worst per family {:?}", v.violations, v.worst);
    }
    eprintln!(
        "estimates: worst gap ratio {:.3e}, worst interpolation ratio {:.3e}; boundary: {} of {} facets with outward flow",
        s.worst_gap_ratio,
        s.worst_interpolation_ratio,
        r.boundary.outward_facets.len(),
        r.boundary.facets_checked
    );
    eprintln!("C = {:.6e}, mu_max = {:.6e}, Floquet bound {:.6e}", r.c, r.mu_max, r.floquet_bound);
    eprintln!("{}", if r.passed && r.estimates_hold { "PASS" } else { "FAIL" });
}

fn run_command(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Synthesize { config, out, max_k, csv, verify } => {
            let mut config = load_config(&config)?;
            if let Some(k) = max_k {
                config.k_max = k;
                config.validate()?;
            }
            match synthesize(&config, &verify, csv.as_deref())? {
                Synthesis::Certified(cert) => {
                    print_report(&cert.verification);
                    emit(out.as_deref(), &cert.to_json())?;
                    let ok = cert.verification.passed && cert.verification.estimates_hold;
                    Ok(if ok { 0 } else { 2 })
                }
                Synthesis::Exhausted { k, status, ray } => {
                    eprintln!("no certificate up to K = {k} (last status {status:?})");
                    if let Some(r) = ray {
                        eprintln!("last dual ray: <F_0, Z> = {:.3e}, max |<F_i, Z>| = {:.3e}", r.value, r.residual);
                    }
                    Ok(if status == SolveStatus::Infeasible { 1 } else { 4 })
                }
            }
        }
        Command::Verify { certificate, config, out, csv, verify } => {
            let cert = Certificate::from_json(&read(&certificate)?)?;
            let config = config.as_deref().map(load_config).transpose()?;
            let report = verify_certificate(&cert, config.as_ref(), &verify, csv.as_deref())?;
            print_report(&report);
            emit(out.as_deref(), &serde_json::to_string_pretty(&report).expect("report serializes"))?;
            Ok(if report.passed && report.estimates_hold { 0 } else { 2 })
        }
        Command::Floquet { config, certificate, tol, csv } => {
            let config = load_config(&config)?;
            let cert = certificate.as_deref().map(|p| read(p).and_then(|t| Certificate::from_json(&t))).transpose()?;
            let cmp = floquet(&config, cert.as_ref(), tol, csv.as_deref())?;
            println!("periodic orbit x* = {:?} (residual {:.2e})", cmp.x_star, cmp.residual);
            println!("{:>4}  {:>16}", "i", "exponent");
            for (i, e) in cmp.exponents.iter().enumerate() {
                println!("{:>4}  {:>16.9}", i + 1, e);
            }
            match cmp.bound {
                Some(b) => println!("certified bound -1/(2C) = {b:.9}{}", if cmp.violated { "  VIOLATED" } else { "" }),
                None => println!("no certificate given"),
            }
            Ok(if cmp.violated { 2 } else { 0 })
        }
        Command::ExportSdpa { config, k, out } => {
            let config = load_config(&config)?;
            let sys = config.system()?;
            let complex = build(&config, &sys, k)?;
            let (problem, _) = build_problem(&config, &sys, &complex)?;
            let text = sdpa::export_sdpa(&problem).map_err(|e| CliError::Input(e.to_string()))?;
            write(&out, &text)?;
            eprintln!("wrote {} variables, {} blocks to {}", problem.num_vars(), problem.num_blocks(), out.display());
            Ok(0)
        }
        Command::CheckComplex { config, k, samples, seed } => {
            let config = load_config(&config)?;
            let sys = config.system()?;
            let complex = build(&config, &sys, k)?;
            let report = check_complex(&complex, samples, seed);
            println!(
                "{} simplices, {} pairs checked, {} face violations, {} unpaired vertices, {} of {} samples uncovered",
                complex.num_simplices(),
                report.pairs_checked,
                report.face_violations.len(),
                report.unpaired_vertices.len(),
                report.uncovered_points.len(),
                report.coverage_samples
            );
            Ok(if report.is_valid() { 0 } else { 2 })
        }
        Command::Certify { config, k, import_y, tol } => {
            let config = load_config(&config)?;
            let sys = config.system()?;
            let complex = build(&config, &sys, k)?;
            let (problem, _) = build_problem(&config, &sys, &complex)?;
            let y = sdpa::parse_vector(&read(&import_y)?).map_err(|e| CliError::Input(e.to_string()))?;
            if y.len() != problem.num_vars() {
                return Err(CliError::Input(format!("y has {} entries, the problem {} variables", y.len(), problem.num_vars())));
            }
            let report = certify(&problem, &y, tol)?;
            println!("worst lambda_min {:.6e}; {} blocks below -{tol:e}", report.worst, report.flagged.len());
            Ok(if report.is_clean() { 0 } else { 2 })
        }
    }
}

/// Parses `args` and runs the command; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match run_command(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
