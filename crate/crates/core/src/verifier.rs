//! Independent confirmation of a solved metric: sampled contraction and
//! `L_M` checks inside simplices, vertex constraint residuals, the
//! interpolation and error-gap estimates behind the vertex constraints, the
//! Floquet bound, and an advisory boundary-flow scan.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpa_metric::{contraction_matrix, lm_from_parts, top_eigenvalue, CpaError, CpaMetric};
use crate::linalg::lambda_min;
use crate::sdp_assembly::{compute_e_coeffs, AssemblyError, SdpProblem};
use crate::sdp_solver::{certify, SolverError};
use crate::system::{SystemDefinition, SystemError};
use crate::triangulation::SimplicialComplex;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("input is not a feasible solution: {0}")]
    NotFeasibleInput(String),
    #[error(transparent)]
    Cpa(#[from] CpaError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads `null` (how JSON writes non-finite numbers) back as `NaN`.
pub(crate) fn nullable_f64<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Option::<f64>::deserialize(d).map(|v| v.unwrap_or(f64::NAN))
}

/// Smallest barycentric weight of a sampled point.
pub const MIN_WEIGHT: f64 = 1e-6;

/// Uniform point of the open standard simplex with `k` weights, every weight
/// at least [`MIN_WEIGHT`].
pub fn dirichlet_weights(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v = (*v / s).max(MIN_WEIGHT));
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

fn simplex_vertices(complex: &SimplicialComplex, simplex: usize) -> Vec<Vec<f64>> {
    complex.simplex(simplex).vertices.iter().map(|&v| complex.vertex(v as usize).to_vec()).collect()
}

fn combine(vertices: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; vertices[0].len()];
    for (v, &w) in vertices.iter().zip(weights) {
        for (a, b) in p.iter_mut().zip(v) {
            *a += w * b;
        }
    }
    p
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// `-1/(2C)`: an upper bound on the real parts of the Floquet exponents of
/// the periodic orbit inside a certified region.
pub fn floquet_bound(c: f64) -> Result<f64, VerifyError> {
    if !(c.is_finite() && c > 0.0) {
        return Err(VerifyError::NotFeasibleInput(format!("metric bound C = {c} must be positive")));
    }
    Ok(-0.5 / c)
}

/// Per-simplex data reused by every sample drawn in it.
struct SimplexData {
    vertices: Vec<Vec<f64>>,
    f_vertices: Vec<Vec<f64>>,
    /// `M Df + Df^T M + (w_ij . f~)` at each vertex.
    vertex_matrices: Vec<Vec<f64>>,
    /// `E_nu`.
    e: f64,
    /// `(n + 1) B_nu h_nu^2`.
    interpolation_bound: f64,
}

fn simplex_data(
    cpa: &CpaMetric<'_>,
    sys: &SystemDefinition,
    simplex: usize,
    c: f64,
    d: f64,
) -> Result<SimplexData, VerifyError> {
    let complex = cpa.complex();
    let n = complex.dim();
    let vertices = simplex_vertices(complex, simplex);
    let bounds = complex
        .bounds(simplex)
        .ok_or_else(|| VerifyError::NotFeasibleInput(format!("no derivative bounds on simplex {simplex}")))?;
    let h = complex.geometry(simplex).h;
    let e = compute_e_coeffs(h, n, &bounds, sys.smoothness())?.value(c, d);
    let slots = complex.simplex_slots(simplex);
    let mut f_vertices = Vec::with_capacity(n + 2);
    let mut vertex_matrices = Vec::with_capacity(n + 2);
    for (v, &slot) in vertices.iter().zip(&slots) {
        let ft = sys.eval_extended(v[0], &v[1..])?;
        let jac = sys.eval_jacobian(v[0], &v[1..])?;
        let orbital = cpa.directional_derivative(simplex, &ft);
        vertex_matrices.push(contraction_matrix(&cpa.slot_matrix(slot), &jac, &orbital, n));
        f_vertices.push(ft[1..].to_vec());
    }
    let interpolation_bound = (n as f64 + 1.0) * bounds.second * h * h;
    Ok(SimplexData { vertices, f_vertices, vertex_matrices, e, interpolation_bound })
}

/// Worst sampled interpolation error of `f` on one simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationCheck {
    /// `max ||f(x) - sum_k l_k f(x_k)||_inf`.
    #[serde(deserialize_with = "nullable_f64")]
    pub worst_error: f64,
    /// `(n + 1) B_nu h_nu^2`.
    #[serde(deserialize_with = "nullable_f64")]
    pub bound: f64,
    /// `worst_error / bound`, or 0 when the bound is 0.
    #[serde(deserialize_with = "nullable_f64")]
    pub worst_ratio: f64,
}

impl InterpolationCheck {
    pub fn holds(&self, tol: f64) -> bool {
        if self.bound == 0.0 {
            self.worst_error <= 1e-12
        } else {
            self.worst_ratio <= 1.0 + tol
        }
    }
}

fn interpolation_error(sys: &SystemDefinition, data: &SimplexData, weights: &[f64], point: &[f64]) -> Result<f64, VerifyError> {
    let f = sys.eval_f(point[0], &point[1..])?;
    let interp = combine(&data.f_vertices, weights);
    Ok(max_abs_diff(&f, &interp))
}

/// Samples `samples` interior points of `simplex` and compares `f` with its
/// affine interpolant. Needs derivative bounds attached to the complex.
pub fn verify_interpolation_bound(
    complex: &SimplicialComplex,
    simplex: usize,
    sys: &SystemDefinition,
    samples: usize,
    seed: u64,
) -> Result<InterpolationCheck, VerifyError> {
    let n = complex.dim();
    let bounds = complex
        .bounds(simplex)
        .ok_or_else(|| VerifyError::NotFeasibleInput(format!("no derivative bounds on simplex {simplex}")))?;
    let h = complex.geometry(simplex).h;
    let vertices = simplex_vertices(complex, simplex);
    let f_vertices = vertices
        .iter()
        .map(|v| sys.eval_f(v[0], &v[1..]))
        .collect::<Result<Vec<_>, _>>()?;
    let data = SimplexData {
        vertices,
        f_vertices,
        vertex_matrices: Vec::new(),
        e: 0.0,
        interpolation_bound: (n as f64 + 1.0) * bounds.second * h * h,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let w = dirichlet_weights(&mut rng, n + 2);
        let p = combine(&data.vertices, &w);
        worst = worst.max(interpolation_error(sys, &data, &w, &p)?);
    }
    Ok(InterpolationCheck { worst_error: worst, bound: data.interpolation_bound, worst_ratio: ratio(worst, data.interpolation_bound) })
}

fn ratio(value: f64, bound: f64) -> f64 {
    if bound == 0.0 {
        0.0
    } else {
        value / bound
    }
}

/// Distance between the contraction matrix inside a simplex and the
/// interpolated vertex matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCheck {
    /// `max ||A(x) - sum_k l_k V_k||_max` with `A = M Df + Df^T M + M'_+`.
    #[serde(deserialize_with = "nullable_f64")]
    pub worst_gap: f64,
    /// `E_nu / n`.
    #[serde(deserialize_with = "nullable_f64")]
    pub bound: f64,
    /// `max lambda_max(sum_k l_k V_k) + E_nu`, which the vertex constraints
    /// keep at or below `-1`.
    #[serde(deserialize_with = "nullable_f64")]
    pub worst_interpolated: f64,
}

impl GapCheck {
    pub fn holds(&self, gap_tol: f64, tol: f64) -> bool {
        self.worst_gap <= self.bound + gap_tol && self.worst_interpolated <= -1.0 + tol
    }
}

struct SampleEval {
    point: Vec<f64>,
    lambda: f64,
    lm: Option<f64>,
    metric_min: f64,
    gap: f64,
    interpolated: f64,
    interpolation: f64,
}

fn evaluate_sample(
    cpa: &CpaMetric<'_>,
    sys: &SystemDefinition,
    simplex: usize,
    data: &SimplexData,
    weights: &[f64],
) -> Result<SampleEval, VerifyError> {
    let n = cpa.dim();
    let point = combine(&data.vertices, weights);
    let ft = sys.eval_extended(point[0], &point[1..])?;
    let jac = sys.eval_jacobian(point[0], &point[1..])?;
    let metric = cpa.metric_in_simplex(simplex, weights);
    // interior points: the simplex itself is the forward simplex
    let orbital = cpa.directional_derivative(simplex, &ft);
    let a = contraction_matrix(&metric, &jac, &orbital, n);
    let interp = combine(&data.vertex_matrices, weights);
    let gap = max_abs_diff(&a, &interp);
    let interpolated = top_eigenvalue(&interp, n) + data.e;
    let f_interp = combine(&data.f_vertices, weights);
    let interpolation = max_abs_diff(&ft[1..], &f_interp);
    Ok(SampleEval {
        lambda: top_eigenvalue(&a, n),
        lm: lm_from_parts(&a, &metric, n),
        metric_min: lambda_min(&metric, n),
        gap,
        interpolated,
        interpolation,
        point,
    })
}

/// The error-gap estimate on one simplex with metric bounds `c`, `d`.
pub fn verify_error_gap(
    cpa: &CpaMetric<'_>,
    sys: &SystemDefinition,
    simplex: usize,
    c: f64,
    d: f64,
    samples: usize,
    seed: u64,
) -> Result<GapCheck, VerifyError> {
    let n = cpa.dim();
    let data = simplex_data(cpa, sys, simplex, c, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GapCheck { worst_gap: 0.0, bound: data.e / n as f64, worst_interpolated: f64::NEG_INFINITY };
    for _ in 0..samples {
        let w = dirichlet_weights(&mut rng, n + 2);
        let s = evaluate_sample(cpa, sys, simplex, &data, &w)?;
        out.worst_gap = out.worst_gap.max(s.gap);
        out.worst_interpolated = out.worst_interpolated.max(s.interpolated);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub point: Vec<f64>,
    pub lambda_max: f64,
    /// `NaN` where the metric is not positive definite.
    pub lm: f64,
}

/// Result of the sampled interior checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledCheck {
    pub samples: usize,
    pub seed: u64,
    #[serde(deserialize_with = "nullable_f64")]
    pub tol: f64,
    /// Largest `lambda_max(M Df + Df^T M + M'_+)`.
    #[serde(deserialize_with = "nullable_f64")]
    pub max_lambda: f64,
    pub max_lambda_point: Vec<f64>,
    /// Largest `L_M` over samples with a positive definite metric.
    #[serde(deserialize_with = "nullable_f64")]
    pub max_lm: f64,
    /// `-1/(2C)`.
    #[serde(deserialize_with = "nullable_f64")]
    pub lm_bound: f64,
    /// Smallest `lambda_min(M)`.
    #[serde(deserialize_with = "nullable_f64")]
    pub min_metric_eigenvalue: f64,
    /// Points where `M` is not positive definite.
    pub not_positive_definite: Vec<Vec<f64>>,
    /// Samples above `-1 + tol`.
    pub lambda_violations: usize,
    /// Samples with `L_M > -1/(2C) + tol`.
    pub lm_violations: usize,
    /// Worst `||A - sum_k l_k V_k||_max / (E_nu / n)` (0 where `E_nu = 0`).
    #[serde(deserialize_with = "nullable_f64")]
    pub worst_gap_ratio: f64,
    /// Samples with a gap above `E_nu / n + gap_tol`.
    pub gap_violations: usize,
    /// Largest `lambda_max(sum_k l_k V_k) + E_nu`.
    #[serde(deserialize_with = "nullable_f64")]
    pub worst_interpolated: f64,
    /// Worst interpolation error of `f` over `(n + 1) B_nu h_nu^2`.
    #[serde(deserialize_with = "nullable_f64")]
    pub worst_interpolation_ratio: f64,
    pub interpolation_violations: usize,
    #[serde(skip)]
    pub records: Vec<SampleRecord>,
}

impl SampledCheck {
    /// Contraction, `L_M` and positivity at every sample.
    pub fn passed(&self, epsilon0: f64) -> bool {
        self.lambda_violations == 0
            && self.lm_violations == 0
            && self.not_positive_definite.is_empty()
            && self.min_metric_eigenvalue >= epsilon0 - self.tol
    }

    /// Interpolation and error-gap estimates at every sample.
    pub fn estimates_hold(&self) -> bool {
        self.gap_violations == 0 && self.interpolation_violations == 0 && self.worst_interpolated <= -1.0 + self.tol
    }

    /// CSV `t,x1..xn,lambda_max,lm` of the recorded samples.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let n = self.records.first().map_or(0, |r| r.point.len().saturating_sub(1));
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend(["lambda_max".to_string(), "lm".to_string()]);
        writeln!(out, "{}", header.join(","))?;
        for r in &self.records {
            let row: Vec<String> =
                r.point.iter().chain([&r.lambda_max, &r.lm]).map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Options of the sampled checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleOptions {
    /// Total sample count, spread evenly over the simplices in index order.
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
    /// Absolute slack of the error-gap comparison.
    pub gap_tol: f64,
    /// Keep every sample for the CSV dump.
    pub record: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self { samples: 100_000, seed: 0, tol: 1e-6, gap_tol: 1e-8, record: false }
    }
}

/// Metric bounds `C` and `D`: one value each, or one per simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBounds {
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

impl MetricBounds {
    pub fn uniform(c: f64, d: f64) -> Self {
        Self { c: vec![c], d: vec![d] }
    }

    fn at(v: &[f64], simplex: usize) -> f64 {
        if v.len() == 1 {
            v[0]
        } else {
            v[simplex]
        }
    }

    pub fn c_at(&self, simplex: usize) -> f64 {
        Self::at(&self.c, simplex)
    }

    pub fn d_at(&self, simplex: usize) -> f64 {
        Self::at(&self.d, simplex)
    }

    /// `max_nu C_nu`.
    pub fn c_max(&self) -> f64 {
        self.c.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Draws interior samples of every simplex (barycentric Dirichlet draws,
/// weights clipped at [`MIN_WEIGHT`]) and evaluates the contraction matrix,
/// `L_M`, the metric's smallest eigenvalue and the interpolation estimates.
pub fn verify_contraction_sampled(
    cpa: &CpaMetric<'_>,
    sys: &SystemDefinition,
    bounds: &MetricBounds,
    options: &SampleOptions,
) -> Result<SampledCheck, VerifyError> {
    let complex = cpa.complex();
    let s = complex.num_simplices();
    let n = cpa.dim();
    let c = bounds.c_max();
    if bounds.c.len() != 1 && bounds.c.len() != s || bounds.d.len() != bounds.c.len() {
        return Err(VerifyError::NotFeasibleInput(format!(
            "{} C values and {} D values for {s} simplices",
            bounds.c.len(),
            bounds.d.len()
        )));
    }
    if bounds.d.iter().any(|d| !d.is_finite()) {
        return Err(VerifyError::NotFeasibleInput("D must be finite".into()));
    }
    let lm_bound = floquet_bound(c)?;
    let tol = options.tol;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut out = SampledCheck {
        samples: 0,
        seed: options.seed,
        tol,
        max_lambda: f64::NEG_INFINITY,
        max_lambda_point: Vec::new(),
        max_lm: f64::NEG_INFINITY,
        lm_bound,
        min_metric_eigenvalue: f64::INFINITY,
        not_positive_definite: Vec::new(),
        lambda_violations: 0,
        lm_violations: 0,
        worst_gap_ratio: 0.0,
        gap_violations: 0,
        worst_interpolated: f64::NEG_INFINITY,
        worst_interpolation_ratio: 0.0,
        interpolation_violations: 0,
        records: Vec::new(),
    };
    let base = options.samples / s;
    let extra = options.samples % s;
    for simplex in 0..s {
        let count = base + usize::from(simplex < extra);
        if count == 0 {
            continue;
        }
        let data = simplex_data(cpa, sys, simplex, bounds.c_at(simplex), bounds.d_at(simplex))?;
        let gap_bound = data.e / n as f64;
        for _ in 0..count {
            let w = dirichlet_weights(&mut rng, n + 2);
            let e = evaluate_sample(cpa, sys, simplex, &data, &w)?;
            out.samples += 1;
            if e.lambda > out.max_lambda {
                out.max_lambda = e.lambda;
                out.max_lambda_point = e.point.clone();
            }
            out.lambda_violations += usize::from(e.lambda > -1.0 + tol);
            match e.lm {
                Some(lm) => {
                    out.max_lm = out.max_lm.max(lm);
                    out.lm_violations += usize::from(lm > lm_bound + tol);
                }
                None => out.not_positive_definite.push(e.point.clone()),
            }
            out.min_metric_eigenvalue = out.min_metric_eigenvalue.min(e.metric_min);
            out.worst_gap_ratio = out.worst_gap_ratio.max(ratio(e.gap, gap_bound));
            out.gap_violations += usize::from(e.gap > gap_bound + options.gap_tol);
            out.worst_interpolated = out.worst_interpolated.max(e.interpolated);
            out.worst_interpolation_ratio =
                out.worst_interpolation_ratio.max(ratio(e.interpolation, data.interpolation_bound));
            let interp_ok = if data.interpolation_bound == 0.0 {
                e.interpolation <= 1e-12
            } else {
                e.interpolation <= data.interpolation_bound * (1.0 + tol)
            };
            out.interpolation_violations += usize::from(!interp_ok);
            if options.record {
                out.records.push(SampleRecord { point: e.point, lambda_max: e.lambda, lm: e.lm.unwrap_or(f64::NAN) });
            }
        }
    }
    Ok(out)
}

/// Smallest eigenvalue of each constraint family at the vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexCheck {
    /// Family name to worst `lambda_min`.
    pub worst: BTreeMap<String, f64>,
    pub violations: usize,
    pub tol: f64,
}

impl VertexCheck {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Re-evaluates every block of the assembled problem at `y`.
pub fn verify_vertex_constraints(problem: &SdpProblem, y: &[f64], tol: f64) -> Result<VertexCheck, VerifyError> {
    let report = certify(problem, y, tol)?;
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    for (b, &v) in report.min_eigenvalues.iter().enumerate() {
        let name = format!("{:?}", problem.tag(b).kind);
        let e = worst.entry(name).or_insert(f64::INFINITY);
        *e = e.min(v);
    }
    Ok(VertexCheck { worst, violations: report.flagged.len(), tol })
}

/// Boundary facets where the extended field `(1, f)` points out of the
/// triangulated domain at some sample. Positive invariance is the user's
/// hypothesis; this scan is advisory only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFlowReport {
    pub facets_checked: usize,
    pub samples_per_facet: usize,
    /// `(simplex, omitted local vertex)`.
    pub outward_facets: Vec<(usize, usize)>,
}

pub fn boundary_flow_check(
    complex: &SimplicialComplex,
    sys: &SystemDefinition,
    samples_per_facet: usize,
    seed: u64,
) -> Result<BoundaryFlowReport, VerifyError> {
    let mut report = BoundaryFlowReport { facets_checked: 0, samples_per_facet, outward_facets: Vec::new() };
    if samples_per_facet == 0 {
        return Ok(report);
    }
    let n = complex.dim();
    let d = n + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (simplex, omit) in complex.boundary_facets() {
        report.facets_checked += 1;
        let g = complex.geometry(simplex);
        // gradient of the omitted vertex's barycentric weight points inward
        let inward: Vec<f64> = if omit == 0 {
            (0..d).map(|r| -(0..d).map(|k| g.inverse[r * d + k]).sum::<f64>()).collect()
        } else {
            (0..d).map(|r| g.inverse[r * d + omit - 1]).collect()
        };
        let vertices = simplex_vertices(complex, simplex);
        let facet: Vec<Vec<f64>> =
            vertices.into_iter().enumerate().filter(|&(k, _)| k != omit).map(|(_, v)| v).collect();
        for _ in 0..samples_per_facet {
            let w = dirichlet_weights(&mut rng, d);
            let p = combine(&facet, &w);
            let ft = sys.eval_extended(p[0], &p[1..])?;
            let dot: f64 = ft.iter().zip(&inward).map(|(a, b)| a * b).sum();
            let scale: f64 = inward.iter().map(|v| v * v).sum::<f64>().sqrt();
            if dot < -1e-12 * scale {
                report.outward_facets.push((simplex, omit));
                break;
            }
        }
    }
    Ok(report)
}

/// Everything the verifier reports about one certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub sampled: SampledCheck,
    pub vertex: Option<VertexCheck>,
    pub boundary: BoundaryFlowReport,
    /// Largest `lambda_max(M)` over the domain, attained at a vertex.
    #[serde(deserialize_with = "nullable_f64")]
    pub mu_max: f64,
    /// `C` (or `max_nu C_nu`).
    #[serde(deserialize_with = "nullable_f64")]
    pub c: f64,
    /// `-1/(2C)`.
    #[serde(deserialize_with = "nullable_f64")]
    pub floquet_bound: f64,
    /// `-1/(2 mu_max)`, the sharper of the two bounds.
    #[serde(deserialize_with = "nullable_f64")]
    pub floquet_bound_mu: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub epsilon0: f64,
    pub passed: bool,
    /// Interpolation and error-gap estimates held at every sample.
    pub estimates_hold: bool,
}

/// Runs the sampled checks, the vertex re-evaluation (when the assembled
/// problem and its solution vector are given) and the boundary scan.
pub fn verify(
    cpa: &CpaMetric<'_>,
    sys: &SystemDefinition,
    bounds: &MetricBounds,
    epsilon0: f64,
    vertex_problem: Option<(&SdpProblem, &[f64])>,
    options: &SampleOptions,
    boundary_samples: usize,
) -> Result<VerificationReport, VerifyError> {
    let sampled = verify_contraction_sampled(cpa, sys, bounds, options)?;
    let vertex = match vertex_problem {
        Some((p, y)) => Some(verify_vertex_constraints(p, y, options.tol)?),
        None => None,
    };
    let complex = cpa.complex();
    let boundary = boundary_flow_check(complex, sys, boundary_samples, options.seed)?;
    let n = cpa.dim();
    let mu_max = (0..complex.num_slots())
        .map(|s| top_eigenvalue(&cpa.slot_matrix(s), n))
        .fold(f64::NEG_INFINITY, f64::max);
    let c = bounds.c_max();
    let passed = sampled.passed(epsilon0) && vertex.as_ref().is_none_or(VertexCheck::passed);
    let estimates_hold = sampled.estimates_hold();
    Ok(VerificationReport {
        floquet_bound: floquet_bound(c)?,
        floquet_bound_mu: if mu_max > 0.0 { -0.5 / mu_max } else { f64::NAN },
        sampled,
        vertex,
        boundary,
        mu_max,
        c,
        epsilon0,
        passed,
        estimates_hold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::parse_system;
    use crate::triangulation::{build_complex, Region, ScalingMatrix};
    use std::f64::consts::PI;

    fn lin1_complex(sys: &SystemDefinition, lo: f64, hi: f64, k: u32) -> SimplicialComplex {
        let mut c = build_complex(&Region::single(vec![(lo, hi)]).unwrap(), 2.0 * PI, k, &ScalingMatrix::identity(1)).unwrap();
        c.attach_bounds(sys).unwrap();
        c
    }

    fn lin1() -> SystemDefinition {
        parse_system("dim=1; period=6.283185307179586; f1 = -x1 + sin(t)").unwrap()
    }

    fn opts(samples: usize) -> SampleOptions {
        SampleOptions { samples, seed: 7, ..SampleOptions::default() }
    }

    #[test]
    fn dirichlet_weights_are_clipped_and_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for k in 2..5 {
            for _ in 0..200 {
                let w = dirichlet_weights(&mut rng, k);
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                assert!(w.iter().all(|&v| v >= MIN_WEIGHT * 0.999));
            }
        }
    }

    #[test]
    fn unit_metric_on_the_linear_example() {
        let sys = lin1();
        let complex = lin1_complex(&sys, -2.0, 1.0, 3);
        let cpa = CpaMetric::from_fn(&complex, |_| vec![1.0]).unwrap();
        let r = verify_contraction_sampled(&cpa, &sys, &MetricBounds::uniform(1.0, 0.0), &opts(2000)).unwrap();
        assert_eq!(r.samples, 2000);
        assert!((r.max_lambda + 2.0).abs() < 1e-12);
        assert!((r.max_lm + 1.0).abs() < 1e-12);
        assert_eq!(r.lm_bound, -0.5);
        assert!(r.passed(0.01));
        assert_eq!(r.gap_violations, 0);
    }

    #[test]
    fn no_state_dependence_means_no_contraction() {
        let sys = parse_system("dim=1; period=6.283185307179586; f1 = sin(t)").unwrap();
        let complex = lin1_complex(&sys, -1.0, 1.0, 2);
        let cpa = CpaMetric::from_fn(&complex, |_| vec![1.0]).unwrap();
        let r = verify_contraction_sampled(&cpa, &sys, &MetricBounds::uniform(1.0, 0.0), &opts(500)).unwrap();
        assert_eq!(r.max_lambda, 0.0);
        assert!(!r.passed(0.01));
    }

    #[test]
    fn negated_vertex_matrix_is_flagged() {
        let sys = lin1();
        let complex = lin1_complex(&sys, -2.0, 1.0, 2);
        let mut values = vec![1.0; complex.num_slots()];
        values[3] = -1.0;
        let cpa = CpaMetric::new(&complex, values).unwrap();
        let r = verify_contraction_sampled(&cpa, &sys, &MetricBounds::uniform(1.0, 0.0), &opts(5000)).unwrap();
        assert!(!r.not_positive_definite.is_empty());
        assert!(!r.passed(0.01));
    }

    #[test]
    fn invalid_bounds_are_rejected() {
        let sys = lin1();
        let complex = lin1_complex(&sys, -2.0, 1.0, 1);
        let cpa = CpaMetric::from_fn(&complex, |_| vec![1.0]).unwrap();
        for b in [MetricBounds::uniform(0.0, 0.0), MetricBounds { c: vec![1.0, 1.0], d: vec![0.0, 0.0] }] {
            assert!(matches!(
                verify_contraction_sampled(&cpa, &sys, &b, &opts(10)),
                Err(VerifyError::NotFeasibleInput(_))
            ));
        }
    }

    #[test]
    fn floquet_bound_formula() {
        assert_eq!(floquet_bound(1.0).unwrap(), -0.5);
        assert_eq!(floquet_bound(10.0).unwrap(), -0.05);
        assert!(floquet_bound(-1.0).is_err());
    }

    #[test]
    fn affine_field_interpolates_exactly() {
        let sys = parse_system("dim=2; period=1; f1 = 2*x1 - x2 + 3*t; f2 = x1 + 1").unwrap();
        let mut complex = build_complex(&Region::single(vec![(-1.0, 1.0), (-1.0, 1.0)]).unwrap(), 1.0, 1, &ScalingMatrix::identity(2)).unwrap();
        complex.attach_bounds(&sys).unwrap();
        for i in [0, 5, complex.num_simplices() - 1] {
            let r = verify_interpolation_bound(&complex, i, &sys, 200, i as u64).unwrap();
            assert_eq!(r.bound, 0.0);
            assert!(r.worst_error <= 1e-12 && r.holds(1e-9));
        }
        // constant metric: the gap vanishes with E = 0
        let cpa = CpaMetric::from_fn(&complex, |_| vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let g = verify_error_gap(&cpa, &sys, 3, 2.5, 0.0, 200, 1).unwrap();
        assert_eq!(g.bound, 0.0);
        assert!(g.worst_gap < 1e-12);
    }

    #[test]
    fn sine_interpolation_stays_below_the_bound() {
        let sys = lin1();
        let complex = lin1_complex(&sys, -2.0, 1.0, 3);
        for i in 0..complex.num_simplices() {
            let r = verify_interpolation_bound(&complex, i, &sys, 300, i as u64).unwrap();
            let h = complex.geometry(i).h;
            assert!(r.worst_error <= 2.0 * h * h);
            assert!(r.holds(0.0));
        }
    }

    #[test]
    fn boundary_flow_on_invariant_and_leaky_regions() {
        let sys = lin1();
        let inside = lin1_complex(&sys, -2.0, 1.0, 2);
        let r = boundary_flow_check(&inside, &sys, 20, 3).unwrap();
        assert!(r.facets_checked > 0);
        assert!(r.outward_facets.is_empty(), "{:?}", r.outward_facets);
        let narrow = lin1_complex(&sys, 0.5, 0.8, 3);
        assert!(!boundary_flow_check(&narrow, &sys, 20, 3).unwrap().outward_facets.is_empty());
        let empty = boundary_flow_check(&narrow, &sys, 0, 3).unwrap();
        assert_eq!((empty.facets_checked, empty.outward_facets.len()), (0, 0));
    }

    #[test]
    fn csv_dump_has_one_row_per_sample() {
        let sys = lin1();
        let complex = lin1_complex(&sys, -2.0, 1.0, 1);
        let cpa = CpaMetric::from_fn(&complex, |_| vec![1.0]).unwrap();
        let o = SampleOptions { record: true, ..opts(17) };
        let r = verify_contraction_sampled(&cpa, &sys, &MetricBounds::uniform(1.0, 0.0), &o).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("t,x1,lambda_max,lm"));
        assert_eq!(text.lines().count(), 18);
    }
}
