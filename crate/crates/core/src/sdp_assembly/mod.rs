//! Translation of the contraction-metric conditions on a simplicial complex
//! into a block-diagonal SDP.
//!
//! Unknowns are the metric entries at every vertex slot (shared by the
//! `t = 0` / `t = T` copies of a vertex, which makes the metric periodic),
//! the bounds `C` on the metric, and the bounds `D` on its gradients. The
//! block families are
//!
//! * `M(x_k) - eps0 I >= 0` per slot,
//! * `C I - M(x_k) >= 0` per simplex vertex (per slot when `C` is uniform),
//! * `D/(n+1) +- (w_ij)_l >= 0` per simplex, gradient entry and component,
//! * `-[M Df + Df^T M + (w_ij . f~)_ij + (a_C C + a_D D + 1) I] >= 0` per
//!   simplex vertex, with `f~ = (1, f)` and Jacobian `Df` at the vertex.

mod problem;
pub mod sdpa;

use thiserror::Error;

use crate::cpa_metric::{packed_indices, packed_len};
use crate::system::{DerivativeBounds, Smoothness, SystemDefinition, SystemError};
use crate::triangulation::SimplicialComplex;

pub use problem::{pack, packed_dot, packed_index, BlockKind, BlockRef, BlockTag, SdpProblem};

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("derivative bounds missing for simplex {0}")]
    MissingBounds(usize),
    #[error("the complex has no simplices")]
    EmptyComplex,
    #[error("epsilon0 must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("SDPA format error on line {line}: {message}")]
    Sdpa { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Pure feasibility.
    None,
    /// Minimize `C` (or `max_nu C_nu`).
    #[default]
    MinC,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyOptions {
    pub epsilon0: f64,
    /// One `C` and one `D` for all simplices.
    pub uniform_cd: bool,
    pub objective: Objective,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self { epsilon0: 0.01, uniform_cd: true, objective: Objective::MinC }
    }
}

/// `E_nu = a_c C_nu + a_d D_nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnuCoefficients {
    pub a_c: f64,
    pub a_d: f64,
}

impl EnuCoefficients {
    pub fn value(&self, c: f64, d: f64) -> f64 {
        self.a_c * c + self.a_d * d
    }
}

/// Interpolation-error coefficients of a simplex with diameter `h` in
/// dimension `n`.
pub fn compute_e_coeffs(
    h: f64,
    n: usize,
    bounds: &DerivativeBounds,
    smoothness: Smoothness,
) -> Result<EnuCoefficients, AssemblyError> {
    let nf = n as f64;
    let root = (nf + 1.0).sqrt();
    let b = bounds.second;
    Ok(match smoothness {
        Smoothness::C2 => EnuCoefficients {
            a_d: h * h * nf * b * root,
            a_c: 2.0 * h * nf * nf * (nf + 1.0) * b,
        },
        Smoothness::C3 => {
            let b3 = bounds.third.ok_or(AssemblyError::MissingBounds(usize::MAX))?;
            EnuCoefficients {
                a_d: h * h * nf * root * (1.0 + 4.0 * nf) * b,
                a_c: 2.0 * h * h * nf * nf * (nf + 1.0) * b3,
            }
        }
    })
}

/// Layout of the SDP variable vector.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableMap {
    pub n: usize,
    pub num_slots: usize,
    pub num_simplices: usize,
    pub uniform_cd: bool,
    pub has_cmax: bool,
}

impl VariableMap {
    pub fn entries_per_slot(&self) -> usize {
        packed_len(self.n)
    }

    pub fn metric_var(&self, slot: usize, entry: usize) -> usize {
        slot * self.entries_per_slot() + entry
    }

    fn cd_count(&self) -> usize {
        if self.uniform_cd {
            1
        } else {
            self.num_simplices
        }
    }

    pub fn c_var(&self, simplex: usize) -> usize {
        let base = self.num_slots * self.entries_per_slot();
        if self.uniform_cd {
            base
        } else {
            base + simplex
        }
    }

    pub fn d_var(&self, simplex: usize) -> usize {
        let base = self.num_slots * self.entries_per_slot() + self.cd_count();
        if self.uniform_cd {
            base
        } else {
            base + simplex
        }
    }

    pub fn cmax_var(&self) -> Option<usize> {
        self.has_cmax
            .then(|| self.num_slots * self.entries_per_slot() + 2 * self.cd_count())
    }

    pub fn num_vars(&self) -> usize {
        self.num_slots * self.entries_per_slot() + 2 * self.cd_count() + usize::from(self.has_cmax)
    }

    /// Packed metric values per slot.
    pub fn metric_values(&self, y: &[f64]) -> Vec<f64> {
        y[..self.num_slots * self.entries_per_slot()].to_vec()
    }

    pub fn c_values(&self, y: &[f64]) -> Vec<f64> {
        let c0 = self.c_var(0);
        y[c0..c0 + self.cd_count()].to_vec()
    }

    pub fn d_values(&self, y: &[f64]) -> Vec<f64> {
        let d0 = self.d_var(0);
        y[d0..d0 + self.cd_count()].to_vec()
    }

    /// `C` used in the Floquet bound: the uniform value or `max_nu C_nu`.
    pub fn c_bound(&self, y: &[f64]) -> f64 {
        self.c_values(y).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Packed unit matrix of entry `e` (`1` at `(i, j)` and `(j, i)`).
fn unit(n: usize, e: usize) -> Vec<f64> {
    let mut u = vec![0.0; packed_len(n)];
    u[e] = 1.0;
    u
}

fn packed_identity(n: usize, scale: f64) -> Vec<f64> {
    let mut u = vec![0.0; packed_len(n)];
    for i in 0..n {
        u[packed_index(n, i, i)] = scale;
    }
    u
}

/// Symmetric part of `E_e J + J^T E_e` packed, for the unit matrix of packed
/// entry `(a, b)`.
fn jacobian_term(n: usize, a: usize, b: usize, jac: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; n * n];
    e[a * n + b] = 1.0;
    e[b * n + a] = 1.0;
    let mut full = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += e[i * n + k] * jac[k * n + j] + jac[k * n + i] * e[k * n + j];
            }
            full[i * n + j] = s;
        }
    }
    pack(&full, n)
}

/// Gradient row codes of constraint-3 blocks: `(entry, component, sign)`.
pub fn gradient_row_code(entry: usize, component: usize, positive: bool, n: usize) -> u32 {
    ((entry * (n + 1) + component) * 2 + usize::from(!positive)) as u32
}

pub fn decode_gradient_row(code: u32, n: usize) -> (usize, usize, bool) {
    let c = code as usize;
    let positive = c % 2 == 0;
    let rest = c / 2;
    (rest / (n + 1), rest % (n + 1), positive)
}

/// Builds the SDP for `complex` (which must carry derivative bounds).
pub fn assemble(
    complex: &SimplicialComplex,
    sys: &SystemDefinition,
    options: &AssemblyOptions,
) -> Result<(SdpProblem, VariableMap), AssemblyError> {
    if !(options.epsilon0 > 0.0 && options.epsilon0.is_finite()) {
        return Err(AssemblyError::InvalidEpsilon(options.epsilon0));
    }
    let s = complex.num_simplices();
    if s == 0 {
        return Err(AssemblyError::EmptyComplex);
    }
    let n = complex.dim();
    if sys.dim() != n {
        return Err(AssemblyError::DimensionMismatch(format!(
            "system dimension {} vs complex dimension {n}",
            sys.dim()
        )));
    }
    let d = n + 1;
    let p = packed_len(n);
    let entries = packed_indices(n);
    let map = VariableMap {
        n,
        num_slots: complex.num_slots(),
        num_simplices: s,
        uniform_cd: options.uniform_cd,
        has_cmax: !options.uniform_cd && options.objective == Objective::MinC,
    };
    let mut c = vec![0.0; map.num_vars()];
    if options.objective == Objective::MinC {
        c[map.cmax_var().unwrap_or_else(|| map.c_var(0))] = 1.0;
    }
    let mut prob = SdpProblem::new(map.num_vars(), c);
    let zero = vec![0.0; p];
    let mut terms: Vec<(u32, Vec<f64>)> = Vec::new();

    // M(slot) - eps0 I >= 0
    for slot in 0..map.num_slots {
        terms.clear();
        for e in 0..p {
            terms.push((map.metric_var(slot, e) as u32, unit(n, e)));
        }
        let tag = BlockTag { kind: BlockKind::Positivity, simplex: BlockTag::NONE, index: slot as u32 };
        prob.push_block(n, &packed_identity(n, options.epsilon0), &mut terms, tag);
    }

    // C I - M(x_k) >= 0
    let metric_bound = |prob: &mut SdpProblem, terms: &mut Vec<(u32, Vec<f64>)>, slot: usize, cv: usize, tag: BlockTag| {
        terms.clear();
        terms.push((cv as u32, packed_identity(n, 1.0)));
        for e in 0..p {
            terms.push((map.metric_var(slot, e) as u32, unit(n, e).iter().map(|v| -v).collect()));
        }
        prob.push_block(n, &zero, terms, tag);
    };
    if options.uniform_cd {
        for slot in 0..map.num_slots {
            let tag = BlockTag { kind: BlockKind::MetricBound, simplex: BlockTag::NONE, index: slot as u32 };
            metric_bound(&mut prob, &mut terms, slot, map.c_var(0), tag);
        }
    } else {
        for nu in 0..s {
            for (k, slot) in complex.simplex_slots(nu).into_iter().enumerate() {
                let tag = BlockTag { kind: BlockKind::MetricBound, simplex: nu as u32, index: k as u32 };
                metric_bound(&mut prob, &mut terms, slot, map.c_var(nu), tag);
            }
        }
    }

    // contraction blocks at each simplex vertex
    for nu in 0..s {
        let bounds = complex.bounds(nu).ok_or(AssemblyError::MissingBounds(nu))?;
        let g = complex.geometry(nu);
        let coeffs = compute_e_coeffs(g.h, n, &bounds, sys.smoothness())
            .map_err(|_| AssemblyError::MissingBounds(nu))?;
        let slots = complex.simplex_slots(nu);
        for (k, &slot) in slots.iter().enumerate() {
            let v = complex.vertex(complex.simplex(nu).vertices[k] as usize);
            let ft = sys.eval_extended(v[0], &v[1..])?;
            let jac = sys.eval_jacobian(v[0], &v[1..])?;
            // c_r = (X^-T f~)_r weights vertex r+1, vertex 0 gets -sum c_r
            let cr: Vec<f64> =
                (0..d).map(|r| (0..d).map(|l| g.inverse[l * d + r] * ft[l]).sum()).collect();
            let c0: f64 = -cr.iter().sum::<f64>();
            terms.clear();
            for (e, &(a, b)) in entries.iter().enumerate() {
                let jt = jacobian_term(n, a, b, &jac);
                terms.push((map.metric_var(slot, e) as u32, jt.iter().map(|x| -x).collect()));
                for (r, &sr) in slots.iter().enumerate() {
                    let w = if r == 0 { c0 } else { cr[r - 1] };
                    terms.push((map.metric_var(sr, e) as u32, unit(n, e).iter().map(|x| -w * x).collect()));
                }
            }
            terms.push((map.c_var(nu) as u32, packed_identity(n, -coeffs.a_c)));
            terms.push((map.d_var(nu) as u32, packed_identity(n, -coeffs.a_d)));
            let tag = BlockTag { kind: BlockKind::Contraction, simplex: nu as u32, index: k as u32 };
            prob.push_block(n, &packed_identity(n, 1.0), &mut terms, tag);
        }
    }

    // D/(n+1) +- (w_e)_l >= 0
    let inv_d = 1.0 / d as f64;
    for nu in 0..s {
        let g = complex.geometry(nu);
        let slots = complex.simplex_slots(nu);
        for e in 0..p {
            for l in 0..d {
                for positive in [true, false] {
                    let sign = if positive { 1.0 } else { -1.0 };
                    terms.clear();
                    terms.push((map.d_var(nu) as u32, vec![inv_d]));
                    let mut total = 0.0;
                    for r in 0..d {
                        let coef = sign * g.inverse[l * d + r];
                        total += coef;
                        terms.push((map.metric_var(slots[r + 1], e) as u32, vec![coef]));
                    }
                    terms.push((map.metric_var(slots[0], e) as u32, vec![-total]));
                    let tag = BlockTag {
                        kind: BlockKind::GradientBound,
                        simplex: nu as u32,
                        index: gradient_row_code(e, l, positive, n),
                    };
                    prob.push_block(1, &[0.0], &mut terms, tag);
                }
            }
        }
    }

    if let Some(cm) = map.cmax_var() {
        for nu in 0..s {
            terms.clear();
            terms.push((cm as u32, vec![1.0]));
            terms.push((map.c_var(nu) as u32, vec![-1.0]));
            let tag = BlockTag { kind: BlockKind::MaxLink, simplex: nu as u32, index: 0 };
            prob.push_block(1, &[0.0], &mut terms, tag);
        }
    }
    Ok((prob, map))
}

/// Full row-major `sum_i F_i y_i - F_0` on block `b`.
pub fn residual(problem: &SdpProblem, y: &[f64], b: usize) -> Result<Vec<f64>, AssemblyError> {
    if y.len() != problem.num_vars() {
        return Err(AssemblyError::DimensionMismatch(format!(
            "y has {} entries, problem {} variables",
            y.len(),
            problem.num_vars()
        )));
    }
    let size = problem.block_size(b);
    Ok(crate::cpa_metric::unpack(&problem.residual_packed(y, b), size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::parse_system;

    fn two_triangles() -> SimplicialComplex {
        let mut c = SimplicialComplex::from_simplices(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]],
            vec![vec![0, 1, 2], vec![0, 3, 2]],
        )
        .unwrap();
        let sys = parse_system("dim=1; period=1; f1 = -x1").unwrap();
        c.attach_bounds(&sys).unwrap();
        c
    }

    #[test]
    fn e_coefficient_examples() {
        let b = DerivativeBounds { second: 1.0, third: None };
        let e = compute_e_coeffs(0.25, 1, &b, Smoothness::C2).unwrap();
        assert!((e.a_d - 2f64.sqrt() / 16.0).abs() < 1e-15);
        assert!((e.a_c - 1.0).abs() < 1e-15);
        let zero = compute_e_coeffs(0.25, 2, &DerivativeBounds { second: 0.0, third: None }, Smoothness::C2)
            .unwrap();
        assert_eq!((zero.a_c, zero.a_d), (0.0, 0.0));
        let b3 = DerivativeBounds { second: 1.0, third: Some(0.0) };
        let e = compute_e_coeffs(1.0, 1, &b3, Smoothness::C3).unwrap();
        assert!((e.a_d - 5.0 * 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(e.a_c, 0.0);
        assert!(compute_e_coeffs(1.0, 1, &b, Smoothness::C3).is_err());
    }

    #[test]
    fn per_simplex_census() {
        let c = two_triangles();
        let sys = parse_system("dim=1; period=1; f1 = -x1").unwrap();
        let opts = AssemblyOptions { epsilon0: 0.01, uniform_cd: false, objective: Objective::None };
        let (p, map) = assemble(&c, &sys, &opts).unwrap();
        assert_eq!(map.num_vars(), 8);
        assert_eq!(p.num_vars(), 8);
        let kinds = p.kind_histogram();
        assert_eq!(kinds[&BlockKind::GradientBound], 8);
        let matrix_blocks =
            kinds[&BlockKind::Positivity] + kinds[&BlockKind::MetricBound] + kinds[&BlockKind::Contraction];
        assert_eq!(matrix_blocks, 16);
    }

    #[test]
    fn nonpositive_epsilon_is_rejected() {
        let c = two_triangles();
        let sys = parse_system("dim=1; period=1; f1 = -x1").unwrap();
        let opts = AssemblyOptions { epsilon0: 0.0, ..Default::default() };
        assert!(matches!(assemble(&c, &sys, &opts), Err(AssemblyError::InvalidEpsilon(_))));
    }

    #[test]
    fn residual_linearity() {
        let c = two_triangles();
        let sys = parse_system("dim=1; period=1; f1 = -x1").unwrap();
        let (p, _) = assemble(&c, &sys, &AssemblyOptions::default()).unwrap();
        let m = p.num_vars();
        for b in 0..p.num_blocks() {
            let r0 = residual(&p, &vec![0.0; m], b).unwrap();
            let f0 = crate::cpa_metric::unpack(p.block(b).f0, p.block_size(b));
            assert_eq!(r0, f0.iter().map(|v| -v).collect::<Vec<_>>());
            for j in 0..m {
                let mut y = vec![0.0; m];
                y[j] = 1.0;
                let r = residual(&p, &y, b).unwrap();
                let blk = p.block(b);
                let fj = blk
                    .vars
                    .iter()
                    .position(|&v| v as usize == j)
                    .map(|t| blk.coef(t)[0])
                    .unwrap_or(0.0);
                assert_eq!(r[0], fj - blk.f0[0]);
            }
        }
        assert!(residual(&p, &[0.0], 0).is_err());
    }

    #[test]
    fn gradient_row_codes_round_trip() {
        for n in 1..4 {
            for e in 0..packed_len(n) {
                for l in 0..=n {
                    for s in [true, false] {
                        assert_eq!(decode_gradient_row(gradient_row_code(e, l, s, n), n), (e, l, s));
                    }
                }
            }
        }
    }
}
