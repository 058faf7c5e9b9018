//! Primal-dual interior-point solver for block-diagonal semidefinite
//! programs `min c^T y  s.t.  X(y) = sum_i F_i y_i - F_0 >= 0`.
//!
//! Both phases are infeasible-start: the primal slack `X` is an iterate of
//! its own and the residual `X(y) - X` is driven to zero with the rest of the
//! Newton system. The first phase minimizes a slack `tau` over
//! `X(y) + tau I >= 0` (with `tau` capped from above) and stops once
//! `tau < -10 feasibility_tol` with a small residual, so the point it hands
//! over is strictly interior. With a nonzero objective a second phase starts
//! there. Every variable also carries implicit bounds `|y_i| <= 1e6`, which
//! keep the dual strictly feasible and the iterates bounded.
//!
//! Steps use Nesterov-Todd scaling `G` per block (`G X G = Z`) and a
//! Mehrotra predictor-corrector. The Schur complement
//! `H_ij = sum_b <F_i, G F_j G>` is accumulated per group of blocks that
//! share variables and factored by a sparse supernodal Cholesky.

mod dense;
mod ordering;
mod sparse;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpa_metric::packed_len;
use crate::linalg::tridiagonal_ql_eigenvalues;
use crate::sdp_assembly::{packed_dot, BlockTag, SdpProblem};

pub use ordering::{nested_dissection, Graph};
pub use sparse::{Factor, Symbolic};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error("the problem has no blocks")]
    EmptyProblem,
    #[error("expected {expected} variables, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub feasibility_tol: f64,
    pub gap_tol: f64,
    pub max_iterations: usize,
    /// Scale of the initial slack and of the initial duality gap.
    pub inflation: f64,
    /// Kept for configuration files; the solver is single-threaded and
    /// always reproducible bit for bit.
    pub deterministic: bool,
    /// Per-iteration progress on stderr.
    pub verbose: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-8,
            gap_tol: 1e-8,
            max_iterations: 200,
            inflation: 1.0,
            deterministic: true,
            verbose: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.feasibility_tol) || !positive(self.gap_tol) {
            return Err(SolverError::InvalidSettings("tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(SolverError::InvalidSettings("max_iterations must be at least 1".into()));
        }
        if !positive(self.inflation) {
            return Err(SolverError::InvalidSettings("inflation must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

/// Normalized dual improving ray: `Z >= 0`, `tr Z = 1`,
/// `<F_i, Z> ~ 0`, `<F_0, Z> > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualRay {
    /// Packed blocks of `Z`, concatenated in block order.
    pub z: Vec<f64>,
    /// `<F_0, Z>`.
    pub value: f64,
    /// `max_i |<F_i, Z>|`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub y: Vec<f64>,
    pub objective: f64,
    /// `lambda_min` of each block of `X(y)`.
    pub block_min_eigenvalues: Vec<f64>,
    pub iterations: usize,
    /// Relative duality gap `<X, Z> / (1 + |c^T y|)` at the last iterate.
    pub gap: f64,
    pub dual_ray: Option<DualRay>,
}

impl Solution {
    pub fn is_feasible(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::Feasible)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.block_min_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Blocks grouped by the variables they touch, with the Schur pattern.
struct Structure {
    m: usize,
    /// Packed offset of each block.
    pk: Vec<usize>,
    order: f64,
    elem_vars: Vec<Vec<u32>>,
    elem_blocks: Vec<Vec<u32>>,
    /// Local index (within the block's element) of every block term.
    term_local: Vec<u16>,
    term_start: Vec<usize>,
    scatter_start: Vec<usize>,
    scatter: Vec<usize>,
    tau_diag: usize,
    var_diag: Vec<usize>,
    sym: Symbolic,
}

impl Structure {
    fn new(problem: &SdpProblem) -> Self {
        let m = problem.num_vars();
        let nb = problem.num_blocks();
        let mut pk = Vec::with_capacity(nb + 1);
        pk.push(0);
        let mut order = 0.0;
        for b in 0..nb {
            let s = problem.block_size(b);
            order += s as f64;
            pk.push(pk[b] + packed_len(s));
        }
        // blocks of one simplex form one element; others are keyed by
        // their variable set
        let mut by_simplex: HashMap<u32, usize> = HashMap::new();
        let mut by_vars: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut elem_blocks: Vec<Vec<u32>> = Vec::new();
        let mut elem_of = Vec::with_capacity(nb);
        for b in 0..nb {
            let blk = problem.block(b);
            let next = elem_blocks.len();
            let e = if blk.tag.simplex != BlockTag::NONE {
                *by_simplex.entry(blk.tag.simplex).or_insert(next)
            } else {
                *by_vars.entry(blk.vars.to_vec()).or_insert(next)
            };
            if e == next {
                elem_blocks.push(Vec::new());
            }
            elem_blocks[e].push(b as u32);
            elem_of.push(e);
        }
        let tau = m as u32;
        let mut elem_vars: Vec<Vec<u32>> = elem_blocks
            .iter()
            .map(|bs| {
                let mut v: Vec<u32> = bs.iter().flat_map(|&b| problem.block(b as usize).vars.to_vec()).collect();
                v.sort_unstable();
                v.dedup();
                v.push(tau);
                v
            })
            .collect();
        elem_vars.shrink_to_fit();
        let mut term_local = Vec::with_capacity(problem.num_terms());
        let mut term_start = Vec::with_capacity(nb + 1);
        for b in 0..nb {
            term_start.push(term_local.len());
            let vars = &elem_vars[elem_of[b]];
            for v in problem.block(b).vars {
                term_local.push(vars.binary_search(v).unwrap() as u16);
            }
        }
        term_start.push(term_local.len());

        let sym = Symbolic::analyze(m + 1, &elem_vars, &[tau]);
        let mut scatter_start = Vec::with_capacity(elem_vars.len() + 1);
        let mut scatter = Vec::new();
        for vars in &elem_vars {
            scatter_start.push(scatter.len());
            for a in 0..vars.len() {
                for b in a..vars.len() {
                    scatter.push(sym.offset(vars[a], vars[b]));
                }
            }
        }
        scatter_start.push(scatter.len());
        let tau_diag = sym.offset(tau, tau);
        let var_diag = (0..m as u32).map(|i| sym.offset(i, i)).collect();
        Self { m, pk, order, elem_vars, elem_blocks, term_local, term_start, scatter_start, scatter, tau_diag, var_diag, sym }
    }
}

/// Implicit bound on `|y_i|`, times `inflation`.
const BOUND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Slack,
    Objective,
}

enum Outcome {
    Interior,
    Optimal,
    Infeasible,
    IterationLimit,
    Failure(&'static str),
}

struct Engine<'p> {
    problem: &'p SdpProblem,
    st: Structure,
    settings: SolverSettings,
    factor: Factor,
    /// `y` followed by the slack `tau`.
    y: Vec<f64>,
    z: Vec<f64>,
    x: Vec<f64>,
    g: Vec<f64>,
    xinv: Vec<f64>,
    dx: Vec<f64>,
    dz: Vec<f64>,
    /// Primal residual `X(y) - X`; zero in the slack phase, where `X` is
    /// recomputed from `y`.
    rp: Vec<f64>,
    iterations: usize,
    gap: f64,
    max_size: usize,
    /// Slack phase active: the arrays carry one extra scalar entry for the
    /// bound `tau + cap >= 0`, which keeps the slack problem bounded.
    with_tau: bool,
    cap: f64,
    /// Every variable carries the implicit bounds `|y_i| <= ybound` as two
    /// scalar entries after the slack bound; they keep the dual strictly
    /// feasible when some `F_i` is semidefinite.
    ybound: f64,
}

impl<'p> Engine<'p> {
    fn new(problem: &'p SdpProblem, settings: &SolverSettings) -> Self {
        let st = Structure::new(problem);
        let total = *st.pk.last().unwrap() + 2 * st.m;
        let factor = Factor::new(&st.sym);
        let max_size = (0..problem.num_blocks()).map(|b| problem.block_size(b)).max().unwrap_or(1);
        if settings.verbose {
            eprintln!(
                "sdp: m = {}, blocks = {}, supernodes = {}, factor entries = {}, ~{:.2e} flop per factorization",
                problem.num_vars(),
                problem.num_blocks(),
                st.sym.num_supernodes(),
                st.sym.storage(),
                st.sym.flops()
            );
        }
        Self {
            problem,
            y: vec![0.0; st.m + 1],
            z: vec![0.0; total + 1],
            x: vec![0.0; total + 1],
            g: vec![0.0; total + 1],
            xinv: vec![0.0; total + 1],
            dx: vec![0.0; total + 1],
            dz: vec![0.0; total + 1],
            rp: vec![0.0; total + 1],
            st,
            settings: settings.clone(),
            factor,
            iterations: 0,
            gap: f64::NAN,
            max_size,
            with_tau: false,
            cap: 0.0,
            ybound: BOUND * settings.inflation,
        }
    }

    fn block_range(&self, b: usize) -> std::ops::Range<usize> {
        self.st.pk[b]..self.st.pk[b + 1]
    }

    /// Index of the slack-bound entry.
    fn cap_index(&self) -> usize {
        *self.st.pk.last().unwrap()
    }

    /// Index of the upper bound of variable `i`; the lower bound follows.
    fn bound_index(&self, i: usize) -> usize {
        self.cap_index() + 1 + 2 * i
    }

    /// Barrier order of the current phase.
    fn order(&self) -> f64 {
        self.st.order + 2.0 * self.st.m as f64 + if self.with_tau { 1.0 } else { 0.0 }
    }

    /// `X(y)` (plus `tau I` in the slack phase) into `out`.
    fn primal(&self, with_tau: bool, out: &mut [f64]) {
        let tau = if with_tau { self.y[self.st.m] } else { 0.0 };
        for b in 0..self.problem.num_blocks() {
            let blk = self.problem.block(b);
            let r = self.block_range(b);
            let x = &mut out[r];
            for (o, f) in x.iter_mut().zip(blk.f0) {
                *o = -f;
            }
            for (t, &v) in blk.vars.iter().enumerate() {
                let yv = self.y[v as usize];
                for (o, c) in x.iter_mut().zip(blk.coef(t)) {
                    *o += c * yv;
                }
            }
            add_identity(x, blk.size, tau);
        }
        let k = self.cap_index();
        out[k] = if with_tau { tau + self.cap } else { 1.0 };
        for i in 0..self.st.m {
            let u = self.bound_index(i);
            out[u] = self.ybound - self.y[i];
            out[u + 1] = self.ybound + self.y[i];
        }
    }

    /// NT scaling `G` and `X^-1` per block; `false` if `X` or `Z` is not
    /// positive definite.
    fn scaling(&mut self) -> bool {
        let n2 = self.max_size * self.max_size;
        let mut buf = vec![0.0; 7 * n2];
        for b in 0..self.problem.num_blocks() {
            let n = self.problem.block_size(b);
            let r = self.block_range(b);
            if n == 1 {
                let (x, z) = (self.x[r.start], self.z[r.start]);
                if !(x > 0.0 && z > 0.0) {
                    return false;
                }
                self.g[r.start] = (z / x).sqrt();
                self.xinv[r.start] = 1.0 / x;
                continue;
            }
            let nn = n * n;
            let (xf, rest) = buf.split_at_mut(n2);
            let (zf, rest) = rest.split_at_mut(n2);
            let (l, rest) = rest.split_at_mut(n2);
            let (li, rest) = rest.split_at_mut(n2);
            let (s, rest) = rest.split_at_mut(n2);
            let (tmp, out) = rest.split_at_mut(n2);
            dense::unpack_to(&self.x[r.clone()], n, xf);
            dense::unpack_to(&self.z[r.clone()], n, zf);
            if !dense::chol(xf, n, l) {
                return false;
            }
            dense::lower_inverse(l, n, li);
            // S = L^T Z L, G = L^-T S^1/2 L^-1
            dense::congruence(zf, l, n, tmp, s);
            if !dense::sqrt_spd(&s[..nn], n, tmp) {
                return false;
            }
            dense::mul(tmp, false, li, false, n, s);
            dense::mul(li, true, s, false, n, out);
            dense::pack_to(out, n, &mut self.g[r.clone()]);
            dense::mul(li, true, li, false, n, out);
            dense::pack_to(out, n, &mut self.xinv[r]);
        }
        if self.with_tau {
            let k = self.cap_index();
            if !(self.x[k] > 0.0 && self.z[k] > 0.0) {
                return false;
            }
            self.g[k] = (self.z[k] / self.x[k]).sqrt();
            self.xinv[k] = 1.0 / self.x[k];
        }
        for k in self.bound_index(0)..self.x.len() {
            if !(self.x[k] > 0.0 && self.z[k] > 0.0) {
                return false;
            }
            self.g[k] = (self.z[k] / self.x[k]).sqrt();
            self.xinv[k] = 1.0 / self.x[k];
        }
        true
    }

    /// `<F_i, W>` for every variable (and `tr W` for the slack), bounds
    /// included.
    fn inner_products(&self, w: &[f64], with_tau: bool) -> Vec<f64> {
        let mut out = self.block_inner_products(w, with_tau);
        for i in 0..self.st.m {
            let u = self.bound_index(i);
            out[i] += w[u + 1] - w[u];
        }
        out
    }

    /// `<F_i, W>` over the problem blocks only.
    fn block_inner_products(&self, w: &[f64], with_tau: bool) -> Vec<f64> {
        let mut out = vec![0.0; self.st.m + 1];
        for b in 0..self.problem.num_blocks() {
            let blk = self.problem.block(b);
            let wb = &w[self.block_range(b)];
            for (t, &v) in blk.vars.iter().enumerate() {
                out[v as usize] += packed_dot(blk.coef(t), wb, blk.size);
            }
            if with_tau {
                out[self.st.m] += trace(wb, blk.size);
            }
        }
        out
    }

    /// `<F_tau, W>` including the slack bound.
    fn slack_row(&self, w: &[f64], plain: f64) -> f64 {
        plain + w[self.cap_index()]
    }

    fn assemble_schur(&mut self, with_tau: bool) {
        self.factor.clear();
        let n2 = self.max_size * self.max_size;
        let mut gf = vec![0.0; n2];
        let mut ff = vec![0.0; n2];
        let mut tmp = vec![0.0; n2];
        let mut prod = vec![0.0; n2];
        let mut projected: Vec<f64> = Vec::new();
        let mut local: Vec<f64> = Vec::new();
        let values = self.factor.values_mut();
        for e in 0..self.st.elem_vars.len() {
            let kk = self.st.elem_vars[e].len();
            let tl = kk - 1;
            local.clear();
            local.resize(kk * kk, 0.0);
            for &b in &self.st.elem_blocks[e] {
                let b = b as usize;
                let blk = self.problem.block(b);
                let n = blk.size;
                let locals = &self.st.term_local[self.st.term_start[b]..self.st.term_start[b + 1]];
                let r = self.st.pk[b]..self.st.pk[b + 1];
                if n == 1 {
                    let g = self.g[r.start];
                    let g2 = g * g;
                    for (t1, &l1) in locals.iter().enumerate() {
                        let f1 = g2 * blk.coefs[t1];
                        for (t2, &l2) in locals.iter().enumerate().skip(t1) {
                            local[l1 as usize * kk + l2 as usize] += f1 * blk.coefs[t2];
                        }
                        if with_tau {
                            local[l1 as usize * kk + tl] += f1;
                        }
                    }
                    if with_tau {
                        local[tl * kk + tl] += g2;
                    }
                    continue;
                }
                let p = packed_len(n);
                let nt = locals.len();
                dense::unpack_to(&self.g[r], n, &mut gf);
                projected.clear();
                projected.resize((nt + 1) * p, 0.0);
                // G F_j G for every term, and G G for the slack
                for t in 0..=nt {
                    if t < nt {
                        dense::unpack_to(blk.coef(t), n, &mut ff);
                    } else if with_tau {
                        identity(&mut ff, n);
                    } else {
                        break;
                    }
                    dense::mul(&gf, false, &ff, false, n, &mut tmp);
                    dense::mul(&tmp, false, &gf, false, n, &mut prod);
                    dense::pack_to(&prod, n, &mut projected[t * p..(t + 1) * p]);
                }
                for t2 in 0..nt {
                    let l2 = locals[t2] as usize;
                    let pj = &projected[t2 * p..(t2 + 1) * p];
                    for t1 in 0..=t2 {
                        local[locals[t1] as usize * kk + l2] += packed_dot(blk.coef(t1), pj, n);
                    }
                }
                if with_tau {
                    let pt = &projected[nt * p..(nt + 1) * p];
                    for t1 in 0..nt {
                        local[locals[t1] as usize * kk + tl] += packed_dot(blk.coef(t1), pt, n);
                    }
                    local[tl * kk + tl] += trace(pt, n);
                }
            }
            let mut k = self.st.scatter_start[e];
            for a in 0..kk {
                for bb in a..kk {
                    values[self.st.scatter[k]] += local[a * kk + bb];
                    k += 1;
                }
            }
        }
        if with_tau {
            let k = *self.st.pk.last().unwrap();
            values[self.st.tau_diag] += self.g[k] * self.g[k];
        } else {
            values[self.st.tau_diag] = 1.0;
        }
        for i in 0..self.st.m {
            let u = self.st.pk.last().unwrap() + 1 + 2 * i;
            values[self.st.var_diag[i]] += self.g[u] * self.g[u] + self.g[u + 1] * self.g[u + 1];
        }
    }

    /// `dX` from `dy`, and `dZ = sigma_mu X^-1 - Z - corr - G dX G`.
    fn direction(&mut self, dy: &[f64], with_tau: bool, sigma_mu: f64, corr: &[f64]) {
        let n2 = self.max_size * self.max_size;
        let (mut gf, mut df, mut tmp, mut prod) = (vec![0.0; n2], vec![0.0; n2], vec![0.0; n2], vec![0.0; n2]);
        let dtau = if with_tau { dy[self.st.m] } else { 0.0 };
        for b in 0..self.problem.num_blocks() {
            let blk = self.problem.block(b);
            let n = blk.size;
            let r = self.st.pk[b]..self.st.pk[b + 1];
            let dx = &mut self.dx[r.clone()];
            dx.iter_mut().for_each(|v| *v = 0.0);
            for (t, &v) in blk.vars.iter().enumerate() {
                let d = dy[v as usize];
                for (o, c) in dx.iter_mut().zip(blk.coef(t)) {
                    *o += c * d;
                }
            }
            add_identity(dx, n, dtau);
            for (o, p) in dx.iter_mut().zip(&self.rp[r.clone()]) {
                *o += p;
            }
            if n == 1 {
                let g = self.g[r.start];
                self.dz[r.start] = sigma_mu * self.xinv[r.start] - self.z[r.start] - corr[r.start] - g * g * dx[0];
                continue;
            }
            dense::unpack_to(&self.g[r.clone()], n, &mut gf);
            dense::unpack_to(dx, n, &mut df);
            dense::mul(&gf, false, &df, false, n, &mut tmp);
            dense::mul(&tmp, false, &gf, false, n, &mut prod);
            dense::pack_to(&prod, n, &mut tmp);
            for (k, i) in r.enumerate() {
                self.dz[i] = sigma_mu * self.xinv[i] - self.z[i] - corr[i] - tmp[k];
            }
        }
        let k = self.cap_index();
        if with_tau {
            let g = self.g[k];
            self.dx[k] = dtau + self.rp[k];
            self.dz[k] = sigma_mu * self.xinv[k] - self.z[k] - corr[k] - g * g * dtau;
        } else {
            self.dx[k] = 0.0;
            self.dz[k] = 0.0;
        }
        for i in 0..self.st.m {
            let u = self.bound_index(i);
            self.dx[u] = -dy[i] + self.rp[u];
            self.dx[u + 1] = dy[i] + self.rp[u + 1];
            for j in [u, u + 1] {
                self.dz[j] = sigma_mu * self.xinv[j] - self.z[j] - corr[j] - self.g[j] * self.g[j] * self.dx[j];
            }
        }
    }

    /// Second-order term `sym(X^-1 dX dZ)` of the current directions.
    fn second_order(&self) -> Vec<f64> {
        let n2 = self.max_size * self.max_size;
        let (mut xf, mut af, mut bf, mut tmp, mut prod) =
            (vec![0.0; n2], vec![0.0; n2], vec![0.0; n2], vec![0.0; n2], vec![0.0; n2]);
        let mut out = vec![0.0; self.x.len()];
        for b in 0..self.problem.num_blocks() {
            let n = self.problem.block_size(b);
            let r = self.block_range(b);
            if n == 1 {
                out[r.start] = self.xinv[r.start] * self.dx[r.start] * self.dz[r.start];
                continue;
            }
            dense::unpack_to(&self.xinv[r.clone()], n, &mut xf);
            dense::unpack_to(&self.dx[r.clone()], n, &mut af);
            dense::unpack_to(&self.dz[r.clone()], n, &mut bf);
            dense::mul(&xf, false, &af, false, n, &mut tmp);
            dense::mul(&tmp, false, &bf, false, n, &mut prod);
            dense::pack_to(&prod, n, &mut out[r]);
        }
        if self.with_tau {
            let k = self.cap_index();
            out[k] = self.xinv[k] * self.dx[k] * self.dz[k];
        }
        for j in self.bound_index(0)..out.len() {
            out[j] = self.xinv[j] * self.dx[j] * self.dz[j];
        }
        out
    }

    /// `G W G` per block.
    fn scaled(&self, w: &[f64]) -> Vec<f64> {
        let n2 = self.max_size * self.max_size;
        let (mut gf, mut wf, mut tmp, mut prod) = (vec![0.0; n2], vec![0.0; n2], vec![0.0; n2], vec![0.0; n2]);
        let mut out = vec![0.0; w.len()];
        for b in 0..self.problem.num_blocks() {
            let n = self.problem.block_size(b);
            let r = self.block_range(b);
            if n == 1 {
                out[r.start] = self.g[r.start] * self.g[r.start] * w[r.start];
                continue;
            }
            dense::unpack_to(&self.g[r.clone()], n, &mut gf);
            dense::unpack_to(&w[r.clone()], n, &mut wf);
            dense::mul(&gf, false, &wf, false, n, &mut tmp);
            dense::mul(&tmp, false, &gf, false, n, &mut prod);
            dense::pack_to(&prod, n, &mut out[r]);
        }
        for j in self.bound_index(0)..out.len() {
            out[j] = self.g[j] * self.g[j] * w[j];
        }
        if self.with_tau {
            let k = self.cap_index();
            out[k] = self.g[k] * self.g[k] * w[k];
        }
        out
    }

    /// Largest per-block Frobenius norm of the primal residual.
    fn residual_norm(&self) -> f64 {
        (0..self.problem.num_blocks())
            .map(|b| {
                let r = self.block_range(b);
                packed_dot(&self.rp[r.clone()], &self.rp[r], self.problem.block_size(b)).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Largest `alpha` keeping `base + alpha dir` positive semidefinite
    /// (infinite if it never leaves the cone).
    fn max_step(&self, base: &[f64], dir: &[f64]) -> f64 {
        let n2 = self.max_size * self.max_size;
        let (mut bf, mut df, mut l, mut li, mut tmp, mut m) =
            (vec![0.0; n2], vec![0.0; n2], vec![0.0; n2], vec![0.0; n2], vec![0.0; n2], vec![0.0; n2]);
        let mut alpha = f64::INFINITY;
        for b in 0..self.problem.num_blocks() {
            let n = self.problem.block_size(b);
            let r = self.block_range(b);
            if n == 1 {
                if dir[r.start] < 0.0 {
                    alpha = alpha.min(-base[r.start] / dir[r.start]);
                }
                continue;
            }
            dense::unpack_to(&base[r.clone()], n, &mut bf);
            dense::unpack_to(&dir[r], n, &mut df);
            if !dense::chol(&bf, n, &mut l) {
                return 0.0;
            }
            dense::lower_inverse(&l, n, &mut li);
            // L^-1 D L^-T
            dense::mul(&df, false, &li, true, n, &mut tmp);
            dense::mul(&li, false, &tmp, false, n, &mut m);
            let lam = dense::min_eigenvalue(&m[..n * n], n);
            if lam < 0.0 {
                alpha = alpha.min(-1.0 / lam);
            }
        }
        let k = self.cap_index();
        if self.with_tau && dir[k] < 0.0 {
            alpha = alpha.min(-base[k] / dir[k]);
        }
        for j in self.bound_index(0)..base.len() {
            if dir[j] < 0.0 {
                alpha = alpha.min(-base[j] / dir[j]);
            }
        }
        alpha
    }

    fn pair_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let s: f64 = (0..self.problem.num_blocks())
            .map(|k| {
                let r = self.block_range(k);
                packed_dot(&a[r.clone()], &b[r], self.problem.block_size(k))
            })
            .sum();
        let k = self.cap_index();
        let bounds: f64 = (self.bound_index(0)..a.len()).map(|j| a[j] * b[j]).sum();
        s + bounds + if self.with_tau { a[k] * b[k] } else { 0.0 }
    }

    fn solve_schur(&self, rhs: &[f64]) -> Vec<f64> {
        let mut v = rhs.to_vec();
        self.factor.solve(&self.st.sym, &mut v);
        v
    }

    fn run(&mut self, phase: Phase) -> Outcome {
        let with_tau = phase == Phase::Slack;
        self.with_tau = with_tau;
        let m = self.st.m;
        let tol = self.settings.feasibility_tol;
        let mut c = vec![0.0; m + 1];
        if with_tau {
            c[m] = 1.0;
        } else {
            c[..m].copy_from_slice(self.problem.objective());
        }
        let c_scale = 1.0 + c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let n_order = self.order();
        let p_scale = 1.0 + (0..self.problem.num_blocks()).flat_map(|b| self.problem.block(b).f0.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
        for _ in 0..self.settings.max_iterations {
            let mut r = std::mem::take(&mut self.rp);
            self.primal(with_tau, &mut r);
            for (ri, xi) in r.iter_mut().zip(&self.x) {
                *ri -= xi;
            }
            if !with_tau {
                r[self.cap_index()] = 0.0;
            }
            self.rp = r;
            let pr = self.rp.iter().fold(0.0f64, |a, v| a.max(v.abs())) / p_scale;
            if !self.scaling() {
                return Outcome::Failure("iterate left the cone");
            }
            let xz = self.pair_dot(&self.x, &self.z);
            let mu = xz / n_order;
            let mut fz = self.inner_products(&self.z, with_tau);
            let tz = fz[m];
            if with_tau {
                fz[m] = self.slack_row(&self.z, tz);
            }
            let rows = if with_tau { m + 1 } else { m };
            let rd = (0..rows).map(|i| (c[i] - fz[i]).abs()).fold(0.0, f64::max) / c_scale;
            if with_tau {
                let tau = self.y[m];
                self.gap = xz / (1.0 + tau.abs());
                // X(y) + tau I = X + rp, so tau below -|rp| leaves X(y)
                // strictly inside the cone
                if tau < -10.0 * tol && self.residual_norm() < -0.5 * tau {
                    return Outcome::Interior;
                }
                let fb = self.block_inner_products(&self.z, false);
                let ray_res = (0..m).map(|i| fb[i].abs()).fold(0.0, f64::max) / tz;
                let ray_val = f0_dot(self.problem, &self.st.pk, &self.z) / tz;
                if (ray_res <= tol && ray_val > 10.0 * tol) || (rd <= tol && pr <= tol && self.gap <= self.settings.gap_tol) {
                    return Outcome::Infeasible;
                }
            } else {
                let pobj: f64 = (0..m).map(|i| c[i] * self.y[i]).sum();
                self.gap = xz / (1.0 + pobj.abs());
                if rd <= tol && pr <= tol && self.gap <= self.settings.gap_tol {
                    return Outcome::Optimal;
                }
            }
            self.iterations += 1;
            self.assemble_schur(with_tau);
            if !self.factor.factorize(&self.st.sym) {
                return Outcome::Failure("non-finite Schur complement");
            }
            let mut a = self.inner_products(&self.xinv, with_tau);
            if with_tau {
                a[m] = self.slack_row(&self.xinv, a[m]);
            }

            // <F_i, G rp G> moves the primal residual into the right-hand side
            let srp = self.scaled(&self.rp);
            let mut shift = self.inner_products(&srp, with_tau);
            if with_tau {
                shift[m] = self.slack_row(&srp, shift[m]);
            }

            // predictor
            let mut rhs: Vec<f64> = (0..=m).map(|i| -c[i] - shift[i]).collect();
            if !with_tau {
                rhs[m] = 0.0;
            }
            let zero = vec![0.0; self.x.len()];
            let dy = self.solve_schur(&rhs);
            self.direction(&dy, with_tau, 0.0, &zero);
            let ap = self.max_step(&self.x, &self.dx).min(1.0);
            let ad = self.max_step(&self.z, &self.dz).min(1.0);
            let xa: Vec<f64> = self.x.iter().zip(&self.dx).map(|(x, d)| x + ap * d).collect();
            let za: Vec<f64> = self.z.iter().zip(&self.dz).map(|(z, d)| z + ad * d).collect();
            let mu_aff = self.pair_dot(&xa, &za) / n_order;
            let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

            // corrector with the second-order term of the predictor
            let corr = self.second_order();
            let fc = self.inner_products(&corr, with_tau);
            for i in 0..=m {
                rhs[i] = sigma * mu * a[i] - c[i] - shift[i] - fc[i];
            }
            if with_tau {
                rhs[m] -= corr[self.cap_index()];
            }
            if !with_tau {
                rhs[m] = 0.0;
            }
            let dy = self.solve_schur(&rhs);
            if dy.iter().any(|v| !v.is_finite()) {
                return Outcome::Failure("non-finite search direction");
            }
            self.direction(&dy, with_tau, sigma * mu, &corr);
            let ap = (0.95 * self.max_step(&self.x, &self.dx)).min(1.0);
            let ad = (0.95 * self.max_step(&self.z, &self.dz)).min(1.0);
            if self.settings.verbose {
                eprintln!(
                    "sdp {:?} it {:3}: mu {:.3e} gap {:.3e} primal res {:.3e} dual res {:.3e} tau {:.3e} steps {:.3} {:.3} sigma {:.2e} pivots replaced {}",
                    phase, self.iterations, mu, self.gap, pr, rd, self.y[m], ap, ad, sigma, self.factor.replaced_pivots
                );
            }
            if ap < 1e-12 && ad < 1e-12 {
                return Outcome::Failure("stalled");
            }
            for (yi, di) in self.y.iter_mut().zip(&dy) {
                *yi += ap * di;
            }
            if !with_tau {
                self.y[m] = 0.0;
            }
            for (xi, di) in self.x.iter_mut().zip(&self.dx) {
                *xi += ap * di;
            }
            for (zi, di) in self.z.iter_mut().zip(&self.dz) {
                *zi += ad * di;
            }
        }
        Outcome::IterationLimit
    }

    /// Infeasible starting point scaled to the data: `X = xi I`, `Z = zeta I`
    /// (`c` includes the slack entry).
    fn start(&mut self, c: &[f64]) {
        let m = self.st.m;
        let order = self.st.order;
        let mut fnorm = vec![0.0f64; m + 1];
        let mut xnorm = 0.0f64;
        let mut xy = vec![0.0; self.x.len()];
        self.primal(self.with_tau, &mut xy);
        for b in 0..self.problem.num_blocks() {
            let blk = self.problem.block(b);
            for (t, &v) in blk.vars.iter().enumerate() {
                fnorm[v as usize] += packed_dot(blk.coef(t), blk.coef(t), blk.size);
            }
            fnorm[m] += blk.size as f64;
            let r = self.block_range(b);
            xnorm = xnorm.max(packed_dot(&xy[r.clone()], &xy[r], blk.size).sqrt());
        }
        let rows = if self.with_tau { m + 1 } else { m };
        let ratio = (0..rows).map(|i| (1.0 + c[i].abs()) / (1.0 + fnorm[i].sqrt())).fold(0.0, f64::max);
        let xi = self.settings.inflation * xnorm.max(order.sqrt()).max(10.0);
        let zeta = self.settings.inflation * (order.sqrt() * ratio).max(10.0);
        self.set_identity(xi, zeta);
    }

    /// `X = xi I` and `Z = zeta I` on every block.
    fn set_identity(&mut self, xi: f64, zeta: f64) {
        for b in 0..self.problem.num_blocks() {
            let n = self.problem.block_size(b);
            let r = self.block_range(b);
            for (w, s) in [(&mut self.x, xi), (&mut self.z, zeta)] {
                let w = &mut w[r.clone()];
                w.iter_mut().for_each(|v| *v = 0.0);
                add_identity(w, n, s);
            }
        }
        let k = self.cap_index();
        self.x[k] = if self.with_tau { self.y[self.st.m] + self.cap } else { 1.0 };
        self.z[k] = xi * zeta / self.x[k];
        for i in 0..self.st.m {
            let u = self.bound_index(i);
            self.x[u] = self.ybound - self.y[i];
            self.x[u + 1] = self.ybound + self.y[i];
            for j in [u, u + 1] {
                self.z[j] = xi * zeta / self.x[j];
            }
        }
    }

    fn dual_ray(&self) -> DualRay {
        let m = self.st.m;
        let fz = self.block_inner_products(&self.z, true);
        let tz = fz[m];
        DualRay {
            z: self.z[..self.cap_index()].iter().map(|v| v / tz).collect(),
            value: f0_dot(self.problem, &self.st.pk, &self.z) / tz,
            residual: (0..m).map(|i| fz[i].abs()).fold(0.0, f64::max) / tz,
        }
    }
}

fn add_identity(packed: &mut [f64], n: usize, s: f64) {
    if s == 0.0 {
        return;
    }
    let mut k = 0;
    for i in 0..n {
        packed[k] += s;
        k += n - i;
    }
}

fn trace(packed: &[f64], n: usize) -> f64 {
    let mut k = 0;
    let mut s = 0.0;
    for i in 0..n {
        s += packed[k];
        k += n - i;
    }
    s
}

fn identity(full: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            full[i * n + j] = if i == j { 1.0 } else { 0.0 };
        }
    }
}

fn f0_dot(problem: &SdpProblem, pk: &[usize], z: &[f64]) -> f64 {
    (0..problem.num_blocks()).map(|b| packed_dot(problem.block(b).f0, &z[pk[b]..pk[b + 1]], problem.block_size(b))).sum()
}

/// Solver-side block minimum eigenvalues of `X(y)`.
fn block_min_eigenvalues(problem: &SdpProblem, y: &[f64]) -> Vec<f64> {
    (0..problem.num_blocks())
        .map(|b| {
            let n = problem.block_size(b);
            let x = problem.residual_packed(y, b);
            if n == 1 {
                return x[0];
            }
            let mut full = vec![0.0; n * n];
            dense::unpack_to(&x, n, &mut full);
            dense::min_eigenvalue(&full, n)
        })
        .collect()
}

pub fn solve(problem: &SdpProblem, settings: &SolverSettings) -> Result<Solution, SolverError> {
    settings.validate()?;
    if problem.num_blocks() == 0 {
        return Err(SolverError::EmptyProblem);
    }
    let m = problem.num_vars();
    let mut eng = Engine::new(problem, settings);

    // slack phase from y = 0
    let lam0 = block_min_eigenvalues(problem, &vec![0.0; m]).into_iter().fold(f64::INFINITY, f64::min);
    eng.y[m] = (-lam0).max(0.0) + settings.inflation;
    eng.cap = eng.y[m];
    eng.with_tau = true;
    let mut c1 = vec![0.0; m + 1];
    c1[m] = 1.0;
    eng.start(&c1);
    let first = eng.run(Phase::Slack);
    let finish = |eng: &Engine, status: SolveStatus, y: Vec<f64>, ray: Option<DualRay>| {
        let objective = problem.objective().iter().zip(&y).map(|(c, v)| c * v).sum();
        Solution {
            status,
            block_min_eigenvalues: block_min_eigenvalues(problem, &y),
            y,
            objective,
            iterations: eng.iterations,
            gap: eng.gap,
            dual_ray: ray,
        }
    };
    match first {
        Outcome::Interior => {}
        Outcome::Infeasible => {
            let ray = eng.dual_ray();
            return Ok(finish(&eng, SolveStatus::Infeasible, eng.y[..m].to_vec(), Some(ray)));
        }
        Outcome::IterationLimit => return Ok(finish(&eng, SolveStatus::IterationLimit, eng.y[..m].to_vec(), None)),
        Outcome::Optimal | Outcome::Failure(_) => {
            if let Outcome::Failure(why) = first {
                if settings.verbose {
                    eprintln!("sdp: phase one failed: {why}");
                }
            }
            return Ok(finish(&eng, SolveStatus::NumericalFailure, eng.y[..m].to_vec(), None));
        }
    }
    let interior = eng.y[..m].to_vec();
    if problem.objective().iter().all(|&c| c == 0.0) {
        return Ok(finish(&eng, SolveStatus::Feasible, interior, None));
    }

    // objective phase from the interior y with X = xi I, Z = zeta I; the
    // primal residual X(y) - X is driven to zero along the way
    eng.y[m] = 0.0;
    eng.with_tau = false;
    let mut c2 = problem.objective().to_vec();
    c2.push(0.0);
    eng.start(&c2);
    let second = eng.run(Phase::Objective);
    if let (Outcome::Failure(why), true) = (&second, settings.verbose) {
        eprintln!("sdp: objective phase stopped early: {why}");
    }
    // the last iterate may sit a rounding error outside the cone; pull it
    // toward the interior point just enough
    let last = eng.y[..m].to_vec();
    let mut pick = None;
    for t in [0.0, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1] {
        let y: Vec<f64> = last.iter().zip(&interior).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        if y.iter().all(|v| v.is_finite()) && block_min_eigenvalues(problem, &y).into_iter().all(|v| v > 0.0) {
            pick = Some(y);
            break;
        }
    }
    let sol = match (second, pick) {
        (Outcome::Optimal, Some(y)) => finish(&eng, SolveStatus::Optimal, y, None),
        (_, Some(y)) => finish(&eng, SolveStatus::Feasible, y, None),
        (_, None) => finish(&eng, SolveStatus::Feasible, interior, None),
    };
    Ok(sol)
}

/// Independent re-check of a solution: per-block `lambda_min` of
/// `sum_i F_i y_i - F_0` through Householder tridiagonalization and QL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub min_eigenvalues: Vec<f64>,
    /// Blocks with `lambda_min < -tol`.
    pub flagged: Vec<usize>,
    pub worst: f64,
    pub tol: f64,
}

impl CertifyReport {
    pub fn is_clean(&self) -> bool {
        self.flagged.is_empty()
    }
}

pub fn certify(problem: &SdpProblem, y: &[f64], tol: f64) -> Result<CertifyReport, SolverError> {
    if y.len() != problem.num_vars() {
        return Err(SolverError::DimensionMismatch { expected: problem.num_vars(), got: y.len() });
    }
    let mut min_eigenvalues = Vec::with_capacity(problem.num_blocks());
    for b in 0..problem.num_blocks() {
        let blk = problem.block(b);
        let n = blk.size;
        // plain summation: -F_0 first, then the terms in storage order
        let mut full = vec![0.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                let mut s = -blk.f0[k];
                for (t, &v) in blk.vars.iter().enumerate() {
                    s += blk.coef(t)[k] * y[v as usize];
                }
                full[i * n + j] = s;
                full[j * n + i] = s;
                k += 1;
            }
        }
        min_eigenvalues.push(tridiagonal_ql_eigenvalues(&full, n)[0]);
    }
    let flagged = (0..min_eigenvalues.len()).filter(|&b| min_eigenvalues[b] < -tol).collect();
    let worst = min_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(CertifyReport { min_eigenvalues, flagged, worst, tol })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn identity_threshold() {
        let mut p = SdpProblem::new(1, vec![1.0]);
        p.push_dense_block(2, &[1.0, 0.0, 0.0, 1.0], &[(0, vec![1.0, 0.0, 0.0, 1.0])], BlockTag::generic());
        let s = solve(&p, &settings()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.y[0] - 1.0).abs() < 1e-7, "{}", s.y[0]);
        assert!(certify(&p, &s.y, 1e-6).unwrap().is_clean());
        let r = certify(&p, &[0.0], 1e-6).unwrap();
        assert_eq!(r.flagged, vec![0]);
        assert!((r.worst + 1.0).abs() < 1e-15);
    }

    #[test]
    fn off_diagonal_threshold() {
        // [[y, 1], [1, y]] >= 0  <=>  y >= 1
        let mut p = SdpProblem::new(1, vec![1.0]);
        p.push_dense_block(2, &[0.0, -1.0, -1.0, 0.0], &[(0, vec![1.0, 0.0, 0.0, 1.0])], BlockTag::generic());
        let s = solve(&p, &settings()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.y[0] - 1.0).abs() < 1e-7, "{}", s.y[0]);
    }

    #[test]
    fn empty_feasible_set_gives_a_ray() {
        let mut p = SdpProblem::new(1, vec![0.0]);
        p.push_dense_block(2, &[1.0, 0.0, 0.0, 1.0], &[], BlockTag::generic());
        let s = solve(&p, &settings()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        let ray = s.dual_ray.unwrap();
        assert!(ray.value > 0.0 && ray.residual <= 1e-8);
    }

    #[test]
    fn contradicting_scalar_constraints() {
        // y >= 1 and -y >= 0
        let mut p = SdpProblem::new(1, vec![0.0]);
        p.push_block(1, &[1.0], &mut vec![(0, vec![1.0])], BlockTag::generic());
        p.push_block(1, &[0.0], &mut vec![(0, vec![-1.0])], BlockTag::generic());
        let s = solve(&p, &settings()).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        let ray = s.dual_ray.unwrap();
        assert!(ray.value > 0.0 && ray.residual <= 1e-8, "{ray:?}");
    }

    #[test]
    fn feasibility_only_returns_a_strict_interior_point() {
        let mut p = SdpProblem::new(2, vec![0.0, 0.0]);
        p.push_dense_block(
            2,
            &[1.0, 0.0, 0.0, 1.0],
            &[(0, vec![1.0, 0.0, 0.0, 0.0]), (1, vec![0.0, 0.0, 0.0, 1.0])],
            BlockTag::generic(),
        );
        let s = solve(&p, &settings()).unwrap();
        assert_eq!(s.status, SolveStatus::Feasible);
        assert!(s.min_eigenvalue() > 1e-7);
    }

    #[test]
    fn invalid_settings_and_inputs() {
        let p = SdpProblem::new(0, vec![]);
        assert_eq!(solve(&p, &settings()), Err(SolverError::EmptyProblem));
        let bad = SolverSettings { gap_tol: 0.0, ..settings() };
        assert!(bad.validate().is_err());
        assert!(matches!(certify(&p, &[1.0], 1e-6), Err(SolverError::DimensionMismatch { .. })));
    }

    #[test]
    fn certify_matches_cubic_roots() {
        // eigenvalues of a 3x3 symmetric matrix from the characteristic
        // polynomial (trigonometric form)
        let a: [f64; 9] = [2.0, -1.0, 0.5, -1.0, 3.0, 0.25, 0.5, 0.25, -1.0];
        let mut p = SdpProblem::new(0, vec![]);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        p.push_dense_block(3, &neg, &[], BlockTag::generic());
        let r = certify(&p, &[], 1e-6).unwrap();
        let q = (a[0] + a[4] + a[8]) / 3.0;
        let p1 = a[1] * a[1] + a[2] * a[2] + a[5] * a[5];
        let p2 = (a[0] - q).powi(2) + (a[4] - q).powi(2) + (a[8] - q).powi(2) + 2.0 * p1;
        let pp = (p2 / 6.0).sqrt();
        let bm: Vec<f64> = (0..9).map(|k| (a[k] - if k % 4 == 0 { q } else { 0.0 }) / pp).collect();
        let det = bm[0] * (bm[4] * bm[8] - bm[5] * bm[7]) - bm[1] * (bm[3] * bm[8] - bm[5] * bm[6])
            + bm[2] * (bm[3] * bm[7] - bm[4] * bm[6]);
        let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
        let smallest = q + 2.0 * pp * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
        assert!((r.worst - smallest).abs() < 1e-9, "{} vs {smallest}", r.worst);
    }
}
