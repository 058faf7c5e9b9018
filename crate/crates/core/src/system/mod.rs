//! Time-periodic right-hand sides `x' = f(t, x)`: parsing, evaluation,
//! spatial Jacobians and enclosures of higher partial derivatives.
//!
//! A system is written as a list of `key = value` statements separated by
//! `;` or newlines:
//!
//! ```text
//! dim = 2; period = 2*pi; smoothness = C3
//! f1 = x2
//! f2 = -x1 - 2*x2 + sin(t)
//! ```
//!
//! Optional keys `bound2` / `bound3` supply global bounds on the second and
//! third partial derivatives, used where no interval enclosure exists.
//! The expressions should depend on `t` only through `period`-periodic
//! terms; this is checked by sampling and reported in
//! [`SystemDefinition::warnings`].

mod expr;
pub mod interval;
pub mod jet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use expr::{parse_expr, Expr, Func};
use interval::{Interval, DEFAULT_INFLATION};
use jet::Jet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown symbol `{name}` at byte {position}")]
    UnknownSymbol { name: String, position: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    Domain(String),
    #[error("no derivative enclosure for {0}; supply a global bound")]
    UnsupportedExpression(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Smoothness {
    #[default]
    C2,
    C3,
}

impl std::str::FromStr for Smoothness {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C2" => Ok(Smoothness::C2),
            "C3" => Ok(Smoothness::C3),
            other => Err(format!("unknown smoothness class `{other}`")),
        }
    }
}

/// Axis-aligned box in `(t, x1, .., xn)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseBox {
    pub bounds: Vec<(f64, f64)>,
}

impl PhaseBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        debug_assert!(bounds.iter().all(|(l, h)| l <= h));
        Self { bounds }
    }
}

/// Bounds on the order-2 (and, for C3 systems, order-3) partials of `f`
/// over a region, with `t` counted as coordinate zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBounds {
    pub second: f64,
    pub third: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SystemDefinition {
    dim: usize,
    period: f64,
    rhs: Vec<Expr>,
    smoothness: Smoothness,
    user_bound2: Option<f64>,
    user_bound3: Option<f64>,
    inflation: f64,
    source: String,
    warnings: Vec<String>,
}

/// Parses the textual system format described in the module docs.
pub fn parse_system(text: &str) -> Result<SystemDefinition, SystemError> {
    let mut dim = None;
    let mut period = None;
    let mut smoothness = Smoothness::C2;
    let mut bound2 = None;
    let mut bound3 = None;
    let mut rhs_src: Vec<(usize, usize, &str)> = Vec::new();

    let mut start = 0;
    for piece in text.split([';', '\n']) {
        let offset = start;
        start += piece.len() + 1;
        if piece.trim().is_empty() || piece.trim_start().starts_with('#') {
            continue;
        }
        let Some(eq) = piece.find('=') else {
            let lead = piece.len() - piece.trim_start().len();
            return Err(SystemError::Syntax {
                position: offset + lead,
                message: "expected `key = value`".into(),
            });
        };
        let key = piece[..eq].trim();
        let value = &piece[eq + 1..];
        let value_offset = offset + eq + 1;
        let constant = |v: &str| -> Result<f64, SystemError> {
            Ok(parse_expr(v, value_offset, None)?.eval(0.0, &[]))
        };
        match key {
            "dim" => {
                let d = constant(value)?;
                if d.fract() != 0.0 || d < 1.0 {
                    return Err(SystemError::DimensionMismatch(format!(
                        "dim must be a positive integer, got {d}"
                    )));
                }
                dim = Some(d as usize);
            }
            "period" => period = Some(constant(value)?),
            "smoothness" => {
                smoothness = value.parse().map_err(|message| SystemError::Syntax {
                    position: value_offset,
                    message,
                })?
            }
            "bound2" => bound2 = Some(constant(value)?),
            "bound3" => bound3 = Some(constant(value)?),
            k if k.starts_with('f') && k[1..].parse::<usize>().is_ok() => {
                let idx: usize = k[1..].parse().unwrap_or(0);
                rhs_src.push((idx, value_offset, value));
            }
            other => {
                return Err(SystemError::UnknownSymbol {
                    name: other.to_string(),
                    position: offset + piece.find(other).unwrap_or(0),
                })
            }
        }
    }

    let dim = dim.ok_or_else(|| SystemError::DimensionMismatch("missing `dim`".into()))?;
    let period = period.ok_or_else(|| SystemError::Syntax {
        position: text.len(),
        message: "missing `period`".into(),
    })?;
    if !(period > 0.0 && period.is_finite()) {
        return Err(SystemError::Domain(format!("period must be positive, got {period}")));
    }
    let mut rhs: Vec<Option<Expr>> = vec![None; dim];
    for (idx, off, src) in rhs_src {
        if idx == 0 || idx > dim {
            return Err(SystemError::DimensionMismatch(format!(
                "f{idx} given for a system of dimension {dim}"
            )));
        }
        if rhs[idx - 1].is_some() {
            return Err(SystemError::DimensionMismatch(format!("f{idx} given twice")));
        }
        rhs[idx - 1] = Some(parse_expr(src, off, Some(dim))?);
    }
    let rhs = rhs
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            e.ok_or_else(|| SystemError::DimensionMismatch(format!("missing f{}", i + 1)))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut sys = SystemDefinition {
        dim,
        period,
        rhs,
        smoothness,
        user_bound2: bound2,
        user_bound3: bound3,
        inflation: DEFAULT_INFLATION,
        source: text.to_string(),
        warnings: Vec::new(),
    };
    sys.warnings = sys.periodicity_warnings();
    Ok(sys)
}

impl SystemDefinition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn set_smoothness(&mut self, s: Smoothness) {
        self.smoothness = s;
    }

    pub fn rhs(&self) -> &[Expr] {
        &self.rhs
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Relative inflation used by the interval enclosures.
    pub fn set_inflation(&mut self, inflation: f64) {
        self.inflation = inflation;
    }

    /// Compares `f(0, x)` with `f(T, x)` on 1000 pseudo-random states.
    fn periodicity_warnings(&self) -> Vec<String> {
        if !self.rhs.iter().any(Expr::uses_time) {
            return Vec::new();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let x: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-10.0..10.0)).collect();
            for e in &self.rhs {
                let a = e.eval(0.0, &x);
                let b = e.eval(self.period, &x);
                if a.is_finite() && b.is_finite() {
                    worst = worst.max((a - b).abs() / (1.0 + a.abs()));
                }
            }
        }
        if worst > 1e-9 {
            vec![format!(
                "f(0, x) and f(T, x) differ by up to {worst:.3e}; the right-hand side may not be T-periodic"
            )]
        } else {
            Vec::new()
        }
    }

    /// `f(t, x)`.
    pub fn eval_f(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, SystemError> {
        debug_assert_eq!(x.len(), self.dim);
        let v: Vec<f64> = self.rhs.iter().map(|e| e.eval(t, x)).collect();
        if v.iter().all(|y| y.is_finite()) {
            Ok(v)
        } else {
            Err(SystemError::Domain(format!("f at t={t}, x={x:?}")))
        }
    }

    /// `(1, f(t, x))`, the vector field on the cylinder.
    pub fn eval_extended(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, SystemError> {
        let mut v = Vec::with_capacity(self.dim + 1);
        v.push(1.0);
        v.extend(self.eval_f(t, x)?);
        Ok(v)
    }

    /// Spatial Jacobian `D_x f(t, x)`, row-major `n x n`.
    pub fn eval_jacobian(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, SystemError> {
        let n = self.dim;
        let vars = self.point_jets(t, x, 1);
        let mut jac = vec![0.0; n * n];
        for (i, e) in self.rhs.iter().enumerate() {
            let j = e
                .eval_jet(&vars)
                .filter(Jet::finite)
                .ok_or_else(|| SystemError::Domain(format!("D_x f at t={t}, x={x:?}")))?;
            jac[i * n..(i + 1) * n].copy_from_slice(&j.grad[1..]);
        }
        Ok(jac)
    }

    fn point_jets(&self, t: f64, x: &[f64], order: usize) -> Vec<Jet<f64>> {
        let d = self.dim + 1;
        std::iter::once(t)
            .chain(x.iter().copied())
            .enumerate()
            .map(|(i, v)| Jet::variable(v, i, d, order))
            .collect()
    }

    /// Upper bound on `max |d^order f_l / dx_i dx_j (dx_k)|` over `region`,
    /// all indices ranging over `(t, x1, .., xn)`.
    ///
    /// Uses interval jets; where those fail (division by an interval that
    /// contains zero) the user-supplied global bound is used instead. When
    /// both exist the smaller is returned.
    pub fn derivative_bound(&self, region: &PhaseBox, order: usize) -> Result<f64, SystemError> {
        assert!(order == 2 || order == 3, "derivative bounds exist for orders 2 and 3");
        debug_assert_eq!(region.bounds.len(), self.dim + 1);
        let user = if order == 2 { self.user_bound2 } else { self.user_bound3 };
        let d = self.dim + 1;
        let vars: Vec<Jet<Interval>> = region
            .bounds
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| {
                Jet::variable(Interval::with_inflation(lo, hi, self.inflation), i, d, order)
            })
            .collect();
        let mut computed = Some(0.0f64);
        for e in &self.rhs {
            match e.eval_jet(&vars).filter(Jet::finite) {
                Some(j) => {
                    let tensor = if order == 2 { &j.hess } else { &j.third };
                    let m = tensor.iter().map(Interval::magnitude).fold(0.0, f64::max);
                    computed = computed.map(|c| c.max(m));
                }
                None => computed = None,
            }
        }
        match (computed, user) {
            (Some(c), Some(u)) => Ok(c.min(u)),
            (Some(c), None) => Ok(c),
            (None, Some(u)) => Ok(u),
            (None, None) => Err(SystemError::UnsupportedExpression(format!(
                "order-{order} partials over {:?}",
                region.bounds
            ))),
        }
    }

    /// Order-2 bound, plus the order-3 bound for C3 systems.
    pub fn derivative_bounds(&self, region: &PhaseBox) -> Result<DerivativeBounds, SystemError> {
        let second = self.derivative_bound(region, 2)?;
        let third = match self.smoothness {
            Smoothness::C2 => None,
            Smoothness::C3 => Some(self.derivative_bound(region, 3)?),
        };
        Ok(DerivativeBounds { second, third })
    }
}
