//! Continuous piecewise-affine matrix fields on a simplicial complex.
//!
//! Values live on vertex storage slots as packed upper triangles (row-major:
//! `(0,0), (0,1), .., (0,n-1), (1,1), ..`). On each simplex every entry is
//! affine, with gradient `w = X^-1 (M(x_k) - M(x_0))_k`.

use thiserror::Error;

use crate::linalg::{cholesky, lambda_max, max_generalized_eigenvalue};
use crate::system::{SystemDefinition, SystemError};
use crate::triangulation::{SimplexGeometry, SimplicialComplex};

/// Weights below this count as outside a simplex.
pub const OUTSIDE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CpaError {
    #[error("point lies outside the simplex (weight {0:e})")]
    OutsideSimplex(f64),
    #[error("point {0:?} lies outside the triangulated domain")]
    OutsideDomain(Vec<f64>),
    #[error("the flow leaves the triangulated domain at {0:?}")]
    NoForwardSimplex(Vec<f64>),
    #[error("metric is not positive definite at {0:?}")]
    NotPositiveDefinite(Vec<f64>),
    #[error("expected {expected} metric values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    System(#[from] SystemError),
}

/// Number of packed upper-triangle entries of an `n x n` matrix.
pub fn packed_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// `(i, j)` pairs with `i <= j` in packed order.
pub fn packed_indices(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect()
}

pub fn unpack(packed: &[f64], n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for (e, (i, j)) in packed_indices(n).into_iter().enumerate() {
        m[i * n + j] = packed[e];
        m[j * n + i] = packed[e];
    }
    m
}

/// Barycentric weights of `point` in simplex `i`, aligning time to the
/// simplex across the periodic seam.
pub fn barycentric(
    complex: &SimplicialComplex,
    simplex: usize,
    point: &[f64],
) -> Result<Vec<f64>, CpaError> {
    let mut p = point.to_vec();
    p[0] += complex.time_shift(simplex, p[0]);
    let w = complex.barycentric_raw(simplex, &p);
    let worst = w.iter().copied().fold(f64::INFINITY, f64::min);
    if worst < -OUTSIDE_TOL {
        return Err(CpaError::OutsideSimplex(worst));
    }
    Ok(w)
}

/// Gradient of the affine interpolant of `values` (one per vertex, in
/// vertex order) over a simplex.
pub fn shape_gradient(geometry: &SimplexGeometry, values: &[f64]) -> Vec<f64> {
    let d = values.len() - 1;
    (0..d)
        .map(|r| (0..d).map(|k| geometry.inverse[r * d + k] * (values[k + 1] - values[0])).sum())
        .collect()
}

/// Quantities of the contraction condition at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEvaluation {
    pub simplex: usize,
    pub weights: Vec<f64>,
    /// `M(x)`, row-major.
    pub metric: Vec<f64>,
    /// Forward orbital derivative `M'_+(x)`.
    pub orbital: Vec<f64>,
    /// `M D_x f + D_x f^T M + M'_+`.
    pub contraction: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CpaMetric<'a> {
    complex: &'a SimplicialComplex,
    n: usize,
    values: Vec<f64>,
    /// Per simplex, per packed entry, the gradient in `R^{n+1}`.
    gradients: Vec<f64>,
}

impl<'a> CpaMetric<'a> {
    /// `values` holds `packed_len(n)` entries per storage slot.
    pub fn new(complex: &'a SimplicialComplex, values: Vec<f64>) -> Result<Self, CpaError> {
        let n = complex.dim();
        let p = packed_len(n);
        let expected = p * complex.num_slots();
        if values.len() != expected {
            return Err(CpaError::DimensionMismatch { expected, got: values.len() });
        }
        let d = n + 1;
        let mut gradients = Vec::with_capacity(complex.num_simplices() * p * d);
        let mut vals = vec![0.0; d + 1];
        for i in 0..complex.num_simplices() {
            let slots = complex.simplex_slots(i);
            let g = complex.geometry(i);
            for e in 0..p {
                for (k, &s) in slots.iter().enumerate() {
                    vals[k] = values[s * p + e];
                }
                gradients.extend(shape_gradient(g, &vals));
            }
        }
        Ok(Self { complex, n, values, gradients })
    }

    /// Samples `f(vertex coordinates) -> row-major n x n` at one vertex per
    /// storage slot.
    pub fn from_fn(
        complex: &'a SimplicialComplex,
        f: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<Self, CpaError> {
        let n = complex.dim();
        let p = packed_len(n);
        let mut values = vec![0.0; p * complex.num_slots()];
        let mut done = vec![false; complex.num_slots()];
        for v in 0..complex.num_vertices() {
            let s = complex.slot(v);
            if done[s] {
                continue;
            }
            done[s] = true;
            let m = f(complex.vertex(v));
            for (e, (i, j)) in packed_indices(n).into_iter().enumerate() {
                values[s * p + e] = 0.5 * (m[i * n + j] + m[j * n + i]);
            }
        }
        Self::new(complex, values)
    }

    pub fn complex(&self) -> &'a SimplicialComplex {
        self.complex
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Full matrix stored at a slot.
    pub fn slot_matrix(&self, slot: usize) -> Vec<f64> {
        let p = packed_len(self.n);
        unpack(&self.values[slot * p..(slot + 1) * p], self.n)
    }

    /// Gradient `w_ij` of entry `e` (packed index) on simplex `i`.
    pub fn gradient(&self, simplex: usize, e: usize) -> &[f64] {
        let d = self.n + 1;
        let p = packed_len(self.n);
        let at = (simplex * p + e) * d;
        &self.gradients[at..at + d]
    }

    /// `M` from barycentric weights on a simplex.
    pub fn metric_in_simplex(&self, simplex: usize, weights: &[f64]) -> Vec<f64> {
        let p = packed_len(self.n);
        let mut packed = vec![0.0; p];
        for (k, s) in self.complex.simplex_slots(simplex).into_iter().enumerate() {
            for e in 0..p {
                packed[e] += weights[k] * self.values[s * p + e];
            }
        }
        unpack(&packed, self.n)
    }

    pub fn eval_metric(&self, point: &[f64]) -> Result<Vec<f64>, CpaError> {
        let loc = self
            .complex
            .locate(point, OUTSIDE_TOL)
            .into_iter()
            .next()
            .ok_or_else(|| CpaError::OutsideDomain(point.to_vec()))?;
        Ok(self.metric_in_simplex(loc.simplex, &loc.weights))
    }

    /// `(w_ij . v)_{ij}` on simplex `i` for a direction `v` in `R^{n+1}`.
    pub fn directional_derivative(&self, simplex: usize, v: &[f64]) -> Vec<f64> {
        let p = packed_len(self.n);
        let packed: Vec<f64> = (0..p)
            .map(|e| self.gradient(simplex, e).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect();
        unpack(&packed, self.n)
    }

    /// Lowest-index simplex containing `point` that the flow direction
    /// `ftilde` enters (no zero weight decreases), with its weights.
    pub fn forward_simplex(
        &self,
        point: &[f64],
        ftilde: &[f64],
    ) -> Result<(usize, Vec<f64>), CpaError> {
        let locs = self.complex.locate(point, OUTSIDE_TOL);
        if locs.is_empty() {
            return Err(CpaError::OutsideDomain(point.to_vec()));
        }
        let d = self.n + 1;
        for loc in locs {
            let g = self.complex.geometry(loc.simplex);
            // rates of change of the barycentric weights along ftilde
            let mut rate = vec![0.0; d + 1];
            for k in 0..d {
                rate[k + 1] = (0..d).map(|r| g.inverse[r * d + k] * ftilde[r]).sum();
            }
            rate[0] = -rate[1..].iter().sum::<f64>();
            let scale = rate.iter().fold(0.0f64, |m, r| m.max(r.abs())).max(1e-300);
            let enters = loc
                .weights
                .iter()
                .zip(&rate)
                .all(|(&w, &r)| w > OUTSIDE_TOL || r >= -1e-12 * scale);
            if enters {
                return Ok((loc.simplex, loc.weights));
            }
        }
        Err(CpaError::NoForwardSimplex(point.to_vec()))
    }

    /// `M'_+(point)` for the system's vector field `(1, f)`.
    pub fn orbital_derivative_plus(
        &self,
        sys: &SystemDefinition,
        point: &[f64],
    ) -> Result<Vec<f64>, CpaError> {
        let ft = sys.eval_extended(point[0], &point[1..])?;
        let (s, _) = self.forward_simplex(point, &ft)?;
        Ok(self.directional_derivative(s, &ft))
    }

    /// Metric, orbital derivative and contraction matrix at `point`.
    pub fn evaluate(
        &self,
        sys: &SystemDefinition,
        point: &[f64],
    ) -> Result<PointEvaluation, CpaError> {
        let n = self.n;
        let ft = sys.eval_extended(point[0], &point[1..])?;
        let (simplex, weights) = self.forward_simplex(point, &ft)?;
        let metric = self.metric_in_simplex(simplex, &weights);
        let orbital = self.directional_derivative(simplex, &ft);
        let jac = sys.eval_jacobian(point[0], &point[1..])?;
        let contraction = contraction_matrix(&metric, &jac, &orbital, n);
        Ok(PointEvaluation { simplex, weights, metric, orbital, contraction })
    }

    /// `L_M(point)`: half the largest eigenvalue of the pencil
    /// `(M D_x f + D_x f^T M + M'_+, M)`.
    pub fn lm_value(&self, sys: &SystemDefinition, point: &[f64]) -> Result<f64, CpaError> {
        let e = self.evaluate(sys, point)?;
        lm_from_parts(&e.contraction, &e.metric, self.n)
            .ok_or_else(|| CpaError::NotPositiveDefinite(point.to_vec()))
    }
}

/// `M J + J^T M + O` for row-major `n x n` inputs.
pub fn contraction_matrix(metric: &[f64], jac: &[f64], orbital: &[f64], n: usize) -> Vec<f64> {
    let mut out = orbital.to_vec();
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += metric[i * n + k] * jac[k * n + j] + jac[k * n + i] * metric[k * n + j];
            }
            out[i * n + j] += s;
        }
    }
    out
}

/// Half the top generalized eigenvalue of `(contraction, metric)`; `None`
/// if the metric is not positive definite.
pub fn lm_from_parts(contraction: &[f64], metric: &[f64], n: usize) -> Option<f64> {
    cholesky(metric, n)?;
    max_generalized_eigenvalue(contraction, metric, n).map(|l| 0.5 * l)
}

/// `lambda_max` of a row-major symmetric matrix.
pub fn top_eigenvalue(a: &[f64], n: usize) -> f64 {
    lambda_max(a, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::parse_system;
    use crate::triangulation::{build_complex, simplex_geometry, Region, ScalingMatrix};

    fn square() -> SimplicialComplex {
        SimplicialComplex::from_simplices(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]],
            vec![vec![0, 1, 2], vec![0, 3, 2]],
        )
        .unwrap()
    }

    #[test]
    fn barycentric_vertex_centroid_outside() {
        let c = square();
        assert_eq!(barycentric(&c, 0, &[1.0, 1.0]).unwrap(), vec![0.0, 0.0, 1.0]);
        let w = barycentric(&c, 0, &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
        for l in w {
            assert!((l - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(matches!(barycentric(&c, 0, &[0.0, 1.0]), Err(CpaError::OutsideSimplex(_))));
    }

    #[test]
    fn shape_gradient_examples() {
        let g = simplex_geometry(&[&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0]]).unwrap();
        assert_eq!(shape_gradient(&g, &[3.0, 3.0, 3.0]), vec![0.0, 0.0]);
        assert_eq!(shape_gradient(&g, &[0.0, 1.0, 1.0]), vec![1.0, 0.0]);
        // rotated vertex order gives the same gradient
        let g2 = simplex_geometry(&[&[1.0, 0.0], &[1.0, 1.0], &[0.0, 0.0]]).unwrap();
        let w = shape_gradient(&g2, &[1.0, 1.0, 0.0]);
        assert!((w[0] - 1.0).abs() < 1e-12 && w[1].abs() < 1e-12);
    }

    #[test]
    fn interpolation_reproduces_nodes_and_midpoints() {
        let c = square();
        let m = CpaMetric::new(&c, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.eval_metric(&[1.0, 0.0]).unwrap(), vec![2.0]);
        let mid = m.eval_metric(&[0.5, 0.0]).unwrap()[0];
        assert!((mid - 1.5).abs() < 1e-15);
        let id = CpaMetric::from_fn(&c, |_| vec![1.0]).unwrap();
        assert_eq!(id.eval_metric(&[0.3, 0.7]).unwrap(), vec![1.0]);
    }

    #[test]
    fn orbital_derivative_examples() {
        let sys = parse_system("dim=1; period=1; f1 = -x1 + sin(6.283185307179586*t)").unwrap();
        let c = square();
        let constant = CpaMetric::from_fn(&c, |_| vec![2.0]).unwrap();
        assert_eq!(constant.orbital_derivative_plus(&sys, &[0.4, 0.3]).unwrap(), vec![0.0]);
        // M = t: pure time slope
        let slope = CpaMetric::from_fn(&c, |p| vec![p[0]]).unwrap();
        let v = slope.orbital_derivative_plus(&sys, &[0.4, 0.3]).unwrap()[0];
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_face_consistency() {
        let sys = parse_system("dim=1; period=1; f1 = 0.3").unwrap();
        let c = square();
        // continuous but with a kink across the diagonal
        let m = CpaMetric::new(&c, vec![1.0, 2.0, 5.0, 3.0]).unwrap();
        // point on the diagonal; the flow (1, 0.3) enters simplex 0
        let p = [0.5, 0.5];
        let ft = sys.eval_extended(p[0], &p[1..]).unwrap();
        let (s, _) = m.forward_simplex(&p, &ft).unwrap();
        assert_eq!(s, 0);
        // tangential flow along the diagonal: both neighbours qualify and agree
        let a = m.directional_derivative(0, &[1.0, 1.0])[0];
        let b = m.directional_derivative(1, &[1.0, 1.0])[0];
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn lm_value_examples() {
        let n = 2;
        let jac = [-1.0, 0.0, 0.0, -3.0];
        let metric = [1.0, 0.0, 0.0, 4.0];
        let c = contraction_matrix(&metric, &jac, &[0.0; 4], n);
        assert!((lm_from_parts(&c, &metric, n).unwrap() + 1.0).abs() < 1e-12);
        let c1 = contraction_matrix(&[2.0], &[-1.0], &[0.0], 1);
        assert!((lm_from_parts(&c1, &[2.0], 1).unwrap() + 1.0).abs() < 1e-15);
        assert!(lm_from_parts(&c1, &[-1.0], 1).is_none());
    }

    #[test]
    fn seam_points_use_the_forward_simplex() {
        let region = Region::single(vec![(0.0, 1.0)]).unwrap();
        let c = build_complex(&region, 1.0, 1, &ScalingMatrix::identity(1)).unwrap();
        let sys = parse_system("dim=1; period=1; f1 = 0").unwrap();
        let m = CpaMetric::from_fn(&c, |p| vec![1.0 + p[1]]).unwrap();
        let ft = sys.eval_extended(0.0, &[0.5]).unwrap();
        let (s, _) = m.forward_simplex(&[0.0, 0.5], &ft).unwrap();
        // the chosen simplex starts at t = 0, not at t = T
        let tmin = c.simplex(s).vertices.iter().map(|&v| c.vertex(v as usize)[0]).fold(1.0, f64::min);
        assert_eq!(tmin, 0.0);
    }
}
