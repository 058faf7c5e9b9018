//! Independent checks by direct simulation: fixed-step RK4 trajectories,
//! periodic orbits by Newton on the period map, monodromy matrices and
//! Floquet exponents, and distance probes in a synthesized metric.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cpa_metric::CpaMetric;
use crate::system::{SystemDefinition, SystemError};

#[derive(Debug, Error)]
pub enum FloquetError {
    #[error("state became non-finite at t = {0}")]
    NonFiniteState(f64),
    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("trajectory left the triangulated domain at t = {t} ({point:?})")]
    LeftDomain { t: f64, point: Vec<f64> },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One classical RK4 step of `y' = g(t, y)` in place.
fn rk4_step<F>(g: &mut F, t: f64, y: &mut [f64], h: f64) -> Result<(), FloquetError>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, FloquetError>,
{
    let k1 = g(t, y)?;
    let tmp: Vec<f64> = y.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
    let k2 = g(t + 0.5 * h, &tmp)?;
    let tmp: Vec<f64> = y.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
    let k3 = g(t + 0.5 * h, &tmp)?;
    let tmp: Vec<f64> = y.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
    let k4 = g(t + h, &tmp)?;
    for i in 0..y.len() {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(FloquetError::NonFiniteState(t + h));
    }
    Ok(())
}

/// `(t, x)` samples of a fixed-step solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub steps: usize,
    /// Largest step-doubling estimate `|y_h - y_{h/2}| / 15` over all steps.
    pub max_local_error: f64,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// CSV with header `t,x1,..,xn`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let header: Vec<String> =
            std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("x{i}"))).collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let row: Vec<String> = std::iter::once(*t).chain(x.iter().copied()).map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// RK4 with `steps` equal steps from `(t0, x0)` to `t1`.
pub fn integrate(
    sys: &SystemDefinition,
    t0: f64,
    x0: &[f64],
    t1: f64,
    steps: usize,
) -> Result<Trajectory, FloquetError> {
    if steps == 0 {
        return Err(FloquetError::InvalidInput("steps must be at least 1".into()));
    }
    if x0.len() != sys.dim() {
        return Err(FloquetError::InvalidInput(format!("x0 has {} entries, system dimension {}", x0.len(), sys.dim())));
    }
    let h = (t1 - t0) / steps as f64;
    let mut g = |t: f64, x: &[f64]| sys.eval_f(t, x).map_err(FloquetError::from);
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.to_vec();
    times.push(t0);
    states.push(x.clone());
    let mut max_local_error = 0.0f64;
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let mut half = x.clone();
        rk4_step(&mut g, t, &mut half, 0.5 * h)?;
        rk4_step(&mut g, t + 0.5 * h, &mut half, 0.5 * h)?;
        rk4_step(&mut g, t, &mut x, h)?;
        let est = x.iter().zip(&half).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / 15.0;
        max_local_error = max_local_error.max(est);
        times.push(t0 + (k + 1) as f64 * h);
        states.push(x.clone());
    }
    Ok(Trajectory { times, states, steps, max_local_error })
}

/// `x(t1)` and the fundamental matrix `Phi(t1)` (row-major) of the first
/// variation along the solution from `(t0, x0)`.
pub fn flow_with_variation(
    sys: &SystemDefinition,
    t0: f64,
    x0: &[f64],
    t1: f64,
    steps: usize,
) -> Result<(Vec<f64>, Vec<f64>), FloquetError> {
    let n = sys.dim();
    if steps == 0 {
        return Err(FloquetError::InvalidInput("steps must be at least 1".into()));
    }
    let mut y = x0.to_vec();
    for i in 0..n {
        for j in 0..n {
            y.push(if i == j { 1.0 } else { 0.0 });
        }
    }
    let mut g = |t: f64, y: &[f64]| -> Result<Vec<f64>, FloquetError> {
        let (x, phi) = y.split_at(n);
        let mut out = sys.eval_f(t, x)?;
        let jac = sys.eval_jacobian(t, x)?;
        for i in 0..n {
            for j in 0..n {
                out.push((0..n).map(|k| jac[i * n + k] * phi[k * n + j]).sum());
            }
        }
        Ok(out)
    };
    let h = (t1 - t0) / steps as f64;
    for k in 0..steps {
        rk4_step(&mut g, t0 + k as f64 * h, &mut y, h)?;
    }
    let phi = y.split_off(n);
    Ok((y, phi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloquetResult {
    /// Point of the periodic orbit at `t = 0`.
    pub x_star: Vec<f64>,
    /// `||S_T(0, x*) - x*||_inf`.
    pub residual: f64,
    pub newton_iterations: usize,
    /// Row-major `n x n`; empty until [`monodromy`] has run.
    pub monodromy: Vec<f64>,
    /// `log|eigenvalue| / T`, largest first.
    pub exponents: Vec<f64>,
}

impl FloquetResult {
    pub fn max_exponent(&self) -> Option<f64> {
        self.exponents.first().copied()
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, a| m.max(a.abs()))
}

/// Damped Newton on `x -> S_T(0, x) - x` with the Jacobian `Phi(T) - I` from
/// the variational equation, using `steps` RK4 steps per period.
pub fn find_periodic_orbit(
    sys: &SystemDefinition,
    guess: &[f64],
    tol: f64,
    max_newton: usize,
    steps: usize,
) -> Result<FloquetResult, FloquetError> {
    let n = sys.dim();
    if guess.len() != n {
        return Err(FloquetError::InvalidInput(format!("guess has {} entries, system dimension {n}", guess.len())));
    }
    let period = sys.period();
    // anything that diverges or leaves the field's domain counts as a miss
    let period_map = |x: &[f64]| -> Option<(Vec<f64>, Vec<f64>)> {
        let (xt, phi) = flow_with_variation(sys, 0.0, x, period, steps).ok()?;
        let r: Vec<f64> = xt.iter().zip(x).map(|(a, b)| a - b).collect();
        Some((r, phi))
    };
    let mut x = guess.to_vec();
    let Some((mut r, mut phi)) = period_map(&x) else {
        return Err(FloquetError::NoConvergence { iterations: 0, residual: f64::INFINITY });
    };
    let mut res = inf_norm(&r);
    for it in 0..=max_newton {
        if res <= tol {
            return Ok(FloquetResult { x_star: x, residual: res, newton_iterations: it, monodromy: Vec::new(), exponents: Vec::new() });
        }
        if it == max_newton {
            break;
        }
        let mut jac = DMatrix::from_row_slice(n, n, &phi);
        for i in 0..n {
            jac[(i, i)] -= 1.0;
        }
        let rhs = nalgebra::DVector::from_iterator(n, r.iter().map(|v| -v));
        let Some(step) = jac.lu().solve(&rhs) else {
            return Err(FloquetError::NoConvergence { iterations: it, residual: res });
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + lambda * d).collect();
            if let Some((rt, pt)) = period_map(&trial) {
                let rn = inf_norm(&rt);
                if rn < (1.0 - 1e-4 * lambda) * res || rn <= tol {
                    x = trial;
                    r = rt;
                    phi = pt;
                    res = rn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(FloquetError::NoConvergence { iterations: it + 1, residual: res });
        }
    }
    Err(FloquetError::NoConvergence { iterations: max_newton, residual: res })
}

/// Monodromy matrix along the orbit through `orbit.x_star` and the real
/// parts of the Floquet exponents.
pub fn monodromy(
    sys: &SystemDefinition,
    orbit: &FloquetResult,
    steps: usize,
) -> Result<FloquetResult, FloquetError> {
    let n = sys.dim();
    let period = sys.period();
    let (_, phi) = flow_with_variation(sys, 0.0, &orbit.x_star, period, steps)?;
    let eig = DMatrix::from_row_slice(n, n, &phi).complex_eigenvalues();
    let mut exponents: Vec<f64> = eig.iter().map(|l| l.norm().ln() / period).collect();
    exponents.sort_by(|a, b| b.total_cmp(a));
    Ok(FloquetResult { monodromy: phi, exponents, ..orbit.clone() })
}

/// Metric distance `d(theta) = sqrt(D^T M(x(theta)) D)` between two nearby
/// solutions, `D` their difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSeries {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
}

impl ProbeSeries {
    /// Largest increase `d(k+1) - d(k)` relative to `d(0)` (zero when the
    /// series never grows).
    pub fn worst_relative_increase(&self) -> f64 {
        let scale = self.distances.first().copied().unwrap_or(0.0);
        let worst = self.distances.windows(2).fold(0.0f64, |m, w| m.max(w[1] - w[0]));
        if worst == 0.0 {
            0.0
        } else {
            worst / scale.max(f64::MIN_POSITIVE)
        }
    }

    pub fn is_nonincreasing(&self, rel_slack: f64) -> bool {
        self.worst_relative_increase() <= rel_slack
    }
}

/// Integrates from `start = (t0, x0)` and from `start + (0, offset)` over
/// `horizon` and records the metric distance after every step.
pub fn contraction_probe(
    cpa: &CpaMetric<'_>,
    sys: &SystemDefinition,
    start: &[f64],
    offset: &[f64],
    horizon: f64,
    steps: usize,
) -> Result<ProbeSeries, FloquetError> {
    let n = sys.dim();
    if start.len() != n + 1 || offset.len() != n {
        return Err(FloquetError::InvalidInput("start must be (t, x) and offset an n-vector".into()));
    }
    if steps == 0 {
        return Err(FloquetError::InvalidInput("steps must be at least 1".into()));
    }
    let t0 = start[0];
    let mut a = start[1..].to_vec();
    let mut b: Vec<f64> = a.iter().zip(offset).map(|(x, o)| x + o).collect();
    let distance = |t: f64, a: &[f64], b: &[f64]| -> Result<f64, FloquetError> {
        let mut p = vec![t];
        p.extend_from_slice(a);
        let left = |p: &[f64]| FloquetError::LeftDomain { t, point: p.to_vec() };
        let m = cpa.eval_metric(&p).map_err(|_| left(&p))?;
        let mut q = vec![t];
        q.extend_from_slice(b);
        cpa.eval_metric(&q).map_err(|_| left(&q))?;
        let dlt: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += dlt[i] * m[i * n + j] * dlt[j];
            }
        }
        Ok(s.max(0.0).sqrt())
    };
    let mut g = |t: f64, x: &[f64]| sys.eval_f(t, x).map_err(FloquetError::from);
    let h = horizon / steps as f64;
    let mut times = vec![t0];
    let mut distances = vec![distance(t0, &a, &b)?];
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        rk4_step(&mut g, t, &mut a, h)?;
        rk4_step(&mut g, t, &mut b, h)?;
        let t1 = t0 + (k + 1) as f64 * h;
        times.push(t1);
        distances.push(distance(t1, &a, &b)?);
    }
    Ok(ProbeSeries { times, distances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::parse_system;
    use crate::triangulation::{build_complex, Region, ScalingMatrix};
    use std::f64::consts::PI;

    fn lin1() -> SystemDefinition {
        parse_system("dim=1; period=6.283185307179586; f1 = -x1 + sin(t)").unwrap()
    }

    #[test]
    fn zero_field_keeps_the_state() {
        let sys = parse_system("dim=1; period=1; f1 = 0").unwrap();
        let tr = integrate(&sys, 0.0, &[3.0], 5.0, 7).unwrap();
        assert_eq!(tr.last(), &[3.0]);
        assert_eq!(tr.times.len(), 8);
    }

    #[test]
    fn exponential_decay() {
        let sys = parse_system("dim=1; period=1; f1 = -x1").unwrap();
        let tr = integrate(&sys, 0.0, &[1.0], 1.0, 1000).unwrap();
        assert!((tr.last()[0] - (-1f64).exp()).abs() < 1e-9);
        assert!(tr.max_local_error < 1e-14);
    }

    #[test]
    fn forced_linear_orbit_returns() {
        let tr = integrate(&lin1(), 0.0, &[-0.5], 2.0 * PI, 10_000).unwrap();
        assert!((tr.last()[0] + 0.5).abs() < 1e-8);
        for (t, x) in tr.times.iter().zip(&tr.states).step_by(997) {
            assert!((x[0] - 0.5 * (t.sin() - t.cos())).abs() < 1e-8);
        }
    }

    #[test]
    fn rk4_error_shrinks_sixteenfold() {
        let sys = parse_system("dim=1; period=1; f1 = -x1").unwrap();
        let err = |steps| (integrate(&sys, 0.0, &[1.0], 2.0, steps).unwrap().last()[0] - (-2f64).exp()).abs();
        let ratio = err(20) / err(40);
        assert!((12.0..=20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn periodic_orbit_and_exponent_of_the_linear_example() {
        let sys = lin1();
        let orbit = find_periodic_orbit(&sys, &[0.0], 1e-10, 20, 4000).unwrap();
        assert!((orbit.x_star[0] + 0.5).abs() < 1e-8);
        let fl = monodromy(&sys, &orbit, 4000).unwrap();
        assert!((fl.monodromy[0] - (-2.0 * PI).exp()).abs() < 1e-9);
        assert!((fl.exponents[0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn fixed_point_orbit() {
        let sys = parse_system("dim=1; period=1; f1 = -x1").unwrap();
        let orbit = find_periodic_orbit(&sys, &[0.0], 1e-12, 5, 100).unwrap();
        assert_eq!(orbit.x_star, vec![0.0]);
        assert_eq!(orbit.newton_iterations, 0);
    }

    #[test]
    fn blow_up_is_no_convergence() {
        // x' = x^2 - 1 has a finite basin around -1; from 5 it blows up
        let sys = parse_system("dim=1; period=1; f1 = x1^2 - 1").unwrap();
        let err = find_periodic_orbit(&sys, &[5.0], 1e-10, 20, 200).unwrap_err();
        assert!(matches!(err, FloquetError::NoConvergence { .. }));
    }

    #[test]
    fn damped_oscillator_has_double_exponent() {
        let sys = parse_system("dim=2; period=6.283185307179586; f1 = x2; f2 = -x1 - 2*x2 + sin(t)").unwrap();
        let orbit = find_periodic_orbit(&sys, &[0.0, 0.0], 1e-11, 20, 8000).unwrap();
        // forced response (sin t - ... ) / 2: x1 = -cos(t)/2
        assert!((orbit.x_star[0] + 0.5).abs() < 1e-8 && orbit.x_star[1].abs() < 1e-8);
        let fl = monodromy(&sys, &orbit, 8000).unwrap();
        for e in &fl.exponents {
            assert!((e + 1.0).abs() < 1e-5, "{e}");
        }
    }

    #[test]
    fn monodromy_of_constant_jacobian_is_a_matrix_exponential() {
        let sys = parse_system("dim=2; period=1.5; f1 = -x1 + 2*x2; f2 = -3*x2 + cos(t)").unwrap();
        let orbit = FloquetResult { x_star: vec![0.3, -0.2], residual: 0.0, newton_iterations: 0, monodromy: vec![], exponents: vec![] };
        let fl = monodromy(&sys, &orbit, 2000).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]) * 1.5;
        let reference = a.exp();
        for i in 0..2 {
            for j in 0..2 {
                assert!((fl.monodromy[i * 2 + j] - reference[(i, j)]).abs() < 1e-6);
            }
        }
        assert!((fl.exponents[0] + 1.0).abs() < 1e-6 && (fl.exponents[1] + 3.0).abs() < 1e-6);
    }

    #[test]
    fn zero_field_monodromy_is_identity() {
        let sys = parse_system("dim=2; period=2; f1 = 0; f2 = 0").unwrap();
        let orbit = find_periodic_orbit(&sys, &[1.0, 2.0], 1e-12, 3, 10).unwrap();
        let fl = monodromy(&sys, &orbit, 10).unwrap();
        assert_eq!(fl.monodromy, vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(fl.exponents, vec![0.0, 0.0]);
    }

    #[test]
    fn probe_with_unit_metric_decays_exponentially() {
        let sys = lin1();
        let complex = build_complex(&Region::single(vec![(-2.0, 1.0)]).unwrap(), 2.0 * PI, 2, &ScalingMatrix::identity(1)).unwrap();
        let cpa = CpaMetric::from_fn(&complex, |_| vec![1.0]).unwrap();
        let p = contraction_probe(&cpa, &sys, &[0.0, -0.5], &[1e-3], 3.0, 300).unwrap();
        for (t, d) in p.times.iter().zip(&p.distances) {
            assert!((d - 1e-3 * (-t).exp()).abs() < 1e-12);
        }
        assert!(p.is_nonincreasing(1e-9));
        let zero = contraction_probe(&cpa, &sys, &[0.0, -0.5], &[0.0], 1.0, 10).unwrap();
        assert!(zero.distances.iter().all(|&d| d == 0.0));
        // leaving [-2, 1]
        let far = contraction_probe(&cpa, &parse_system("dim=1; period=6.283185307179586; f1 = 1").unwrap(), &[0.0, 0.5], &[0.1], 2.0, 10);
        assert!(matches!(far, Err(FloquetError::LeftDomain { .. })));
    }

    #[test]
    fn trajectory_csv_has_a_header_and_one_row_per_sample() {
        let tr = integrate(&lin1(), 0.0, &[0.0], 1.0, 4).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("t,x1"));
        assert_eq!(text.lines().count(), 6);
    }
}
