//! Interpolates a matrix field on a complex and evaluates the metric and
//! its orbital derivative for a forced linear system.

use cpa_contraction::cpa_metric::CpaMetric;
use cpa_contraction::system::parse_system;
use cpa_contraction::triangulation::{build_complex, Region, ScalingMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = parse_system("dim = 2; period = 2*pi; f1 = x2; f2 = -x1 - 2*x2 + cos(t)")?;
    let region = Region::single(vec![(-1.0, 1.0), (-1.0, 1.0)])?;
    let complex = build_complex(&region, sys.period(), 3, &ScalingMatrix::identity(2))?;
    let cpa = CpaMetric::from_fn(&complex, |v| vec![2.0 + 0.1 * v[0].sin(), 0.5, 0.5, 1.0])?;

    for p in [[0.3, 0.1, -0.2], [4.0, -0.5, 0.5], [0.0, 0.9, 0.0]] {
        let m = cpa.eval_metric(&p)?;
        let lm = cpa.lm_value(&sys, &p)?;
        println!("M{p:?} = {m:.4?}, L_M = {lm:.4}");
    }
    Ok(())
}
