//! Solves a small block SDP with the interior-point solver and checks the
//! answer independently.
//!
//! minimize y1 + y2 subject to [[y1, 1], [1, y2]] >= 0 and y1 >= 0.5,
//! whose optimum is y1 = y2 = 1.

use cpa_contraction::sdp_assembly::{BlockTag, SdpProblem};
use cpa_contraction::sdp_solver::{certify, solve, SolverSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut problem = SdpProblem::new(2, vec![1.0, 1.0]);
    problem.push_dense_block(
        2,
        &[0.0, -1.0, -1.0, 0.0],
        &[(0, vec![1.0, 0.0, 0.0, 0.0]), (1, vec![0.0, 0.0, 0.0, 1.0])],
        BlockTag::generic(),
    );
    problem.push_dense_block(1, &[0.5], &[(0, vec![1.0])], BlockTag::generic());

    let sol = solve(&problem, &SolverSettings::default())?;
    println!("{:?} after {} iterations: y = {:?}, objective {:.10}, gap {:.2e}", sol.status, sol.iterations, sol.y, sol.objective, sol.gap);
    let report = certify(&problem, &sol.y, 1e-6)?;
    println!("smallest block eigenvalue {:.3e}, clean: {}", report.worst, report.is_clean());

    // y1 + y2 <= 1 makes it infeasible
    problem.push_dense_block(1, &[-1.0], &[(0, vec![-1.0]), (1, vec![-1.0])], BlockTag::generic());
    let sol = solve(&problem, &SolverSettings::default())?;
    println!("with y1 + y2 <= 1: {:?}", sol.status);
    if let Some(ray) = sol.dual_ray {
        println!("  dual ray: <F_0, Z> = {:.3e}, max |<F_i, Z>| = {:.1e}", ray.value, ray.residual);
    }
    Ok(())
}
