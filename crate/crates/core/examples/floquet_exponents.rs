//! Locates the periodic orbit of the forced damped oscillator, computes its
//! monodromy matrix and Floquet exponents.

use cpa_contraction::floquet_oracle::{find_periodic_orbit, integrate, monodromy};
use cpa_contraction::system::parse_system;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = parse_system("dim = 2; period = 2*pi; f1 = x2; f2 = -x1 - 2*x2 + cos(t)")?;
    let orbit = find_periodic_orbit(&sys, &[0.0, 0.0], 1e-12, 20, 2000)?;
    println!("x* = {:?} after {} Newton steps (residual {:.1e})", orbit.x_star, orbit.newton_iterations, orbit.residual);
    let full = monodromy(&sys, &orbit, 4000)?;
    println!("monodromy = {:.6?}", full.monodromy);
    println!("exponents = {:?}", full.exponents);

    let traj = integrate(&sys, 0.0, &orbit.x_star, sys.period(), 400)?;
    println!("x(T) = {:?}, step-doubling error {:.1e}", traj.last(), traj.max_local_error);
    Ok(())
}
