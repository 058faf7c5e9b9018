//! Parses a right-hand side, evaluates it and bounds its second and third
//! partials over a box in `(t, x)`.

use cpa_contraction::system::{parse_system, PhaseBox};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sys = parse_system("dim = 2; period = 2*pi; smoothness = C3; f1 = x2; f2 = -x1 - 2*x2 + 0.3*x1^2*cos(t)")?;
    let (t, x) = (1.0, [0.2, -0.1]);
    println!("f({t}, {x:?}) = {:?}", sys.eval_f(t, &x)?);
    println!("Df = {:?}", sys.eval_jacobian(t, &x)?);

    for half in [0.5, 0.25, 0.125] {
        let region = PhaseBox::new(vec![(0.0, 0.5), (-half, half), (-half, half)]);
        let b = sys.derivative_bounds(&region)?;
        println!("box |x| <= {half:<5}: B2 = {:.4}, B3 = {:.4}", b.second, b.third.unwrap_or(f64::NAN));
    }
    Ok(())
}
