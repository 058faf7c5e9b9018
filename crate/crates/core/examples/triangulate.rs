//! Builds the time-periodic triangulation of `[0, T] x [-0.4, 0.4]^2` at a
//! few levels and checks it.

use cpa_contraction::triangulation::{build_complex, check_complex, Region, ScalingMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let region = Region::single(vec![(-0.4, 0.4), (-0.4, 0.4)])?;
    let scaling = ScalingMatrix::new(&[1.0, 0.75])?;
    println!("{:>2} {:>9} {:>9} {:>9} {:>12} {:>12}", "K", "simplices", "vertices", "slots", "max h", "max |X^-1|");
    for k in 0..=3 {
        let complex = build_complex(&region, 2.0, k, &scaling)?;
        let (h, inv) = (0..complex.num_simplices()).fold((0.0f64, 0.0f64), |(h, inv), i| {
            let g = complex.geometry(i);
            (h.max(g.h), inv.max(g.inverse_one_norm))
        });
        let report = check_complex(&complex, 500, k as u64);
        println!(
            "{k:>2} {:>9} {:>9} {:>9} {h:>12.6} {inv:>12.4} {}",
            complex.num_simplices(),
            complex.num_vertices(),
            complex.num_slots(),
            if report.is_valid() { "ok" } else { "INVALID" }
        );
    }
    Ok(())
}
