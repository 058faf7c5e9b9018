//! Certifies the forced linear example and watches the metric distance of
//! two nearby solutions shrink.

use std::path::PathBuf;

use cpa_contraction::cli::{build, synthesize, Config, Synthesis, VerifyArgs};
use cpa_contraction::cpa_metric::CpaMetric;
use cpa_contraction::floquet_oracle::contraction_probe;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/forced_linear.json");
    let config = Config::from_json(&std::fs::read_to_string(path)?)?;
    let Synthesis::Certified(cert) = synthesize(&config, &VerifyArgs::default(), None)? else {
        return Err("synthesis failed".into());
    };
    let sys = config.system()?;
    let complex = build(&config, &sys, cert.k)?;
    let cpa = CpaMetric::new(&complex, cert.metric_values())?;

    let series = contraction_probe(&cpa, &sys, &[0.5, -1.5], &[1e-3], 2.0 * sys.period(), 2000)?;
    for k in (0..series.times.len()).step_by(250) {
        println!("t = {:>7.3}  d = {:.6e}", series.times[k], series.distances[k]);
    }
    println!("nonincreasing: {}", series.is_nonincreasing(1e-6));
    Ok(())
}
