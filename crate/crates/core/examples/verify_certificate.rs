//! Writes a certificate, reads it back, re-verifies it with fresh samples,
//! and shows that a tampered copy is rejected.

use std::path::PathBuf;

use cpa_contraction::cli::{synthesize, verify_certificate, Certificate, Config, Synthesis, VerifyArgs};
use cpa_contraction::cli::certificate::Dec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/forced_linear.json");
    let config = Config::from_json(&std::fs::read_to_string(path)?)?;
    let Synthesis::Certified(cert) = synthesize(&config, &VerifyArgs::default(), None)? else {
        return Err("synthesis failed".into());
    };
    let file = std::env::temp_dir().join("forced_linear.cert.json");
    std::fs::write(&file, cert.to_json())?;

    let loaded = Certificate::from_json(&std::fs::read_to_string(&file)?)?;
    println!("read back identical: {}", loaded == *cert);
    let args = VerifyArgs { seed: 17, ..VerifyArgs::default() };
    let report = verify_certificate(&loaded, None, &args, None)?;
    println!("fresh samples: passed {}, max lambda_max {:.4}", report.passed, report.sampled.max_lambda);

    let mut tampered = loaded.clone();
    tampered.metric[7][0] = Dec(tampered.metric[7][0].0 + 10.0);
    let report = verify_certificate(&tampered, None, &args, None)?;
    let vertex = report.vertex.as_ref().map_or(0, |v| v.violations);
    println!("tampered: passed {}, {} vertex violations", report.passed, vertex);
    Ok(())
}
