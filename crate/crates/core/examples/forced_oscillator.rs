//! Two-dimensional synthesis for `x'' + 2x' + x = cos t` with the stored
//! configuration. Takes a minute or so in release mode.

use std::path::PathBuf;

use cpa_contraction::cli::{floquet, synthesize, Config, Synthesis, VerifyArgs};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/forced_oscillator.json");
    let config = Config::from_json(&std::fs::read_to_string(path)?)?;
    match synthesize(&config, &VerifyArgs::default(), None)? {
        Synthesis::Certified(cert) => {
            let cmp = floquet(&config, Some(&cert), 1e-6, None)?;
            println!("K = {}, C = {:.4e}", cert.k, cert.c[0].0);
            println!("oracle exponents {:?}", cmp.exponents);
            println!("certified bound {:?}, violated: {}", cmp.bound, cmp.violated);
        }
        Synthesis::Exhausted { k, status, .. } => println!("no certificate up to K = {k}: {status:?}"),
    }
    Ok(())
}
