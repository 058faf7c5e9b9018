//! Assembles the SDP for the forced linear example, counts blocks by
//! family and writes it in SDPA format.

use std::collections::BTreeMap;
use std::path::PathBuf;

use cpa_contraction::cli::{build, build_problem, Config};
use cpa_contraction::sdp_assembly::sdpa::export_sdpa;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs");
    let config = Config::from_json(&std::fs::read_to_string(dir.join("forced_linear.json"))?)?;
    let sys = config.system()?;
    let complex = build(&config, &sys, 2)?;
    let (problem, map) = build_problem(&config, &sys, &complex)?;
    println!("{} simplices, {} slots, {} variables, {} blocks", complex.num_simplices(), map.num_slots, problem.num_vars(), problem.num_blocks());

    let mut census: BTreeMap<String, usize> = BTreeMap::new();
    for b in 0..problem.num_blocks() {
        *census.entry(format!("{:?}", problem.tag(b).kind)).or_default() += 1;
    }
    for (kind, count) in census {
        println!("  {kind:<14} {count}");
    }

    let out = std::env::temp_dir().join("forced_linear_k2.sdpa");
    std::fs::write(&out, export_sdpa(&problem)?)?;
    println!("wrote {}", out.display());
    Ok(())
}
