pub mod cli;
pub mod cpa_metric;
pub mod floquet_oracle;
pub mod linalg;
pub mod sdp_assembly;
pub mod sdp_solver;
pub mod system;
pub mod triangulation;
pub mod verifier;
