//! Run configuration (JSON).

use serde::{Deserialize, Serialize};

use crate::sdp_assembly::{AssemblyOptions, Objective};
use crate::sdp_solver::SolverSettings;
use crate::system::{parse_system, Smoothness, SystemDefinition};
use crate::triangulation::{Region, ScalingMatrix};

use super::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mode {
    /// One `C` and one `D` for the whole complex.
    pub uniform_cd: bool,
    pub objective: Objective,
}

impl Default for Mode {
    fn default() -> Self {
        Self { uniform_cd: true, objective: Objective::MinC }
    }
}

/// A region is one box `[[lo, hi], ..]` or a list of boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegionSpec {
    Single(Vec<[f64; 2]>),
    Boxes(Vec<Vec<[f64; 2]>>),
}

impl RegionSpec {
    pub fn boxes(&self) -> Vec<Vec<(f64, f64)>> {
        let conv = |b: &Vec<[f64; 2]>| b.iter().map(|&[lo, hi]| (lo, hi)).collect();
        match self {
            RegionSpec::Single(b) => vec![conv(b)],
            RegionSpec::Boxes(bs) => bs.iter().map(conv).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// System text, e.g. `dim = 1; period = 2*pi; f1 = -x1 + sin(t)`.
    pub system: String,
    pub region: RegionSpec,
    /// Diagonal of the scaling matrix; all ones when absent.
    #[serde(default)]
    pub scaling: Option<Vec<f64>>,
    #[serde(default = "default_epsilon0")]
    pub epsilon0: f64,
    /// Overrides the class given in the system text.
    #[serde(default)]
    pub smoothness: Option<Smoothness>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub k_min: u32,
    pub k_max: u32,
    #[serde(default)]
    pub mode: Mode,
    /// Starting guess for the periodic orbit search; zeros when absent.
    #[serde(default)]
    pub orbit_guess: Option<Vec<f64>>,
    /// RK4 steps per period for the orbit and monodromy computations.
    #[serde(default = "default_steps")]
    pub floquet_steps: usize,
}

fn default_epsilon0() -> f64 {
    0.01
}

fn default_steps() -> usize {
    4000
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let c: Config = serde_json::from_str(text).map_err(|e| CliError::Input(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.k_min > self.k_max {
            return Err(CliError::Input(format!("k_min = {} exceeds k_max = {}", self.k_min, self.k_max)));
        }
        if !(self.epsilon0 > 0.0 && self.epsilon0.is_finite()) {
            return Err(CliError::Input(format!("epsilon0 must be positive, got {}", self.epsilon0)));
        }
        if self.floquet_steps == 0 {
            return Err(CliError::Input("floquet_steps must be at least 1".into()));
        }
        self.solver.validate().map_err(|e| CliError::Input(e.to_string()))?;
        let sys = self.system()?;
        let region = self.region()?;
        if region.dim() != sys.dim() {
            return Err(CliError::Input(format!(
                "region has dimension {}, system {}",
                region.dim(),
                sys.dim()
            )));
        }
        self.scaling_matrix()?;
        if let Some(g) = &self.orbit_guess {
            if g.len() != sys.dim() {
                return Err(CliError::Input(format!("orbit_guess has {} entries, system dimension {}", g.len(), sys.dim())));
            }
        }
        Ok(())
    }

    pub fn system(&self) -> Result<SystemDefinition, CliError> {
        let mut sys = parse_system(&self.system).map_err(|e| CliError::Input(format!("system: {e}")))?;
        if let Some(s) = self.smoothness {
            sys.set_smoothness(s);
        }
        Ok(sys)
    }

    pub fn region(&self) -> Result<Region, CliError> {
        Region::new(self.region.boxes()).map_err(|e| CliError::Input(format!("region: {e}")))
    }

    pub fn scaling_matrix(&self) -> Result<ScalingMatrix, CliError> {
        let n = self.region.boxes()[0].len();
        let s = self.scaling.clone().unwrap_or_else(|| vec![1.0; n]);
        if s.len() != n {
            return Err(CliError::Input(format!("scaling has {} entries, region dimension {n}", s.len())));
        }
        ScalingMatrix::new(&s).map_err(|e| CliError::Input(format!("scaling: {e}")))
    }

    pub fn assembly_options(&self) -> AssemblyOptions {
        AssemblyOptions { epsilon0: self.epsilon0, uniform_cd: self.mode.uniform_cd, objective: self.mode.objective }
    }
}
