//! Certificate file: the config, the complex parameters, the metric at every
//! vertex slot, `C`, `D`, solver statistics and the verification report.
//!
//! Witness numbers are stored as `{:.16e}` decimal strings, which parse back
//! to the identical `f64`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::sdp_assembly::VariableMap;
use crate::sdp_solver::SolveStatus;
use crate::triangulation::SimplicialComplex;
use crate::verifier::{nullable_f64, MetricBounds, VerificationReport};

use super::config::Config;
use super::CliError;

pub const FORMAT: &str = "cpa-contraction-certificate/1";

/// `f64` written as a 17-digit decimal string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dec(pub f64);

impl Serialize for Dec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:.16e}", self.0))
    }
}

impl<'de> Deserialize<'de> for Dec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.trim().parse().map(Dec).map_err(|_| serde::de::Error::custom(format!("bad number `{s}`")))
    }
}

fn decs(v: &[f64]) -> Vec<Dec> {
    v.iter().copied().map(Dec).collect()
}

fn floats(v: &[Dec]) -> Vec<f64> {
    v.iter().map(|d| d.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub status: SolveStatus,
    pub iterations: usize,
    #[serde(deserialize_with = "nullable_f64")]
    pub gap: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub objective: f64,
    pub variables: usize,
    pub blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub format: String,
    pub config: Config,
    pub k: u32,
    pub rho: Dec,
    pub scaling: Vec<Dec>,
    pub period: Dec,
    /// One vertex `(t, x)` per metric storage slot.
    pub vertices: Vec<Vec<Dec>>,
    /// Packed upper triangle of `M` per slot.
    pub metric: Vec<Vec<Dec>>,
    /// One value, or one per simplex.
    pub c: Vec<Dec>,
    pub d: Vec<Dec>,
    pub solver: SolverStats,
    pub verification: VerificationReport,
    #[serde(deserialize_with = "nullable_f64")]
    pub floquet_bound: f64,
}

/// First vertex of each storage slot.
pub fn slot_vertices(complex: &SimplicialComplex) -> Vec<Vec<f64>> {
    let mut out: Vec<Option<Vec<f64>>> = vec![None; complex.num_slots()];
    for v in 0..complex.num_vertices() {
        let s = complex.slot(v);
        if out[s].is_none() {
            out[s] = Some(complex.vertex(v).to_vec());
        }
    }
    out.into_iter().map(|v| v.unwrap_or_default()).collect()
}

impl Certificate {
    pub fn new(
        config: &Config,
        complex: &SimplicialComplex,
        map: &VariableMap,
        y: &[f64],
        solver: SolverStats,
        verification: VerificationReport,
    ) -> Self {
        let p = map.entries_per_slot();
        let metric = map.metric_values(y);
        Certificate {
            format: FORMAT.to_string(),
            config: config.clone(),
            k: complex.level().unwrap_or(0),
            rho: Dec(complex.rho().unwrap_or(f64::NAN)),
            scaling: decs(complex.scaling().map(|s| s.diag()).unwrap_or(&[])),
            period: Dec(complex.period().unwrap_or(f64::NAN)),
            vertices: slot_vertices(complex).iter().map(|v| decs(v)).collect(),
            metric: metric.chunks(p).map(decs).collect(),
            c: decs(&map.c_values(y)),
            d: decs(&map.d_values(y)),
            floquet_bound: verification.floquet_bound,
            solver,
            verification,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let c: Certificate = serde_json::from_str(text).map_err(|e| CliError::Input(format!("certificate: {e}")))?;
        if c.format != FORMAT {
            return Err(CliError::Input(format!("unknown certificate format `{}`", c.format)));
        }
        c.config.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    /// Packed metric values, slot after slot.
    pub fn metric_values(&self) -> Vec<f64> {
        self.metric.iter().flat_map(|m| floats(m)).collect()
    }

    pub fn bounds(&self) -> MetricBounds {
        MetricBounds { c: floats(&self.c), d: floats(&self.d) }
    }

    /// The SDP variable vector in the layout of `map`.
    pub fn variable_vector(&self, map: &VariableMap) -> Result<Vec<f64>, CliError> {
        let mut y = self.metric_values();
        let expected = map.num_slots * map.entries_per_slot();
        let cd = if map.uniform_cd { 1 } else { map.num_simplices };
        if y.len() != expected || self.c.len() != cd || self.d.len() != cd {
            return Err(CliError::Input("certificate does not match the complex of its config".into()));
        }
        y.extend(floats(&self.c));
        y.extend(floats(&self.d));
        if map.has_cmax {
            y.push(self.bounds().c_max());
        }
        Ok(y)
    }

    /// Checks that `complex` has the certificate's slots at the same places.
    pub fn matches(&self, complex: &SimplicialComplex) -> bool {
        let verts = slot_vertices(complex);
        verts.len() == self.vertices.len()
            && verts.iter().zip(&self.vertices).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y.0).abs() <= 1e-12 * (1.0 + x.abs()))
            })
    }
}
