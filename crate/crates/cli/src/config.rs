//! TOML run configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dislo_core::burgers::BurgersSystem;
use dislo_core::elastic::{ElasticTensor, Vec2};
use dislo_core::measure::{LimitMeasure, Region};
use dislo_core::sim::Domain2D;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; all cores when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub tensor: TensorSpec,
    #[serde(default)]
    pub burgers: BurgersSpec,
    #[serde(default)]
    pub domain: DomainSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<CellSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PhiSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub korn: Option<KornSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TensorSpec {
    Isotropic { lambda: f64, mu: f64 },
    /// Components `C_ijkl` in row-major order of `(i, j, k, l)`.
    General { components: Vec<f64> },
    Toy {},
}

impl Default for TensorSpec {
    fn default() -> Self {
        TensorSpec::Isotropic { lambda: 1.0, mu: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BurgersSpec {
    Square {},
    Hexagonal {},
    Custom { vectors: Vec<[f64; 2]> },
}

impl Default for BurgersSpec {
    fn default() -> Self {
        BurgersSpec::Square {}
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSpec {
    Disk { center: [f64; 2], radius: f64, mesh_size: f64 },
    Rectangle { min: [f64; 2], max: [f64; 2], mesh_size: f64 },
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec::Disk { center: [0.0, 0.0], radius: 1.0, mesh_size: 0.05 }
    }
}

fn default_true() -> bool {
    true
}
fn default_n_theta() -> usize {
    64
}
fn default_radius() -> f64 {
    4.0
}
fn default_polar() -> usize {
    64
}
fn default_z_max() -> i64 {
    3
}
fn default_samples() -> usize {
    500
}
fn default_degree() -> usize {
    4
}
fn default_korn_mesh() -> f64 {
    1.0 / 12.0
}
fn default_power_steps() -> usize {
    4
}
fn default_korn_dislocations() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    pub xi: [f64; 2],
    pub eps: Vec<f64>,
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
    /// Hard-core radius; the plain annulus problem when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Extrapolate to the limit when at least two values of ε are given.
    #[serde(default = "default_true")]
    pub extrapolate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSection {
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// `toy-analytic`, `profile-quadrature` or `cell-extrapolated`; chosen
    /// from the tensor when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default = "default_polar")]
    pub polar_samples: usize,
    #[serde(default)]
    pub probes: Vec<[f64; 2]>,
    #[serde(default = "default_z_max")]
    pub z_max: i64,
    #[serde(default)]
    pub check_burgers: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DislocationSpec {
    pub position: [f64; 2],
    pub burgers: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub eps: f64,
    pub rho: f64,
    #[serde(default)]
    pub dislocations: Vec<DislocationSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub min: [f64; 2],
    pub max: [f64; 2],
    pub density: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// `dilute`, `critical` or `super`.
    pub regime: String,
    pub eps: Vec<f64>,
    pub target: Vec<RegionSpec>,
    /// `balanced` or `lattice`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<String>,
    /// `ρ = ε^γ`; the placement half-spacing when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_power: Option<f64>,
    #[serde(default = "default_radius")]
    pub phi_radius: f64,
    /// Also compare with the limit functional.
    #[serde(default)]
    pub gap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KornSection {
    pub family: String,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_korn_mesh")]
    pub mesh_size: f64,
    #[serde(default = "default_power_steps")]
    pub power_steps: usize,
    #[serde(default = "default_korn_dislocations")]
    pub dislocations: usize,
}

fn v(a: [f64; 2]) -> Vec2 {
    Vec2::new(a[0], a[1])
}

fn bad(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(bad)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", cfg.schema_version)));
        }
        cfg.tensor()?;
        cfg.burgers()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical serialization, ignoring the thread count.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.threads = None;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn tensor(&self) -> Result<ElasticTensor, CliError> {
        match &self.tensor {
            TensorSpec::Isotropic { lambda, mu } => ElasticTensor::isotropic(*lambda, *mu).map_err(bad),
            TensorSpec::Toy {} => Ok(ElasticTensor::toy_full_norm()),
            TensorSpec::General { components } => {
                if components.len() != 16 {
                    return Err(bad(format!("general tensor needs 16 components, got {}", components.len())));
                }
                let mut e = [[[[0.0; 2]; 2]; 2]; 2];
                for (n, x) in components.iter().enumerate() {
                    e[n >> 3][(n >> 2) & 1][(n >> 1) & 1][n & 1] = *x;
                }
                ElasticTensor::general(e).map_err(bad)
            }
        }
    }

    pub fn burgers(&self) -> Result<BurgersSystem, CliError> {
        match &self.burgers {
            BurgersSpec::Square {} => Ok(BurgersSystem::square()),
            BurgersSpec::Hexagonal {} => Ok(BurgersSystem::hexagonal()),
            BurgersSpec::Custom { vectors } => BurgersSystem::new(vectors.iter().map(|a| v(*a)).collect()).map_err(bad),
        }
    }

    pub fn domain(&self) -> Result<Domain2D, CliError> {
        match &self.domain {
            DomainSpec::Disk { center, radius, mesh_size } => Domain2D::disk(v(*center), *radius, *mesh_size).map_err(bad),
            DomainSpec::Rectangle { min, max, mesh_size } => Domain2D::rectangle(v(*min), v(*max), *mesh_size).map_err(bad),
        }
    }

    pub fn section<'a, T>(&'a self, s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        s.as_ref().ok_or_else(|| bad(format!("configuration has no [{name}] section")))
    }
}

impl SweepSection {
    pub fn target(&self) -> Result<LimitMeasure, CliError> {
        let regions = self
            .target
            .iter()
            .map(|r| Region::new(v(r.min), v(r.max), v(r.density)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(bad)?;
        LimitMeasure::piecewise_constant(regions).map_err(bad)
    }
}

pub fn vec2(a: [f64; 2]) -> Vec2 {
    v(a)
}
