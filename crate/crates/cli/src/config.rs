//! JSON run configuration.
//!
//! A run is described by one document passed via `--config`; the `--out`,
//! `--seed`, `--eps`, and `--control` flags override individual fields.
//! The full schema is documented in the repository README.

use std::path::PathBuf;

use serde::Deserialize;
use specgal::spectral::PotentialSpec;
use specgal::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Estimate,
    Converge,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub command: Command,
    pub model: ModelConfig,
    #[serde(default)]
    pub controls: Option<ControlSource>,
    #[serde(default)]
    pub initial_states: Option<StateSource>,
    /// Sobolev orders logged along every trajectory.
    #[serde(default)]
    pub sobolev_orders: Vec<f64>,
    /// Uniform recording points per trajectory.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Optional amplitude cap; controls exceeding it are recorded in the
    /// manifest, never rejected.
    #[serde(default)]
    pub amplitude_cap: Option<f64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub estimate: Option<EstimateConfig>,
    #[serde(default)]
    pub converge: Option<ConvergeConfig>,
}

fn default_grid_points() -> usize {
    33
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub geometry: GeometryKind,
    pub dim: usize,
    #[serde(default = "zero_potential")]
    pub v: PotentialSpec,
    pub w: PotentialSpec,
    /// Quadrature node budget; defaults to a geometry-dependent multiple
    /// of the dimension.
    #[serde(default)]
    pub quad_points: Option<usize>,
}

fn zero_potential() -> PotentialSpec {
    PotentialSpec::Zero
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    DirichletBox,
    FlatTorus,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum ControlSource {
    File { file: PathBuf },
    Family { family: FamilyConfig },
}

/// Seeded family drawn through the control generator; the run seed feeds
/// the stream-split generator, so identical configs reproduce bytes.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub count: usize,
    pub pieces: usize,
    pub tv_budget: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum StateSource {
    /// 1-based eigenvector indices at the model dimension.
    Eigenvectors {
        eigenvectors: Vec<usize>,
    },
    Files {
        files: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// Coupling orders `k` checked per (control, state) pair.
    pub ks: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub eps: f64,
    pub mass_budget: f64,
    pub horizon: f64,
    /// Error norm order `s`; must stay below `k`.
    pub s: f64,
    /// Coupling order `k`.
    pub k: f64,
    pub dims: Vec<usize>,
    pub reference_dim: usize,
    pub family: HarnessFamilyConfig,
    /// Run the doubled-reference self-consistency check (default on).
    #[serde(default = "default_true")]
    pub self_check: bool,
    #[serde(default)]
    pub heldout_count: Option<usize>,
    #[serde(default)]
    pub heldout_seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessFamilyConfig {
    pub count: usize,
    pub pieces: usize,
    #[serde(default)]
    pub include_adversarial: bool,
    #[serde(default)]
    pub include_atoms: bool,
}

fn default_true() -> bool {
    true
}

impl Config {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Config = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.model.dim == 0 {
            return Err(Error::InvalidInput("model dim must be positive".into()));
        }
        if self.grid_points < 2 {
            return Err(Error::InvalidInput("grid_points must be at least 2".into()));
        }
        if self
            .sobolev_orders
            .iter()
            .any(|k| !(k.is_finite() && *k >= 0.0))
        {
            return Err(Error::InvalidInput(
                "sobolev_orders must be non-negative reals".into(),
            ));
        }
        let family_used = matches!(self.controls, Some(ControlSource::Family { .. }))
            || self.command == Command::Converge;
        if family_used && self.seed.is_none() {
            return Err(Error::InvalidInput(
                "a seed is required whenever a control family is drawn".into(),
            ));
        }
        match self.command {
            Command::Simulate | Command::Estimate => {
                if self.controls.is_none() {
                    return Err(Error::InvalidInput(
                        "simulate/estimate need a control source".into(),
                    ));
                }
                if self.initial_states.is_none() {
                    return Err(Error::InvalidInput(
                        "simulate/estimate need initial states".into(),
                    ));
                }
                if self.command == Command::Estimate && self.estimate.is_none() {
                    return Err(Error::InvalidInput(
                        "estimate needs an \"estimate\" section".into(),
                    ));
                }
            }
            Command::Converge => {
                let section = self.converge.as_ref().ok_or_else(|| {
                    Error::InvalidInput("converge needs a \"converge\" section".into())
                })?;
                if section.dims.len() < 2 {
                    return Err(Error::InvalidInput(
                        "converge needs at least two truncation orders".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}
