//! The JSON run configuration.

use std::path::{Path, PathBuf};

use merge_mech::change::ChangeConfig;
use merge_mech::fix::FixConfig;
use merge_mech::{Instance, ItemParams, QuadratureSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MIN_SAMPLES: usize = 100;
pub const MIN_QUADRATURE_NODES: usize = 8;
pub const MAX_QUADRATURE_NODES: usize = 64;
pub const DEFAULT_AUDIT_PROFILES: usize = 200;
pub const DEFAULT_AUDIT_GRID: usize = 50;

/// One entry of `"mechanisms"`. Item indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismSpec {
    Gfix,
    Gchange,
    PureAd,
    GfixI(Vec<usize>),
    GchangeI(Vec<usize>),
    /// G-FIX allocation charging each displayed ad its own bid; fails IC.
    FirstPrice,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    slots: usize,
    items: Vec<ItemParams>,
    samples: usize,
    seed: u64,
    quadrature_nodes: usize,
    mechanisms: Vec<MechanismSpec>,
    #[serde(default)]
    selection_samples: Option<usize>,
    #[serde(default)]
    audit_profiles: Option<usize>,
    #[serde(default)]
    audit_grid: Option<usize>,
    #[serde(default)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub instance: Instance,
    pub mechanisms: Vec<MechanismSpec>,
    pub samples: usize,
    pub seed: u64,
    pub quadrature: QuadratureSpec,
    /// Samples used when `gfix`/`gchange` choose their set.
    pub selection_samples: usize,
    pub audit_profiles: usize,
    pub audit_grid: usize,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| CliError::Config(format!("parse error: {e}")))?;
        let invalid = |msg: String| Err(CliError::Config(msg));
        let instance = Instance::new(raw.items, raw.slots).map_err(|e| CliError::Config(e.to_string()))?;
        if raw.samples < MIN_SAMPLES {
            return invalid(format!("samples must be at least {MIN_SAMPLES} (got {})", raw.samples));
        }
        if !(MIN_QUADRATURE_NODES..=MAX_QUADRATURE_NODES).contains(&raw.quadrature_nodes) {
            return invalid(format!(
                "quadrature_nodes must lie in [{MIN_QUADRATURE_NODES}, {MAX_QUADRATURE_NODES}] (got {})",
                raw.quadrature_nodes
            ));
        }
        if raw.mechanisms.is_empty() {
            return invalid("mechanisms must name at least one mechanism".into());
        }
        let (n, k) = (instance.len(), instance.slots());
        for spec in &raw.mechanisms {
            let checked = match spec {
                MechanismSpec::GfixI(set) => FixConfig::new(set.iter().copied(), n, k).map(|_| ()),
                MechanismSpec::GchangeI(order) => ChangeConfig::new(order.clone(), n, k).map(|_| ()),
                _ => Ok(()),
            };
            checked.map_err(|e| CliError::Config(format!("mechanism {spec:?}: {e}")))?;
        }
        let selection_samples = raw.selection_samples.unwrap_or(raw.samples);
        if selection_samples < MIN_SAMPLES {
            return invalid(format!("selection_samples must be at least {MIN_SAMPLES} (got {selection_samples})"));
        }
        let audit_grid = raw.audit_grid.unwrap_or(DEFAULT_AUDIT_GRID);
        if audit_grid < 10 {
            return invalid(format!("audit_grid must be at least 10 (got {audit_grid})"));
        }
        let audit_profiles = raw.audit_profiles.unwrap_or(DEFAULT_AUDIT_PROFILES);
        if audit_profiles == 0 {
            return invalid("audit_profiles must be positive".into());
        }
        Ok(Self {
            instance,
            mechanisms: raw.mechanisms,
            samples: raw.samples,
            seed: raw.seed,
            quadrature: QuadratureSpec::new(raw.quadrature_nodes).map_err(|e| CliError::Config(e.to_string()))?,
            selection_samples,
            audit_profiles,
            audit_grid,
            output: raw.output,
        })
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::from_json(&text)
}
