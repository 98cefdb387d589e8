//! Scenario configuration files: a structured document mirroring the
//! command-line surface. Every field is optional; command-line flags win
//! over file values.

use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub game: GameSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub batch: BatchSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    /// Inline game document path. Mutually exclusive with the random spec.
    pub file: Option<PathBuf>,
    pub users: Option<usize>,
    pub nodes: Option<usize>,
    pub seed: Option<u64>,
    pub distribution: Option<String>,
    /// Collinear-gain construction factor (degenerate test games).
    pub collinear: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub solver: Option<String>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub support_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    pub step: Option<f64>,
    pub horizon: Option<f64>,
    pub residual_tol: Option<f64>,
    pub stride: Option<usize>,
    /// `uniform`, `random`, `vertex`, or `file`.
    pub init: Option<String>,
    pub init_seed: Option<u64>,
    /// Node assignment per user for `init = "vertex"`.
    pub vertex: Option<Vec<usize>>,
    pub init_file: Option<PathBuf>,
    /// KL reference: `auto` (solver equilibrium, or the trajectory's own
    /// limit when the game is degenerate) or `none`.
    pub kl: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSection {
    pub count: Option<usize>,
    pub users_max: Option<usize>,
    pub nodes_max: Option<usize>,
    pub inits: Option<usize>,
    pub reports_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }
}
