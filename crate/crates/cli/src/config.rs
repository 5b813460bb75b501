use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use repp_core::domain::SocialNetwork;
use repp_core::mechanisms::{EquilibriumProfile, MechanismSpec};
use repp_core::oracle::GridGame;
use repp_core::simulation::RunConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub runs: Vec<RunConfig>,
    #[serde(default)]
    pub games: Vec<GameBlock>,
    #[serde(default)]
    pub reports: Vec<ReportBlock>,
}

fn default_max_profiles() -> u128 {
    20_000_000
}

/// A game to verify. Without `profile` the canonical equilibrium is checked.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameBlock {
    pub name: String,
    pub mechanism: MechanismSpec,
    pub network: SocialNetwork,
    pub grid_step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_step: Option<f64>,
    #[serde(default = "default_max_profiles")]
    pub max_profiles: u128,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<EquilibriumProfile>,
    /// Also list every grid equilibrium (simultaneous mechanisms only).
    #[serde(default)]
    pub enumerate: bool,
}

impl GameBlock {
    pub fn grid_game(&self) -> repp_core::Result<GridGame> {
        let game = GridGame {
            mechanism: self.mechanism,
            network: self.network.clone(),
            grid_step: self.grid_step,
            time_step: self.time_step,
            max_profiles: self.max_profiles,
        };
        game.validate()?;
        Ok(game)
    }
}

/// A mechanism and population to compute bounds for.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportBlock {
    pub name: String,
    pub mechanism: MechanismSpec,
    pub network: SocialNetwork,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Reads and parses a JSON file. Parse and validation errors are reported as
/// `path:line:column: message`.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        let msg = e.to_string();
        // serde_json appends " at line L column C"; move the position up front
        let msg = msg.split(" at line ").next().unwrap_or(&msg).to_owned();
        ConfigError(format!("{}:{}:{}: {msg}", path.display(), e.line(), e.column()))
    })
}

pub fn load_experiment(path: &Path) -> Result<ExperimentFile, ConfigError> {
    let file: ExperimentFile = read_json(path)?;
    if file.version != VERSION {
        return Err(ConfigError(format!(
            "{}: unsupported version {} (expected {VERSION})",
            path.display(),
            file.version
        )));
    }
    let mut names = std::collections::BTreeSet::new();
    for name in file.runs.iter().map(|r| &r.name) {
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(ConfigError(format!("{}: run name {name:?} is not a valid file stem", path.display())));
        }
        if !names.insert(name) {
            return Err(ConfigError(format!("{}: duplicate run name {name:?}", path.display())));
        }
    }
    Ok(file)
}
