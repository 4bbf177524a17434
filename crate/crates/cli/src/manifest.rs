use serde::{Deserialize, Serialize};

use randcert::bell::{InputDistribution, Scenario};
use randcert::relaxation::Level;
use randcert::solver::SolverSettings;

/// Everything needed to repeat a run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Full argument vector, program name excluded.
    pub args: Vec<String>,
    pub input_files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_distribution: Option<InputDistribution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_budget: Option<usize>,
    pub outputs: Vec<String>,
    /// Seed of any randomized heuristic; all current searches are deterministic.
    pub seed: u64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            ..Default::default()
        }
    }
}
