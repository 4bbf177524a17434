//! Reference data shipped with the crate.

use serde::Deserialize;

use crate::bell::{correlators_from_behavior, Behavior, CorrelatorSet};
use crate::error::Result;

#[derive(Clone, Debug, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub description: String,
    /// Number of experimental runs behind the statistics.
    pub runs: u64,
    pub behavior: Behavior,
}

impl Dataset {
    pub fn correlators(&self) -> Result<CorrelatorSet> {
        correlators_from_behavior(&self.behavior)
    }
}

const CHRISTENSEN2013: &str = include_str!("../data/christensen2013.json");

/// No-signalling correlators of a 2013 photonic CHSH experiment.
pub fn christensen2013() -> Dataset {
    serde_json::from_str(CHRISTENSEN2013).expect("bundled dataset parses")
}

/// Looks up a bundled dataset by name.
pub fn builtin(name: &str) -> Option<Dataset> {
    match name {
        "christensen2013" => Some(christensen2013()),
        _ => None,
    }
}
