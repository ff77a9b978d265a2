//! Bundled scenarios reproducing the qualitative trends of the evaluation.

use crate::config::ScenarioConfig;
use crate::error::{CliError, Result};

/// `(name, TOML source)` of every preset.
pub const PRESETS: [(&str, &str); 5] = [
    ("fig5a", include_str!("../presets/fig5a.toml")),
    ("fig5d", include_str!("../presets/fig5d.toml")),
    ("fig6", include_str!("../presets/fig6.toml")),
    ("fig7", include_str!("../presets/fig7.toml")),
    ("deadline", include_str!("../presets/deadline.toml")),
];

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        CliError::config(format!(
            "unknown preset `{name}` (known: {})",
            known.join(", ")
        ))
    })?;
    ScenarioConfig::from_toml(text)
}

pub fn all() -> Vec<ScenarioConfig> {
    PRESETS
        .iter()
        .map(|(n, _)| preset(n).expect("bundled presets are valid"))
        .collect()
}
