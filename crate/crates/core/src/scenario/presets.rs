//! Built-in scenario documents.

use super::config::{load_config, ConfigError, ScenarioConfig};

/// `(name, TOML text)` of every shipped preset.
pub const PRESETS: [(&str, &str); 7] = [
    ("t1-log-desk", include_str!("../../presets/t1-log-desk.toml")),
    ("t1-honest-b-bounds", include_str!("../../presets/t1-honest-b-bounds.toml")),
    ("t2-poly-1d", include_str!("../../presets/t2-poly-1d.toml")),
    ("t3-compact-1d", include_str!("../../presets/t3-compact-1d.toml")),
    ("t3-compact-2d", include_str!("../../presets/t3-compact-2d.toml")),
    ("identity-refinement", include_str!("../../presets/identity-refinement.toml")),
    ("weight-suite", include_str!("../../presets/weight-suite.toml")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.0).collect()
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|p| p.0 == name).map(|p| p.1)
}

/// Loads a preset by name; `None` if there is no such preset.
pub fn preset(name: &str) -> Option<Result<ScenarioConfig, ConfigError>> {
    preset_text(name).map(load_config)
}
