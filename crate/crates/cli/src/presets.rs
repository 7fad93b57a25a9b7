//! Named configurations, one per figure panel.

use crate::config::{parse_table, RunConfig};
use crate::error::CliError;

pub struct Preset {
    pub name: &'static str,
    pub text: &'static str,
}

impl Preset {
    /// First comment line of the preset file.
    pub fn summary(&self) -> &'static str {
        self.text.lines().next().and_then(|l| l.strip_prefix("# ")).unwrap_or("")
    }

    pub fn config(&self) -> Result<RunConfig, CliError> {
        RunConfig::from_table(&parse_table(self.text)?, None)
    }
}

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        pub const PRESETS: &[Preset] = &[
            $(Preset { name: $name, text: include_str!(concat!("../presets/", $name, ".toml")) },)*
        ];
    };
}

presets!(
    "fig1c",
    "fig1d",
    "fig2",
    "fig3b",
    "fig3c",
    "fig3d",
    "fig3e",
    "fig4b",
    "fig4c",
    "fig4d",
    "fig4e",
    "figs2a",
    "figs2b",
    "figs2c",
    "figs2d",
    "figs3a",
    "figs3b",
    "figs3c",
    "figs3d",
);

pub fn find(name: &str) -> Result<&'static Preset, CliError> {
    PRESETS.iter().find(|p| p.name.eq_ignore_ascii_case(name)).ok_or_else(|| CliError::Validation {
        key: "preset".into(),
        message: format!(
            "unknown preset {name:?}; available: {}",
            PRESETS.iter().map(|p| p.name).collect::<Vec<_>>().join(", ")
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for p in PRESETS {
            let cfg = p.config().unwrap_or_else(|e| panic!("{}: {e}", p.name));
            assert!(!p.summary().is_empty(), "{}", p.name);
            cfg.sim_config().unwrap();
        }
        assert_eq!(PRESETS.len(), 19);
        assert!(find("FIG4B").is_ok());
        assert!(find("fig9").is_err());
    }
}
