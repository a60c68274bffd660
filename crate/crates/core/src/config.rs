//! Analysis thresholds and lexicons.
//!
//! Loaded from a flat TOML file whose keys are the field names; absent keys
//! take the defaults below.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

const BACKCHANNEL_TOKENS: &[&str] = &[
    "yeah", "ok", "okay", "right", "mm", "mmhm", "mhm", "mm-hmm", "uh-huh", "yep", "yes", "oui",
    "ouais", "d'accord", "ah", "hm", "exactement", "voilà",
];

const FILLED_PAUSE_TOKENS: &[&str] = &[
    "um", "umm", "uh", "uhm", "er", "erm", "ehm", "hmm", "euh", "bah", "ben", "heu",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Same-speaker cues separated by at most this much silence join one turn.
    pub merge_gap_ms: u64,
    pub long_pause_ms: u64,
    pub backchannel_max_ms: u64,
    pub backchannel_max_tokens: usize,
    pub backchannel_lexicon: BTreeSet<String>,
    pub filled_pause_lexicon: BTreeSet<String>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            merge_gap_ms: 1000,
            long_pause_ms: 3000,
            backchannel_max_ms: 1500,
            backchannel_max_tokens: 2,
            backchannel_lexicon: BACKCHANNEL_TOKENS.iter().map(|s| s.to_string()).collect(),
            filled_pause_lexicon: FILLED_PAUSE_TOKENS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl AnalysisConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let config: AnalysisConfig = toml::from_str(s)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [
            ("merge_gap_ms", self.merge_gap_ms),
            ("long_pause_ms", self.long_pause_ms),
            ("backchannel_max_ms", self.backchannel_max_ms),
            ("backchannel_max_tokens", self.backchannel_max_tokens as u64),
        ] {
            if value == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be greater than zero")));
            }
        }
        for (name, lexicon) in [
            ("backchannel_lexicon", &self.backchannel_lexicon),
            ("filled_pause_lexicon", &self.filled_pause_lexicon),
        ] {
            if lexicon.is_empty() {
                return Err(ConfigError::Invalid(format!("{name} must not be empty")));
            }
            if let Some(bad) = lexicon
                .iter()
                .find(|t| t.is_empty() || **t != t.to_lowercase() || t.contains(char::is_whitespace))
            {
                return Err(ConfigError::Invalid(format!(
                    "{name} entry {bad:?} must be a single lowercase token"
                )));
            }
        }
        Ok(())
    }
}
