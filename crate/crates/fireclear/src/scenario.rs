//! Scenario file loading. The on-disk format is TOML:
//!
//! ```toml
//! [market]
//! beta = 0.02
//! theta_bar = 0.04
//! epsilon = 0.0
//! p_switch = 1.0
//! modularity = "submodular"
//! rng_seed = 42
//!
//! [[banks]]
//! id = "i"
//! assets = 100.0
//! equity = 8.0
//! investments = { k = 100.0 }
//! ```
//!
//! All money values are decimal numbers; every bank's investments must sum
//! to its assets.

use crate::model::{validate_scenario, Scenario};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Parse a scenario from TOML text.
pub fn from_toml_str(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })?;
    let report = validate_scenario(&scenario, false);
    if !report.is_valid() {
        return Err(ScenarioError::Invalid(report.violations.join("; ")));
    }
    Ok(scenario)
}

pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_toml_str(&text, &path.display().to_string())
}

pub fn to_toml_string(scenario: &Scenario) -> String {
    toml::to_string_pretty(scenario).expect("scenario serializes")
}

/// FNV-1a digest of the canonical serialization; stamped into every report
/// header for reproducibility.
pub fn digest(scenario: &Scenario) -> String {
    let text = to_toml_string(scenario);
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO: &str = r#"
[market]
beta = 0.02
theta_bar = 0.04
epsilon = 0.0
p_switch = 1.0
modularity = "submodular"
rng_seed = 42

[[banks]]
id = "i"
assets = 100.0
equity = 8.0
investments = { k = 100.0 }

[[banks]]
id = "j"
assets = 50.0
equity = 2.5
investments = { k = 50.0 }
"#;

    #[test]
    fn parses_demo() {
        let sc = from_toml_str(DEMO, "demo").unwrap();
        assert_eq!(sc.banks.len(), 2);
        assert_eq!(sc.market.beta, 0.02);
        assert_eq!(sc.banks[0].investments["k"], 100.0);
    }

    #[test]
    fn rejects_malformed() {
        let err = from_toml_str("[market\nbeta = ", "bad");
        assert!(matches!(err, Err(ScenarioError::Parse { .. })));
    }

    #[test]
    fn rejects_invalid_balance_sheet() {
        let bad = DEMO.replace("equity = 8.0", "equity = 200.0");
        let err = from_toml_str(&bad, "bad");
        assert!(matches!(err, Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn digest_is_stable() {
        let sc = from_toml_str(DEMO, "demo").unwrap();
        assert_eq!(digest(&sc), digest(&sc));
    }
}
