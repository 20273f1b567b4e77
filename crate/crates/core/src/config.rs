//! Flat `key = value` configuration files (TOML syntax, top-level keys only)
//! with command-line overrides.
//!
//! ```text
//! # desk-scale exact-model run
//! N_s = 10
//! a_observer = 10.0
//! settings_q_init = [20, 50, 100, 300, 20]
//! ```

use std::path::Path;

use thiserror::Error;

use crate::scenario::ScenarioConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("override `{0}` is not of the form key=value")]
    Override(String),
    #[error("config: {0}")]
    Invalid(String),
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table, ConfigError> {
    text.parse::<toml::Table>().map_err(|e| ConfigError::Parse {
        origin: origin.to_string(),
        message: e.to_string(),
    })
}

fn override_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        // bare words become strings
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Parses `text`, applies `overrides` (`key=value`), then validates.
pub fn parse_config(text: &str, origin: &str, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    let mut table = parse_table(text, origin)?;
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.clone()))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Override(o.clone()));
        }
        table.insert(k.to_string(), override_value(v.trim()));
    }
    let config: ScenarioConfig =
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse {
                origin: origin.to_string(),
                message: e.to_string(),
            })?;
    config.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(config)
}

/// Loads `path` if given, otherwise starts from the defaults.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.display().to_string(),
                source,
            })?;
            parse_config(&text, &p.display().to_string(), overrides)
        }
        None => parse_config("", "<defaults>", overrides),
    }
}

/// The configuration as a config file that reproduces it.
pub fn to_config_text(config: &ScenarioConfig) -> String {
    toml::to_string(config).expect("config is serializable")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("", "t", &[]).unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn keys_and_overrides() {
        let text = "N_s = 5\nmaster_seed = 9\n# comment\na_observer = 7.0\n";
        let c = parse_config(
            text,
            "t",
            &[
                "N_sim=900".into(),
                "settings_adaptive = [false, false, false, false, false]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.n_scenarios, 5);
        assert_eq!(c.master_seed, 9);
        assert_eq!(c.a_observer, 7.0);
        assert_eq!(c.n_sim, 900);
        assert!(c.settings_adaptive.iter().all(|a| !a));
    }

    #[test]
    fn override_wins_over_file() {
        let c = parse_config("N_s = 5", "t", &["N_s=3".into()]).unwrap();
        assert_eq!(c.n_scenarios, 3);
    }

    #[test]
    fn unknown_key_names_the_field() {
        let e = parse_config("N_s = 5\nbogus = 1\n", "cfg.toml", &[]).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn syntax_error_names_the_line() {
        let e = parse_config("N_s = 5\nrho = = 2\n", "cfg.toml", &[]).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn wrong_type_is_rejected() {
        assert!(parse_config("N = \"two hundred\"", "t", &[]).is_err());
        assert!(matches!(
            parse_config("", "t", &["N_s".into()]),
            Err(ConfigError::Override(_))
        ));
    }

    #[test]
    fn semantic_validation_runs() {
        assert!(matches!(
            parse_config("q_min = 1", "t", &[]),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn echo_round_trips() {
        let c = ScenarioConfig {
            n_scenarios: 7,
            a_observer: 7.0,
            ..Default::default()
        };
        assert_eq!(parse_config(&to_config_text(&c), "echo", &[]).unwrap(), c);
    }
}
