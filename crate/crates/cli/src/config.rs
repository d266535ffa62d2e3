//! Scenario configuration files.

use std::fs;
use std::path::Path;

use timebin_qkd::experiments::ScenarioConfig;

use crate::error::CliError;

/// Loads a TOML scenario; missing keys take the built-in defaults.
pub fn load(path: Option<&Path>) -> Result<ScenarioConfig, CliError> {
    let Some(path) = path else {
        return Ok(ScenarioConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.to_owned(),
        message: format!("cannot read: {e}"),
    })?;
    parse(&text).map_err(|message| CliError::Config {
        path: path.to_owned(),
        message,
    })
}

/// Parses TOML text. Errors name the line, column and offending key.
pub fn parse(text: &str) -> Result<ScenarioConfig, String> {
    toml::from_str(text).map_err(|e| match e.span() {
        Some(span) => {
            let (line, col) = line_col(text, span.start);
            format!("line {line}, column {col}: {}", e.message())
        }
        None => e.message().to_string(),
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

/// Renders the fully resolved configuration as TOML.
pub fn render(config: &ScenarioConfig) -> Result<String, CliError> {
    toml::to_string(config).map_err(|e| CliError::Internal(format!("cannot render config: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(parse("").unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn render_round_trips() {
        let mut c = ScenarioConfig::default();
        c.fiber.length_km = 37.5;
        c.apd_b = Some(timebin_qkd::detection::ApdParams {
            quantum_efficiency: 0.125_436_7,
            ..Default::default()
        });
        c.drift.phase_jitter_sigma_rad = 0.383_987_654_321;
        c.bob.coupler_in_split = Some(0.3);
        let text = render(&c).unwrap();
        assert_eq!(parse(&text).unwrap(), c);
        assert_eq!(parse(&render(&ScenarioConfig::default()).unwrap()).unwrap(), ScenarioConfig::default());
    }

    #[test]
    fn unknown_key_reports_location() {
        let err = parse("n_gates = 5\n\n[fiber]\nlength_km = 3\nlenght = 4\n").unwrap_err();
        assert!(err.contains("line 5"), "{err}");
        assert!(err.contains("lenght"), "{err}");
    }

    #[test]
    fn wrong_type_reports_field() {
        let err = parse("[apd]\nquantum_efficiency = \"high\"\n").unwrap_err();
        assert!(err.contains("line 2"), "{err}");
    }
}
