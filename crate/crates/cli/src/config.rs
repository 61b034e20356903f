//! Backtest configuration: TOML file or earlier manifest, then flags.

use std::path::Path;

use clap::{Args, ValueEnum};
use regime_var::market::Period;
use regime_var::BacktestConfig;

use crate::{AccountingArg, CliError, CliResult};

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum CalendarArg {
    Weekly,
    Monthly,
}

/// Flags that override individual config keys.
#[derive(Args, Debug, Default, Clone)]
pub struct BacktestOverrides {
    /// Comma separated model ids, e.g. classic,hmm,lstm-hmm-reg1.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Training window in days.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub paths: Option<usize>,
    /// VaR levels, e.g. 0.01,0.05.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Simulated days per evaluation period.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub calendar: Option<CalendarArg>,
    #[arg(long)]
    pub refit_stride: Option<usize>,
    #[arg(long, value_enum)]
    pub accounting: Option<AccountingArg>,
    /// Number of regimes.
    #[arg(long)]
    pub regimes: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Network training restarts per fit.
    #[arg(long)]
    pub attempts: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub lookahead: Option<usize>,
    #[arg(long)]
    pub hmm_attempts: Option<usize>,
}

impl BacktestOverrides {
    pub fn apply(&self, c: &mut BacktestConfig) {
        if let Some(v) = &self.models {
            c.models = v.clone();
        }
        if let Some(v) = self.window {
            c.window_days = v;
        }
        if let Some(v) = self.paths {
            c.paths = v;
        }
        if let Some(v) = &self.levels {
            c.levels = v.clone();
        }
        if let Some(v) = self.horizon {
            c.horizon_days = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.calendar {
            c.calendar = match v {
                CalendarArg::Weekly => Period::Weekly,
                CalendarArg::Monthly => Period::Monthly,
            };
        }
        if let Some(v) = self.refit_stride {
            c.refit_stride = v;
        }
        if let Some(v) = self.accounting {
            c.accounting = v.into();
        }
        if let Some(v) = self.regimes {
            c.fit.regimes = v;
        }
        if let Some(v) = self.epochs {
            c.fit.train.epochs = v;
        }
        if let Some(v) = self.attempts {
            c.fit.train.attempts = v;
        }
        if let Some(v) = self.learning_rate {
            c.fit.train.learning_rate = v;
        }
        if let Some(v) = self.weight_decay {
            c.fit.train.weight_decay = v;
        }
        if let Some(v) = self.lookahead {
            c.fit.train.lookahead = v;
        }
        if let Some(v) = self.hmm_attempts {
            c.fit.hmm_attempts = v;
        }
    }
}

/// Reads `path` (TOML, or the JSON manifest of an earlier run), applies the
/// flag overrides and validates the result.
pub fn load_backtest_config(path: Option<&Path>, overrides: &BacktestOverrides) -> CliResult<BacktestConfig> {
    let mut config = match path {
        None => BacktestConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
            parse_config(&text, p)?
        }
    };
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn parse_config(text: &str, path: &Path) -> CliResult<BacktestConfig> {
    let bad = |e: &dyn std::fmt::Display| CliError::config(format!("{}: {e}", path.display()));
    if path.extension().is_some_and(|e| e == "json") {
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(&e))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        serde_json::from_value(value).map_err(|e| bad(&e))
    } else {
        toml::from_str(text).map_err(|e| bad(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_sections_and_overrides() {
        let text = r#"
            window_days = 1000
            models = ["classic", "lstm-hmm-reg1"]
            levels = [0.01, 0.05, 0.1]
            calendar = "monthly"

            [fit]
            regimes = 3

            [fit.train]
            epochs = 50
        "#;
        let mut c = parse_config(text, Path::new("run.toml")).unwrap();
        assert_eq!(c.window_days, 1000);
        assert_eq!(c.calendar, Period::Monthly);
        assert_eq!(c.fit.regimes, 3);
        assert_eq!(c.fit.train.epochs, 50);
        assert_eq!(c.fit.train.attempts, 5);
        assert_eq!(c.paths, 100_000);

        let o = BacktestOverrides {
            paths: Some(500),
            epochs: Some(7),
            ..BacktestOverrides::default()
        };
        o.apply(&mut c);
        assert_eq!((c.paths, c.fit.train.epochs, c.window_days), (500, 7, 1000));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(parse_config("paths = \"many\"", Path::new("a.toml")).is_err());
        assert!(parse_config("pathz = 10", Path::new("a.toml")).is_err());
        assert!(parse_config("[fit.train]\nepoch = 3", Path::new("a.toml")).is_err());
        assert!(parse_config("{\"config\": {\"paths\": -1}}", Path::new("m.json")).is_err());
        let c = parse_config("{\"config\": {\"paths\": 10}}", Path::new("m.json")).unwrap();
        assert_eq!(c.paths, 10);
    }
}
