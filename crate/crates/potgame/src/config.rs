//! Run configuration files.
//!
//! A config file is TOML with a required `[scenario]` table holding every scenario field
//! and optional `[monte_carlo]` and `[bench]` tables. Unknown keys are rejected.

use std::path::Path;

use potgame_core::simulation::{presets, MonteCarloParams, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchParams {
    /// Samples per intent mode for each column of the timing table.
    pub samples_per_mode: Vec<usize>,
    /// Timed solves per cell; the median is reported.
    pub repetitions: usize,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            samples_per_mode: vec![1, 2, 3, 4, 5, 6],
            repetitions: 5,
        }
    }
}

impl BenchParams {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.samples_per_mode.is_empty() || self.samples_per_mode.contains(&0) {
            return Err(CliError::config("bench.samples_per_mode", "need at least one entry, all >= 1"));
        }
        if self.repetitions < 5 {
            return Err(CliError::config("bench.repetitions", "must be >= 5"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloParams,
    #[serde(default)]
    pub bench: BenchParams,
}

impl RunConfig {
    pub fn new(scenario: ScenarioConfig) -> Self {
        RunConfig {
            scenario,
            monte_carlo: MonteCarloParams::default(),
            bench: BenchParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.scenario.validate().map_err(|e| e.within("scenario"))?;
        self.monte_carlo.validate().map_err(|e| match e {
            potgame_core::Error::Config { field, reason } if !field.starts_with("monte_carlo") => {
                potgame_core::Error::Config { field, reason }.within("monte_carlo")
            }
            other => other,
        })?;
        self.bench.validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config types serialize to TOML")
    }
}

/// Names of the configs shipped under `configs/`.
pub const SHIPPED: [&str; 4] = ["merging", "intersection", "overtaking", "toy"];

/// The config shipped as `configs/<name>.toml`.
pub fn shipped(name: &str) -> Option<RunConfig> {
    let cfg = match name {
        "merging" => RunConfig::new(presets::merging([0.5, 0.5], 1)),
        "intersection" => RunConfig::new(presets::intersection([0.5, 0.5], [0.5, 0.5], 1)),
        "overtaking" => RunConfig::new(presets::overtaking(0.5)),
        "toy" => {
            let mut scenario = presets::merging([0.5, 0.5], 1);
            scenario.name = "toy".into();
            scenario.horizon = 10;
            let mut cfg = RunConfig::new(scenario);
            cfg.monte_carlo.conditions = 2;
            cfg.monte_carlo.draws = 1;
            cfg.monte_carlo.closed_loop.steps = 5;
            cfg.monte_carlo.closed_loop.horizon = 10;
            cfg.bench = BenchParams {
                samples_per_mode: vec![1, 2],
                repetitions: 5,
            };
            cfg
        }
        _ => return None,
    };
    Some(cfg)
}

/// Parses and validates a config. Errors carry the dotted path of the offending field.
pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let de = toml::Deserializer::new(text);
    let mut unknown = Vec::new();
    let mut track = |path: serde_ignored::Path| unknown.push(path.to_string());
    let ignoring = serde_ignored::Deserializer::new(de, &mut track);
    let cfg: RunConfig = serde_path_to_error::deserialize(ignoring).map_err(|e| {
        let field = e.path().to_string();
        CliError::config(if field == "." { "<root>".into() } else { field }, e.into_inner().message().trim().to_string())
    })?;
    if let Some(field) = unknown.into_iter().next() {
        return Err(CliError::config(field, "unknown field"));
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    if !path.exists() {
        return Err(CliError::config("--config", format!("{} does not exist", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text)
}
