use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Configuration;
use crate::advisor::BackendSpec;
use crate::agent::LearningParams;
use crate::environment::{ScenarioConfig, TrafficLevel};
use crate::error::{Error, Result};

/// Either `seeds = 20` (seeds 0..20) or an explicit list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::Count(n) => (0..*n).collect(),
            SeedSpec::List(list) => list.clone(),
        }
    }

    /// Parses `--seeds` values: `N` or `a,b,c`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if s.contains(',') {
            s.split(',')
                .map(|p| p.trim().parse().ok())
                .collect::<Option<Vec<u64>>>()
                .map(SeedSpec::List)
        } else {
            s.parse().ok().map(SeedSpec::Count)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayedSettings {
    /// Episodes between delayed-reward evaluations.
    pub interval_episodes: u32,
    /// Learning rate for delayed rewards; defaults to the agents' alpha.
    pub alpha: Option<f64>,
}

impl Default for DelayedSettings {
    fn default() -> Self {
        DelayedSettings {
            interval_episodes: 2,
            alpha: None,
        }
    }
}

/// An experiment: configurations x traffic levels x seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Plan {
    pub configurations: Vec<Configuration>,
    pub traffic_levels: Vec<TrafficLevel>,
    pub seeds: SeedSpec,
    pub train_episodes: u32,
    pub test_episodes: u32,
    pub batch_interval: u32,
    pub delayed: DelayedSettings,
    pub backend: BackendSpec,
    /// Alignment evaluator; defaults to `backend`.
    pub evaluator: Option<BackendSpec>,
    pub learning: LearningParams,
    pub scenario: ScenarioConfig,
}

impl Default for Plan {
    fn default() -> Self {
        Plan {
            configurations: Configuration::ALL.to_vec(),
            traffic_levels: TrafficLevel::ALL.to_vec(),
            seeds: SeedSpec::Count(20),
            train_episodes: 300,
            test_episodes: 50,
            batch_interval: 10,
            delayed: DelayedSettings::default(),
            backend: BackendSpec::Scripted,
            evaluator: None,
            learning: LearningParams::default(),
            scenario: ScenarioConfig::default(),
        }
    }
}

impl Plan {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Loads and validates a plan; replay paths resolve against the plan's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut plan = Self::from_toml_str(&text).map_err(|e| Error::parse(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for spec in std::iter::once(&mut plan.backend).chain(plan.evaluator.as_mut()) {
            if let BackendSpec::Replay { path } = spec {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        plan.validate()?;
        Ok(plan)
    }

    pub fn evaluator_spec(&self) -> &BackendSpec {
        self.evaluator.as_ref().unwrap_or(&self.backend)
    }

    pub fn validate(&self) -> Result<()> {
        if self.configurations.is_empty() {
            return Err(Error::Config("plan lists no configurations".into()));
        }
        if self.traffic_levels.is_empty() {
            return Err(Error::Config("plan lists no traffic levels".into()));
        }
        if self.seeds.seeds().is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.test_episodes == 0 {
            return Err(Error::Config("test_episodes must be positive".into()));
        }
        if self.batch_interval == 0 {
            return Err(Error::Config("batch_interval must be positive".into()));
        }
        if self.delayed.interval_episodes == 0 {
            return Err(Error::Config("delayed.interval_episodes must be positive".into()));
        }
        self.learning.validate()?;
        self.scenario.validate()
    }

    /// Cells in output order: configuration, then traffic, then seed.
    pub fn cells(&self) -> Vec<(Configuration, TrafficLevel, u64)> {
        let seeds = self.seeds.seeds();
        let mut cells = Vec::new();
        for &c in &self.configurations {
            for &t in &self.traffic_levels {
                for &s in &seeds {
                    cells.push((c, t, s));
                }
            }
        }
        cells
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let plan = Plan::default();
        assert_eq!(plan.train_episodes, 300);
        assert_eq!(plan.test_episodes, 50);
        assert_eq!(plan.batch_interval, 10);
        assert_eq!(plan.delayed.interval_episodes, 2);
        assert_eq!(plan.scenario.episode_length, 200);
        assert_eq!(plan.cells().len(), 3 * 3 * 20);
    }

    #[test]
    fn parses_plan_file() {
        let plan = Plan::from_toml_str(
            r#"
            configurations = ["marl-only", "aura"]
            traffic_levels = ["high"]
            seeds = [3, 7]
            train_episodes = 10
            test_episodes = 2
            [backend]
            kind = "replay"
            path = "log.jsonl"
            [learning]
            alpha = 0.2
            [scenario]
            episode_length = 50
            "#,
        )
        .unwrap();
        plan.validate().unwrap();
        assert_eq!(plan.cells(), vec![
            (Configuration::MarlOnly, TrafficLevel::High, 3),
            (Configuration::MarlOnly, TrafficLevel::High, 7),
            (Configuration::Aura, TrafficLevel::High, 3),
            (Configuration::Aura, TrafficLevel::High, 7),
        ]);
        assert_eq!(plan.learning.alpha, 0.2);
        assert_eq!(plan.learning.gamma, 0.9);
        assert_eq!(plan.scenario.episode_length, 50);
        assert_eq!(plan.evaluator_spec().name(), "replay");
    }

    #[test]
    fn seed_spec_forms() {
        assert_eq!(SeedSpec::parse("3").unwrap().seeds(), vec![0, 1, 2]);
        assert_eq!(SeedSpec::parse("4, 9").unwrap().seeds(), vec![4, 9]);
        assert!(SeedSpec::parse("x").is_none());
        let plan = Plan { seeds: SeedSpec::List(vec![]), ..Default::default() };
        assert!(plan.validate().is_err());
    }
}
