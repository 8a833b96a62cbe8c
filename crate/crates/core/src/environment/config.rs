use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationKind {
    Rural,
    Urban,
}

impl StationKind {
    /// Inclusive transmit power range in dBm.
    pub fn power_bounds(self) -> (i32, i32) {
        match self {
            StationKind::Rural => (43, 46),
            StationKind::Urban => (30, 37),
        }
    }

    pub fn capacity(self) -> usize {
        match self {
            StationKind::Rural => 50,
            StationKind::Urban => 30,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StationKind::Rural => "rural",
            StationKind::Urban => "urban",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficLevel {
    Low,
    Normal,
    High,
}

impl TrafficLevel {
    pub const ALL: [TrafficLevel; 3] = [TrafficLevel::Low, TrafficLevel::Normal, TrafficLevel::High];

    pub fn name(self) -> &'static str {
        match self {
            TrafficLevel::Low => "low",
            TrafficLevel::Normal => "normal",
            TrafficLevel::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Some(TrafficLevel::Low),
            "normal" => Some(TrafficLevel::Normal),
            "high" => Some(TrafficLevel::High),
            _ => None,
        }
    }

    pub fn default_params(self) -> TrafficParams {
        let arrival_rate = match self {
            TrafficLevel::Low => 2.0,
            TrafficLevel::Normal => 5.0,
            TrafficLevel::High => 9.0,
        };
        TrafficParams {
            arrival_rate,
            departure_prob: 0.1,
        }
    }
}

impl std::fmt::Display for TrafficLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficParams {
    /// Expected new users per step, system-wide.
    pub arrival_rate: f64,
    /// Per-user, per-step departure probability.
    pub departure_prob: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficTable {
    pub low: Option<TrafficParams>,
    pub normal: Option<TrafficParams>,
    pub high: Option<TrafficParams>,
}

/// How new arrivals pick a station.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalRouting {
    /// Each arrival goes to the station with the lowest load fraction (ties to
    /// rural, then the lowest index) and is dropped only if that station is full.
    #[default]
    LeastLoaded,
    /// Each arrival has a home station drawn from the stations' `arrival_share`
    /// and is dropped if that station is full.
    HomeStation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSpec {
    pub id: String,
    pub kind: StationKind,
    /// Relative share of arrivals homed at this station (home-station routing).
    #[serde(default = "StationSpec::default_share")]
    pub arrival_share: f64,
}

impl StationSpec {
    fn default_share() -> f64 {
        1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub serve: f64,
    pub drop: f64,
    pub energy: f64,
    pub handoff: f64,
    /// Penalty for a handoff issued with no attached users.
    pub wasted: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            serve: 1.0,
            drop: 0.5,
            energy: 0.2,
            handoff: 0.3,
            wasted: 0.1,
        }
    }
}

/// Half-widths of the per-step uniform perturbation applied to every user.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    pub signal_db: f64,
    pub snr_db: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation {
            signal_db: 2.0,
            snr_db: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub stations: Vec<StationSpec>,
    pub traffic_level: TrafficLevel,
    pub traffic: TrafficTable,
    pub routing: ArrivalRouting,
    pub weights: RewardWeights,
    pub perturbation: Perturbation,
    pub episode_length: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            stations: vec![
                StationSpec {
                    id: "rural".into(),
                    kind: StationKind::Rural,
                    arrival_share: 0.4,
                },
                StationSpec {
                    id: "urban".into(),
                    kind: StationKind::Urban,
                    arrival_share: 0.6,
                },
            ],
            traffic_level: TrafficLevel::Normal,
            traffic: TrafficTable::default(),
            routing: ArrivalRouting::default(),
            weights: RewardWeights::default(),
            perturbation: Perturbation::default(),
            episode_length: 200,
        }
    }
}

impl ScenarioConfig {
    pub fn with_traffic(mut self, level: TrafficLevel) -> Self {
        self.traffic_level = level;
        self
    }

    pub fn traffic_params(&self) -> TrafficParams {
        let table = match self.traffic_level {
            TrafficLevel::Low => self.traffic.low,
            TrafficLevel::Normal => self.traffic.normal,
            TrafficLevel::High => self.traffic.high,
        };
        table.unwrap_or_else(|| self.traffic_level.default_params())
    }

    pub fn validate(&self) -> Result<()> {
        if self.stations.is_empty() {
            return Err(Error::Config("station list is empty".into()));
        }
        let mut ids: Vec<&str> = self.stations.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("station ids must be unique".into()));
        }
        if let Some(s) = self
            .stations
            .iter()
            .find(|s| !(s.arrival_share.is_finite() && s.arrival_share >= 0.0))
        {
            return Err(Error::Config(format!(
                "station {}: arrival_share must be a non-negative number",
                s.id
            )));
        }
        if self.routing == ArrivalRouting::HomeStation
            && self.stations.iter().map(|s| s.arrival_share).sum::<f64>() <= 0.0
        {
            return Err(Error::Config("arrival shares sum to zero".into()));
        }
        if self.episode_length == 0 {
            return Err(Error::Config("episode_length must be positive".into()));
        }
        for level in TrafficLevel::ALL {
            let p = self.clone().with_traffic(level).traffic_params();
            if !(p.arrival_rate.is_finite() && p.arrival_rate >= 0.0) {
                return Err(Error::Config(format!("{level}: arrival_rate must be >= 0")));
            }
            if !(p.departure_prob > 0.0 && p.departure_prob < 1.0) {
                return Err(Error::Config(format!(
                    "{level}: departure_prob must lie in (0, 1)"
                )));
            }
        }
        let w = &self.weights;
        if [w.serve, w.drop, w.energy, w.handoff, w.wasted]
            .iter()
            .any(|x| !x.is_finite())
        {
            return Err(Error::Config("reward weights must be finite".into()));
        }
        let p = &self.perturbation;
        if !(p.signal_db.is_finite() && p.signal_db >= 0.0 && p.snr_db.is_finite() && p.snr_db >= 0.0)
        {
            return Err(Error::Config("perturbation bounds must be >= 0".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config = Self::from_toml_str(&text).map_err(|e| Error::parse(path, e))?;
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_bounds() {
        assert_eq!(StationKind::Rural.power_bounds(), (43, 46));
        assert_eq!(StationKind::Rural.capacity(), 50);
        assert_eq!(StationKind::Urban.power_bounds(), (30, 37));
        assert_eq!(StationKind::Urban.capacity(), 30);
    }

    #[test]
    fn traffic_rates_are_ordered() {
        let rate = |l: TrafficLevel| l.default_params().arrival_rate;
        assert!(rate(TrafficLevel::Low) < rate(TrafficLevel::Normal));
        assert!(rate(TrafficLevel::Normal) < rate(TrafficLevel::High));
    }

    #[test]
    fn empty_station_list_is_rejected() {
        let config = ScenarioConfig {
            stations: vec![],
            ..Default::default()
        };
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn parses_partial_toml() {
        let config = ScenarioConfig::from_toml_str(
            r#"
            traffic_level = "high"
            episode_length = 50
            [weights]
            drop = 1.0
            [traffic.high]
            arrival_rate = 12.0
            departure_prob = 0.2
            "#,
        )
        .unwrap();
        assert_eq!(config.traffic_level, TrafficLevel::High);
        assert_eq!(config.stations.len(), 2);
        assert_eq!(config.weights.drop, 1.0);
        assert_eq!(config.weights.serve, 1.0);
        assert_eq!(config.traffic_params().arrival_rate, 12.0);
        config.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ScenarioConfig::from_toml_str("bogus = 1").is_err());
    }
}
