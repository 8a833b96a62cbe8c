use std::path::Path;

use serde::Serialize;

use super::metrics::{AgentMetrics, RunMetrics};
use super::Configuration;
use crate::environment::TrafficLevel;
use crate::error::{Error, Result};

/// Flat per-cell numbers as they appear in `results.csv`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MetricSummary {
    pub dropped_requests: u64,
    pub dropped_handoffs: u64,
    pub dropped_admissions: u64,
    pub failure_steps: u64,
    pub llm_queries: u64,
    pub llm_disagreements: u64,
    pub llm_adoptions: u64,
    pub llm_translation_failures: u64,
    pub llm_errors: u64,
    pub advisor_calls: u64,
    pub delayed_rewards: u64,
    pub usage_rate: f64,
    pub mean_return: f64,
}

pub const FIELDS: [&str; 13] = [
    "dropped_requests",
    "dropped_handoffs",
    "dropped_admissions",
    "failure_steps",
    "llm_queries",
    "llm_disagreements",
    "llm_adoptions",
    "llm_translation_failures",
    "llm_errors",
    "advisor_calls",
    "delayed_rewards",
    "usage_rate",
    "mean_return",
];

impl MetricSummary {
    pub fn system(m: &RunMetrics) -> Self {
        MetricSummary {
            dropped_requests: m.dropped_requests_total,
            dropped_handoffs: m.dropped_handoffs,
            dropped_admissions: m.dropped_admissions,
            failure_steps: m.failure_steps,
            llm_queries: m.llm_queries(),
            llm_disagreements: m.llm_disagreements(),
            llm_adoptions: m.llm_adoptions(),
            llm_translation_failures: m.llm_translation_failures(),
            llm_errors: m.llm_errors(),
            advisor_calls: m.advisor_calls(),
            delayed_rewards: m.delayed_rewards(),
            usage_rate: m.usage_rate(),
            mean_return: m.mean_return(),
        }
    }

    pub fn agent(m: &AgentMetrics) -> Self {
        MetricSummary {
            dropped_requests: m.dropped_requests,
            dropped_handoffs: m.dropped_handoffs,
            dropped_admissions: m.dropped_admissions,
            failure_steps: m.failure_steps,
            llm_queries: m.llm_queries,
            llm_disagreements: m.llm_disagreements,
            llm_adoptions: m.llm_adoptions,
            llm_translation_failures: m.llm_translation_failures,
            llm_errors: m.llm_errors,
            advisor_calls: m.advisor_calls,
            delayed_rewards: m.delayed_rewards,
            usage_rate: m.usage_rate(),
            mean_return: m.mean_return(),
        }
    }

    fn values(&self) -> [String; 13] {
        [
            self.dropped_requests.to_string(),
            self.dropped_handoffs.to_string(),
            self.dropped_admissions.to_string(),
            self.failure_steps.to_string(),
            self.llm_queries.to_string(),
            self.llm_disagreements.to_string(),
            self.llm_adoptions.to_string(),
            self.llm_translation_failures.to_string(),
            self.llm_errors.to_string(),
            self.advisor_calls.to_string(),
            self.delayed_rewards.to_string(),
            self.usage_rate.to_string(),
            self.mean_return.to_string(),
        ]
    }

    fn from_values(v: &[&str]) -> std::result::Result<Self, String> {
        let int = |i: usize| v[i].parse::<u64>().map_err(|e| format!("{}: {e}", FIELDS[i]));
        let real = |i: usize| v[i].parse::<f64>().map_err(|e| format!("{}: {e}", FIELDS[i]));
        Ok(MetricSummary {
            dropped_requests: int(0)?,
            dropped_handoffs: int(1)?,
            dropped_admissions: int(2)?,
            failure_steps: int(3)?,
            llm_queries: int(4)?,
            llm_disagreements: int(5)?,
            llm_adoptions: int(6)?,
            llm_translation_failures: int(7)?,
            llm_errors: int(8)?,
            advisor_calls: int(9)?,
            delayed_rewards: int(10)?,
            usage_rate: real(11)?,
            mean_return: real(12)?,
        })
    }

    /// Looks up a field by its column name.
    pub fn field(&self, name: &str) -> Option<f64> {
        let i = FIELDS.iter().position(|f| *f == name)?;
        self.values()[i].parse().ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub configuration: Configuration,
    pub traffic: TrafficLevel,
    pub seed: u64,
    pub system: MetricSummary,
    /// Parallel to [`ResultTable::agents`].
    pub agents: Vec<MetricSummary>,
}

/// Contents of `results.csv`: one row per (configuration, traffic, seed),
/// system-wide columns first, then `<agent>.<field>` columns per station.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub agents: Vec<String>,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["config", "traffic", "seed"].iter().map(|s| s.to_string()).collect();
        h.extend(FIELDS.iter().map(|f| f.to_string()));
        for agent in &self.agents {
            h.extend(FIELDS.iter().map(|f| format!("{agent}.{f}")));
        }
        h
    }

    pub fn to_csv_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header()).expect("in-memory write");
        for row in &self.rows {
            let mut record = vec![row.configuration.name().to_string(), row.traffic.name().to_string(), row.seed.to_string()];
            record.extend(row.system.values());
            for a in &row.agents {
                record.extend(a.values());
            }
            w.write_record(&record).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_bytes(&bytes).map_err(|e| Error::parse(path, e))
    }

    pub fn from_csv_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut reader = csv::Reader::from_reader(bytes);
        let header: Vec<String> = reader.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
        let fixed = 3 + FIELDS.len();
        if header.len() < fixed || header[..3] != ["config", "traffic", "seed"] || header[3..fixed] != FIELDS {
            return Err("unexpected results header".into());
        }
        let per_agent = &header[fixed..];
        if per_agent.len() % FIELDS.len() != 0 {
            return Err("per-agent columns are incomplete".into());
        }
        let mut agents = Vec::new();
        for chunk in per_agent.chunks(FIELDS.len()) {
            let (agent, _) = chunk[0].split_once('.').ok_or("malformed agent column")?;
            for (col, field) in chunk.iter().zip(FIELDS) {
                if *col != format!("{agent}.{field}") {
                    return Err(format!("unexpected column {col:?}"));
                }
            }
            agents.push(agent.to_string());
        }
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| e.to_string())?;
            let v: Vec<&str> = record.iter().collect();
            let at = |what: &str| format!("row {}: invalid {what}", line + 2);
            let configuration = Configuration::parse(v[0]).ok_or_else(|| at("config"))?;
            let traffic = TrafficLevel::parse(v[1]).ok_or_else(|| at("traffic"))?;
            let seed = v[2].parse().map_err(|_| at("seed"))?;
            let system = MetricSummary::from_values(&v[3..fixed]).map_err(|e| format!("row {}: {e}", line + 2))?;
            let agents_vals = v[fixed..]
                .chunks(FIELDS.len())
                .map(MetricSummary::from_values)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| format!("row {}: {e}", line + 2))?;
            rows.push(ResultRow {
                configuration,
                traffic,
                seed,
                system,
                agents: agents_vals,
            });
        }
        Ok(ResultTable { agents, rows })
    }

    /// Rows for one (configuration, traffic) cell, in file order.
    pub fn cell(&self, configuration: Configuration, traffic: TrafficLevel) -> impl Iterator<Item = &ResultRow> {
        self.rows
            .iter()
            .filter(move |r| r.configuration == configuration && r.traffic == traffic)
    }

    /// Configurations present, in canonical order.
    pub fn configurations(&self) -> Vec<Configuration> {
        Configuration::ALL
            .into_iter()
            .filter(|c| self.rows.iter().any(|r| r.configuration == *c))
            .collect()
    }

    pub fn traffic_levels(&self) -> Vec<TrafficLevel> {
        TrafficLevel::ALL
            .into_iter()
            .filter(|t| self.rows.iter().any(|r| r.traffic == *t))
            .collect()
    }

    /// Per-agent summary, or the system summary for `agent = None`.
    pub fn summary<'a>(&self, row: &'a ResultRow, agent: Option<usize>) -> &'a MetricSummary {
        match agent {
            Some(i) => &row.agents[i],
            None => &row.system,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_summary() -> impl Strategy<Value = MetricSummary> {
        (proptest::collection::vec(0u64..100_000, 11), 0.0f64..=1.0, -500.0f64..500.0).prop_map(|(ints, usage, ret)| {
            MetricSummary {
                dropped_requests: ints[0],
                dropped_handoffs: ints[1],
                dropped_admissions: ints[2],
                failure_steps: ints[3],
                llm_queries: ints[4],
                llm_disagreements: ints[5],
                llm_adoptions: ints[6],
                llm_translation_failures: ints[7],
                llm_errors: ints[8],
                advisor_calls: ints[9],
                delayed_rewards: ints[10],
                usage_rate: usage,
                mean_return: ret,
            }
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip(rows in proptest::collection::vec((0usize..3, 0usize..3, any::<u64>(), arb_summary(), arb_summary(), arb_summary()), 0..12)) {
            let table = ResultTable {
                agents: vec!["rural".into(), "urban".into()],
                rows: rows.into_iter().map(|(c, t, seed, s, a, b)| ResultRow {
                    configuration: Configuration::ALL[c],
                    traffic: TrafficLevel::ALL[t],
                    seed,
                    system: s,
                    agents: vec![a, b],
                }).collect(),
            };
            let bytes = table.to_csv_bytes();
            let back = ResultTable::from_csv_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &table);
            prop_assert_eq!(back.to_csv_bytes(), bytes);
        }
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(ResultTable::from_csv_bytes(b"a,b,c\n1,2,3\n").is_err());
    }
}
