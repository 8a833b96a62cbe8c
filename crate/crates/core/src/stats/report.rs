use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{stars, test_against_control, SampleGroups};
use crate::environment::TrafficLevel;
use crate::error::{Error, Result};
use crate::orchestrator::{Configuration, ResultTable};

/// Agent label used for the system-wide rows.
pub const SYSTEM_AGENT: &str = "system";

/// One pairwise comparison against the control, with the omnibus test repeated per row.
/// The metric is whichever field was passed to [`analyze`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub agent: String,
    pub traffic: TrafficLevel,
    #[serde(rename = "H")]
    pub h: f64,
    pub df: u32,
    pub p: f64,
    pub pair: String,
    pub z: f64,
    pub raw_p: f64,
    pub holm_p: f64,
    pub stars: String,
}

/// Kruskal–Wallis across configurations plus Dunn against `marl-only`, for the
/// system and each agent at every traffic level. Seeds are the samples.
pub fn analyze(table: &ResultTable, metric: &str) -> Result<Vec<StatsRow>> {
    let configurations = table.configurations();
    let control = Configuration::MarlOnly;
    if !configurations.contains(&control) {
        return Err(Error::Precondition("results contain no marl-only rows to compare against".into()));
    }
    if configurations.len() < 2 {
        return Err(Error::Precondition("need at least two configurations".into()));
    }
    let mut out = Vec::new();
    let subjects = std::iter::once(None).chain((0..table.agents.len()).map(Some));
    for agent in subjects {
        let agent_name = agent.map_or(SYSTEM_AGENT, |i| table.agents[i].as_str());
        for traffic in table.traffic_levels() {
            let mut groups = Vec::new();
            for &c in &configurations {
                let values = table
                    .cell(c, traffic)
                    .map(|row| {
                        table
                            .summary(row, agent)
                            .field(metric)
                            .ok_or_else(|| Error::Precondition(format!("unknown metric {metric:?}")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if values.is_empty() {
                    return Err(Error::MissingCell {
                        configuration: c.name().into(),
                        traffic: traffic.name().into(),
                    });
                }
                groups.push((c.name().to_string(), values));
            }
            let result = test_against_control(&SampleGroups::new(groups)?, control.name())?;
            for pair in &result.pairwise {
                out.push(StatsRow {
                    agent: agent_name.to_string(),
                    traffic,
                    h: result.h_statistic,
                    df: result.degrees_of_freedom,
                    p: result.p_value,
                    pair: pair.pair(),
                    z: pair.z,
                    raw_p: pair.raw_p,
                    holm_p: pair.adjusted_p,
                    stars: stars(pair.adjusted_p).to_string(),
                });
            }
        }
    }
    Ok(out)
}

pub fn write_stats_csv(path: &Path, rows: &[StatsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::parse(path, e))?;
    }
    if rows.is_empty() {
        w.write_record(["agent", "traffic", "H", "df", "p", "pair", "z", "raw_p", "holm_p", "stars"])
            .map_err(|e| Error::parse(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::parse(path, e))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_stats_csv(path: &Path) -> Result<Vec<StatsRow>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(bytes.as_slice())
        .deserialize()
        .collect::<std::result::Result<Vec<StatsRow>, _>>()
        .map_err(|e| Error::parse(path, e))
}
