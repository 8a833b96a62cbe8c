use std::path::Path;

use clap::ValueEnum;

use crate::environment::TrafficLevel;
use crate::error::{Error, Result};
use crate::orchestrator::{Configuration, ResultRow, ResultTable};

/// Plot panels that can be exported from `results.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Dropped requests, mean and standard deviation over seeds.
    A,
    /// Advisor usage rate.
    D,
    /// System failure steps.
    E,
    All,
}

impl Figure {
    fn panels(self) -> &'static [Figure] {
        match self {
            Figure::All => &[Figure::A, Figure::D, Figure::E],
            Figure::A => &[Figure::A],
            Figure::D => &[Figure::D],
            Figure::E => &[Figure::E],
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Figure::A => "panel-a.csv",
            Figure::D => "panel-d.csv",
            Figure::E => "panel-e.csv",
            Figure::All => unreachable!("not a single panel"),
        }
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Rows of every (configuration, traffic) pair present in the table, failing
/// on any pair that has no rows.
fn cells(table: &ResultTable) -> Result<Vec<(Configuration, TrafficLevel, Vec<&ResultRow>)>> {
    let mut out = Vec::new();
    for c in table.configurations() {
        for t in table.traffic_levels() {
            let rows: Vec<&ResultRow> = table.cell(c, t).collect();
            if rows.is_empty() {
                return Err(Error::MissingCell {
                    configuration: c.name().into(),
                    traffic: t.name().into(),
                });
            }
            out.push((c, t, rows));
        }
    }
    Ok(out)
}

/// Renders one or more panels as `(file name, CSV bytes)`.
pub fn export_figure_data(table: &ResultTable, figure: Figure) -> Result<Vec<(&'static str, Vec<u8>)>> {
    let cells = cells(table)?;
    let mut files = Vec::new();
    for &panel in figure.panels() {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: &[&str] = match panel {
            Figure::A => &["config", "traffic", "seeds", "mean_dropped_requests", "sd_dropped_requests"],
            Figure::D => &["config", "traffic", "seeds", "mean_usage_rate"],
            _ => &["config", "traffic", "seeds", "failure_steps", "mean_failure_steps"],
        };
        w.write_record(header).expect("in-memory write");
        for (c, t, rows) in &cells {
            let mut record = vec![c.name().to_string(), t.name().to_string(), rows.len().to_string()];
            match panel {
                Figure::A => {
                    let drops: Vec<f64> = rows.iter().map(|r| r.system.dropped_requests as f64).collect();
                    let (mean, sd) = mean_sd(&drops);
                    record.extend([mean.to_string(), sd.to_string()]);
                }
                Figure::D => {
                    let usage: Vec<f64> = rows.iter().map(|r| r.system.usage_rate).collect();
                    record.push(mean_sd(&usage).0.to_string());
                }
                _ => {
                    let total: u64 = rows.iter().map(|r| r.system.failure_steps).sum();
                    record.extend([total.to_string(), (total as f64 / rows.len() as f64).to_string()]);
                }
            }
            w.write_record(&record).expect("in-memory write");
        }
        files.push((panel.file_name(), w.into_inner().expect("in-memory flush")));
    }
    Ok(files)
}

pub fn write_figure_data(out_dir: &Path, table: &ResultTable, figure: Figure) -> Result<()> {
    let files = export_figure_data(table, figure)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (name, bytes) in files {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::MetricSummary;

    fn table() -> ResultTable {
        let mut rows = Vec::new();
        for c in Configuration::ALL {
            for t in TrafficLevel::ALL {
                for seed in 0..2u64 {
                    let m = MetricSummary {
                        dropped_requests: 10 + seed * 2,
                        failure_steps: 3 + seed,
                        usage_rate: if c.uses_advisor() { 0.25 } else { 0.0 },
                        ..Default::default()
                    };
                    rows.push(ResultRow {
                        configuration: c,
                        traffic: t,
                        seed,
                        system: m,
                        agents: vec![],
                    });
                }
            }
        }
        ResultTable { agents: vec![], rows }
    }

    #[test]
    fn nine_rows_per_panel() {
        let files = export_figure_data(&table(), Figure::All).unwrap();
        assert_eq!(files.len(), 3);
        for (_, bytes) in &files {
            let text = String::from_utf8(bytes.clone()).unwrap();
            assert_eq!(text.lines().count(), 10);
        }
        let a = String::from_utf8(files[0].1.clone()).unwrap();
        assert!(a.contains("marl-only,low,2,11,1.4142135623730951"), "{a}");
        let d = String::from_utf8(files[1].1.clone()).unwrap();
        assert!(d.lines().filter(|l| l.starts_with("marl-only")).all(|l| l.ends_with(",0")));
        let e = String::from_utf8(files[2].1.clone()).unwrap();
        assert!(e.contains("aura,high,2,7,3.5"), "{e}");
    }

    #[test]
    fn missing_cell_is_named() {
        let mut t = table();
        t.rows.retain(|r| !(r.configuration == Configuration::Aura && r.traffic == TrafficLevel::High));
        match export_figure_data(&t, Figure::A) {
            Err(Error::MissingCell { configuration, traffic }) => {
                assert_eq!((configuration.as_str(), traffic.as_str()), ("aura", "high"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn export_is_reproducible() {
        let t = table();
        assert_eq!(export_figure_data(&t, Figure::All).unwrap(), export_figure_data(&t, Figure::All).unwrap());
    }
}
