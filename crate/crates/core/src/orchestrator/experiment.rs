use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::json;

use super::plan::Plan;
use super::results::{MetricSummary, ResultRow, ResultTable};
use super::{BatchSchedule, Configuration, Phase, RunEvent, RunMetrics, Runner, RunnerSetup};
use crate::advisor::{AdvisorBackend, CompletionTransport};
use crate::agent::QTable;
use crate::environment::TrafficLevel;
use crate::error::{Error, Result};

#[derive(Clone, Default)]
pub struct ExperimentContext {
    /// Overrides the HTTP transport for remote backends (tests, proxies).
    pub transport: Option<Arc<dyn CompletionTransport>>,
    /// Collect test-phase step events and all delayed-reward events.
    pub record_events: bool,
    /// Worker threads; `None` uses rayon's default.
    pub parallelism: Option<usize>,
}

/// One (configuration, traffic, seed) cell after training and testing.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub configuration: Configuration,
    pub traffic: TrafficLevel,
    pub seed: u64,
    /// Test-phase metrics only.
    pub metrics: RunMetrics,
    pub q_tables: Vec<QTable>,
    pub events: Vec<String>,
}

impl CellResult {
    pub fn row(&self) -> ResultRow {
        ResultRow {
            configuration: self.configuration,
            traffic: self.traffic,
            seed: self.seed,
            system: MetricSummary::system(&self.metrics),
            agents: self.metrics.agents.iter().map(MetricSummary::agent).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub table: ResultTable,
    pub cells: Vec<CellResult>,
}

impl ExperimentOutput {
    pub fn events(&self) -> impl Iterator<Item = &str> {
        self.cells.iter().flat_map(|c| c.events.iter().map(String::as_str))
    }
}

struct Backends {
    advisor: Arc<AdvisorBackend>,
    evaluator: Arc<AdvisorBackend>,
}

/// Runs every cell of `plan`. Cells run in parallel; output keeps plan order.
pub fn run_experiment(plan: &Plan, ctx: &ExperimentContext) -> Result<ExperimentOutput> {
    plan.validate()?;
    let needs_advisor = plan.configurations.iter().any(|c| c.uses_advisor());
    let needs_evaluator = plan.configurations.iter().any(|c| c.uses_alignment());
    let backends = if needs_advisor {
        let advisor = Arc::new(plan.backend.build(ctx.transport.clone())?);
        let evaluator = if needs_evaluator && plan.evaluator.is_some() {
            Arc::new(plan.evaluator_spec().build(ctx.transport.clone())?)
        } else {
            advisor.clone()
        };
        Some(Backends { advisor, evaluator })
    } else {
        None
    };

    let cells = plan.cells();
    let run_all = || -> Result<Vec<CellResult>> {
        cells
            .par_iter()
            .map(|&(c, t, s)| run_cell(plan, backends.as_ref(), ctx.record_events, c, t, s))
            .collect()
    };
    let results = match ctx.parallelism {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run_all)?,
        None => run_all()?,
    };

    let table = ResultTable {
        agents: plan.scenario.stations.iter().map(|s| s.id.clone()).collect(),
        rows: results.iter().map(CellResult::row).collect(),
    };
    Ok(ExperimentOutput { table, cells: results })
}

fn run_cell(
    plan: &Plan,
    backends: Option<&Backends>,
    record_events: bool,
    configuration: Configuration,
    traffic: TrafficLevel,
    seed: u64,
) -> Result<CellResult> {
    let mut runner = Runner::new(RunnerSetup {
        configuration,
        scenario: plan.scenario.clone().with_traffic(traffic),
        learning: plan.learning,
        schedule: BatchSchedule {
            interval_steps: plan.batch_interval,
        },
        delayed: plan.delayed,
        advisor: backends.filter(|_| configuration.uses_advisor()).map(|b| b.advisor.clone()),
        evaluator: backends.filter(|_| configuration.uses_alignment()).map(|b| b.evaluator.clone()),
        seed,
    })?;
    let mut events = Vec::new();
    let mut observer = |event: RunEvent<'_>| {
        if record_events {
            if let Some(line) = event_json(configuration, traffic, seed, &event) {
                events.push(line);
            }
        }
    };
    for _ in 0..plan.train_episodes {
        runner.run_episode_observed(&mut observer)?;
    }
    runner.begin_testing();
    let mut metrics = RunMetrics::new(runner.agents().len());
    for _ in 0..plan.test_episodes {
        metrics.merge(&runner.run_episode_observed(&mut observer)?);
    }
    tracing::debug!(%configuration, %traffic, seed, drops = metrics.dropped_requests_total, "cell finished");
    Ok(CellResult {
        configuration,
        traffic,
        seed,
        metrics,
        q_tables: runner.agents().iter().map(|a| a.q.clone()).collect(),
        events,
    })
}

fn event_json(configuration: Configuration, traffic: TrafficLevel, seed: u64, event: &RunEvent<'_>) -> Option<String> {
    let value = match event {
        RunEvent::Step(s) if s.phase == Phase::Test => json!({
            "kind": "step",
            "config": configuration.name(),
            "traffic": traffic.name(),
            "seed": seed,
            "phase": s.phase.name(),
            "episode": s.episode,
            "step": s.step,
            "dropped_requests": s.outcome.dropped_requests,
            "dropped_admissions": s.outcome.dropped_admissions,
            "dropped_handoffs": s.outcome.dropped_handoffs,
            "failure": s.outcome.is_failure_step,
            "actions": s.decisions.iter().map(|d| d.action.code()).collect::<Vec<_>>(),
            "adopted": s.decisions.iter().map(|d| d.adopted).collect::<Vec<_>>(),
            "suggestions": s.suggestions.iter().map(|a| a.map(|a| a.code())).collect::<Vec<_>>(),
        }),
        RunEvent::Step(_) => return None,
        RunEvent::Delayed(d) => json!({
            "kind": "delayed",
            "config": configuration.name(),
            "traffic": traffic.name(),
            "seed": seed,
            "phase": d.phase.name(),
            "episode": d.episode,
            "agent": d.agent,
            "value": d.reward.value,
            "evaluator": d.evaluator,
            "flagged": d.reward.flagged,
        }),
    };
    Some(value.to_string())
}

/// Writes `results.csv`, `results.jsonl` and, when events were recorded,
/// `events.jsonl` into `out_dir`.
pub fn write_outputs(out_dir: &Path, output: &ExperimentOutput, with_events: bool) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    output.table.write_csv(&out_dir.join("results.csv"))?;

    let mut jsonl = String::new();
    for row in &output.table.rows {
        let mut value = serde_json::to_value(row).expect("rows serialize");
        value["agents"] = output
            .table
            .agents
            .iter()
            .zip(&row.agents)
            .map(|(id, m)| (id.clone(), serde_json::to_value(m).expect("summary serializes")))
            .collect::<serde_json::Map<_, _>>()
            .into();
        jsonl.push_str(&value.to_string());
        jsonl.push('\n');
    }
    let path = out_dir.join("results.jsonl");
    std::fs::write(&path, jsonl).map_err(|e| Error::io(&path, e))?;

    if with_events {
        let mut text = String::new();
        for line in output.events() {
            text.push_str(line);
            text.push('\n');
        }
        let path = out_dir.join("events.jsonl");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
