use std::sync::Arc;

use cellmarl::advisor::{
    AdvisorBackend, BackendSpec, CompletionRequest, CompletionTransport, RemoteBackend, RemoteSettings, ReplayLog,
    TransportError,
};
use cellmarl::agent::LearningParams;
use cellmarl::environment::{ScenarioConfig, TrafficLevel};
use cellmarl::orchestrator::{
    run_experiment, BatchSchedule, Configuration, DelayedSettings, ExperimentContext, Plan, RunMetrics, Runner, RunnerSetup,
    SeedSpec,
};

struct Panicking;

impl CompletionTransport for Panicking {
    fn complete(&self, _: &CompletionRequest<'_>) -> Result<String, TransportError> {
        panic!("network used")
    }
}

struct Down;

impl CompletionTransport for Down {
    fn complete(&self, _: &CompletionRequest<'_>) -> Result<String, TransportError> {
        Err(TransportError::Failed("connection refused".into()))
    }
}

struct Canned(&'static str);

impl CompletionTransport for Canned {
    fn complete(&self, _: &CompletionRequest<'_>) -> Result<String, TransportError> {
        Ok(self.0.into())
    }
}

fn small_plan(backend: BackendSpec) -> Plan {
    let mut plan = Plan {
        configurations: vec![Configuration::GuidedMarl, Configuration::Aura],
        traffic_levels: vec![TrafficLevel::High],
        seeds: SeedSpec::Count(2),
        train_episodes: 2,
        test_episodes: 1,
        backend,
        ..Plan::default()
    };
    plan.scenario.episode_length = 40;
    plan
}

fn remote(transport: impl CompletionTransport + 'static) -> Arc<AdvisorBackend> {
    let settings = RemoteSettings {
        retry_backoff_ms: 0,
        ..RemoteSettings::default()
    };
    Arc::new(AdvisorBackend::Remote(RemoteBackend::new(Arc::new(transport), settings)))
}

fn run_aura(backend: Arc<AdvisorBackend>) -> RunMetrics {
    let mut scenario = ScenarioConfig::default().with_traffic(TrafficLevel::High);
    scenario.episode_length = 40;
    let mut runner = Runner::new(RunnerSetup {
        configuration: Configuration::Aura,
        scenario,
        learning: LearningParams::default(),
        schedule: BatchSchedule::default(),
        delayed: DelayedSettings::default(),
        advisor: Some(backend.clone()),
        evaluator: Some(backend),
        seed: 7,
    })
    .unwrap();
    let mut total = RunMetrics::default();
    for _ in 0..4 {
        total.merge(&runner.run_episode().unwrap());
    }
    total
}

#[test]
fn scripted_backend_never_touches_the_transport() {
    let ctx = ExperimentContext {
        transport: Some(Arc::new(Panicking)),
        ..ExperimentContext::default()
    };
    let out = run_experiment(&small_plan(BackendSpec::Scripted), &ctx).unwrap();
    assert_eq!(out.table.rows.len(), 4);
    assert!(out.table.rows.iter().all(|r| r.system.llm_queries > 0));
}

#[test]
fn replay_backend_never_touches_the_transport() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("replay.jsonl");
    ReplayLog::new().save(&path).unwrap();
    let ctx = ExperimentContext {
        transport: Some(Arc::new(Panicking)),
        ..ExperimentContext::default()
    };
    let mut plan = small_plan(BackendSpec::Replay { path });
    plan.evaluator = Some(BackendSpec::Scripted);
    let out = run_experiment(&plan, &ctx).unwrap();
    // every prompt misses the empty log, so agents act alone
    assert!(out.table.rows.iter().all(|r| r.system.llm_queries == 0 && r.system.llm_adoptions == 0));
}

#[test]
fn outage_degrades_to_agent_only_decisions() {
    let m = run_aura(remote(Down));
    assert_eq!(m.steps, 160);
    assert!(m.advisor_calls() > 0);
    assert_eq!(m.llm_errors(), m.advisor_calls());
    assert_eq!(m.llm_queries(), 0);
    assert_eq!(m.llm_adoptions(), 0);
    let flagged: u64 = m.agents.iter().map(|a| a.delayed_flagged).sum();
    assert!(flagged > 0);
    assert_eq!(flagged, m.delayed_rewards());
}

#[test]
fn unparseable_replies_count_as_translation_failures() {
    let m = run_aura(remote(Canned("no opinion today")));
    assert!(m.llm_translation_failures() > 0);
    assert_eq!(m.llm_translation_failures(), m.advisor_calls());
    assert_eq!(m.llm_adoptions(), 0);
}

#[test]
fn remote_suggestions_are_adopted() {
    let m = run_aura(remote(Canned("Recommended action: 4 (handoff).")));
    assert_eq!(m.llm_errors(), 0);
    assert!(m.llm_queries() > 0);
    assert!(m.llm_adoptions() > 0);
}
