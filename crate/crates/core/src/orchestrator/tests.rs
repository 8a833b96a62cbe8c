use std::sync::Arc;

use super::*;
use crate::advisor::{CompletionRequest, CompletionTransport, RemoteBackend, RemoteSettings, ScriptedRules, TransportError};
use crate::environment::TrafficLevel;

struct Fixed(&'static str);

impl CompletionTransport for Fixed {
    fn complete(&self, _: &CompletionRequest) -> std::result::Result<String, TransportError> {
        Ok(self.0.to_owned())
    }
}

fn scripted() -> Arc<AdvisorBackend> {
    Arc::new(AdvisorBackend::Scripted(ScriptedRules::default()))
}

fn fixed_evaluator(reply: &'static str) -> Arc<AdvisorBackend> {
    Arc::new(AdvisorBackend::Remote(RemoteBackend::new(Arc::new(Fixed(reply)), RemoteSettings::default())))
}

fn setup(configuration: Configuration) -> RunnerSetup {
    let mut scenario = ScenarioConfig::default().with_traffic(TrafficLevel::High);
    scenario.episode_length = 60;
    RunnerSetup {
        configuration,
        scenario,
        learning: LearningParams::default(),
        schedule: BatchSchedule::default(),
        delayed: DelayedSettings::default(),
        advisor: configuration.uses_advisor().then(scripted),
        evaluator: configuration.uses_alignment().then(scripted),
        seed: 11,
    }
}

#[test]
fn marl_only_never_consults() {
    let mut runner = Runner::new(setup(Configuration::MarlOnly)).unwrap();
    for _ in 0..3 {
        let m = runner.run_episode().unwrap();
        assert_eq!(m.llm_queries(), 0);
        assert_eq!(m.advisor_calls(), 0);
        assert_eq!(m.llm_adoptions(), 0);
    }
}

#[test]
fn mismatched_components_are_rejected() {
    let mut s = setup(Configuration::MarlOnly);
    s.advisor = Some(scripted());
    assert!(matches!(Runner::new(s), Err(Error::Config(_))));
    let mut s = setup(Configuration::GuidedMarl);
    s.advisor = None;
    assert!(matches!(Runner::new(s), Err(Error::Config(_))));
    let mut s = setup(Configuration::GuidedMarl);
    s.evaluator = Some(scripted());
    assert!(matches!(Runner::new(s), Err(Error::Config(_))));
    let mut s = setup(Configuration::Aura);
    s.evaluator = None;
    assert!(matches!(Runner::new(s), Err(Error::Config(_))));
}

#[test]
fn zero_delayed_reward_matches_guided() {
    let mut guided = Runner::new(setup(Configuration::GuidedMarl)).unwrap();
    let mut aura_setup = setup(Configuration::Aura);
    aura_setup.evaluator = Some(fixed_evaluator("0"));
    let mut aura = Runner::new(aura_setup).unwrap();
    for _ in 0..6 {
        let g = guided.run_episode().unwrap();
        let a = aura.run_episode().unwrap();
        assert_eq!(g.dropped_requests_total, a.dropped_requests_total);
    }
    for (g, a) in guided.agents().iter().zip(aura.agents()) {
        assert_eq!(g.q, a.q);
        assert_eq!(g.trust, a.trust);
    }
}

#[test]
fn runs_are_deterministic() {
    let run = || {
        let mut r = Runner::new(setup(Configuration::Aura)).unwrap();
        let metrics: Vec<RunMetrics> = (0..4).map(|_| r.run_episode().unwrap()).collect();
        let q: Vec<_> = r.agents().iter().map(|a| a.q.clone()).collect();
        (metrics, q)
    };
    assert_eq!(run(), run());
}

#[test]
fn suggestions_change_only_at_boundaries() {
    let mut runner = Runner::new(setup(Configuration::GuidedMarl)).unwrap();
    let mut previous: Option<Vec<Option<Action>>> = None;
    let mut observer = |event: RunEvent<'_>| {
        if let RunEvent::Step(s) = event {
            if let Some(prev) = &previous {
                if s.step % 10 != 0 {
                    assert_eq!(prev.as_slice(), s.suggestions, "step {}", s.step);
                }
            }
            previous = Some(s.suggestions.to_vec());
        }
    };
    runner.run_episode_observed(&mut observer).unwrap();
    let m = runner.run_episode().unwrap();
    assert_eq!(m.advisor_calls(), 2 * 6);
}

#[test]
fn usage_rate_is_a_fraction() {
    let mut runner = Runner::new(setup(Configuration::Aura)).unwrap();
    for _ in 0..4 {
        let m = runner.run_episode().unwrap();
        assert!((0.0..=1.0).contains(&m.usage_rate()));
        assert!(m.llm_adoptions() <= m.llm_disagreements());
        assert!(m.llm_disagreements() <= m.llm_queries());
    }
}

#[test]
fn delayed_rewards_follow_cadence() {
    let mut runner = Runner::new(setup(Configuration::Aura)).unwrap();
    let counts: Vec<u64> = (0..4).map(|_| runner.run_episode().unwrap().delayed_rewards()).collect();
    assert_eq!(counts, vec![0, 2, 0, 2]);
}

#[test]
fn exploration_decays_only_while_training() {
    let mut runner = Runner::new(setup(Configuration::MarlOnly)).unwrap();
    runner.run_episode().unwrap();
    let eps = runner.agents()[0].params.epsilon;
    assert!((eps - 0.3 * 0.995).abs() < 1e-12);
    runner.begin_testing();
    runner.run_episode().unwrap();
    assert_eq!(runner.agents()[0].params.epsilon, runner.agents()[0].params.epsilon_floor);
}

#[test]
fn experiment_keeps_plan_order_and_is_reproducible() {
    let mut plan = Plan {
        seeds: SeedSpec::List(vec![4, 1]),
        train_episodes: 2,
        test_episodes: 1,
        ..Default::default()
    };
    plan.scenario.episode_length = 30;
    let ctx = ExperimentContext {
        record_events: true,
        parallelism: Some(3),
        ..Default::default()
    };
    let a = run_experiment(&plan, &ctx).unwrap();
    let b = run_experiment(&plan, &ExperimentContext { parallelism: Some(1), ..ctx.clone() }).unwrap();
    assert_eq!(a.table, b.table);
    assert_eq!(a.table.to_csv_bytes(), b.table.to_csv_bytes());
    let keys: Vec<_> = a.table.rows.iter().map(|r| (r.configuration, r.traffic, r.seed)).collect();
    assert_eq!(keys, plan.cells());
    assert_eq!(a.events().collect::<Vec<_>>(), b.events().collect::<Vec<_>>());

    // each test step appears once per cell
    let steps = a.events().filter(|e| e.contains("\"kind\":\"step\"")).count();
    assert_eq!(steps, plan.cells().len() * 30);
}
