//! Episode and experiment execution for the three configurations.

mod experiment;
mod metrics;
mod plan;
mod results;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::advisor::{apply_verbal_feedback, AdvisorBackend, AdvisorQuery, StationView, SuggestionStatus};
use crate::agent::{observe, Action, Agent, Decision, LearningParams, TransitionRecord};
use crate::alignment::{AlignmentController, DelayedReward};
use crate::environment::{Environment, RewardWeights, ScenarioConfig, StepOutcome};
use crate::error::{Error, Result};
use crate::seed::{self, streams};

pub use experiment::{run_experiment, write_outputs, CellResult, ExperimentContext, ExperimentOutput};
pub use metrics::{AgentMetrics, RunMetrics};
pub use plan::{DelayedSettings, Plan, SeedSpec};
pub use results::{MetricSummary, ResultRow, ResultTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Configuration {
    /// Agents act alone.
    MarlOnly,
    /// Agents consult the advisor through their trust score.
    GuidedMarl,
    /// Advisor guidance plus delayed rewards from the alignment controller.
    Aura,
}

impl Configuration {
    pub const ALL: [Configuration; 3] = [Configuration::MarlOnly, Configuration::GuidedMarl, Configuration::Aura];

    pub fn name(self) -> &'static str {
        match self {
            Configuration::MarlOnly => "marl-only",
            Configuration::GuidedMarl => "guided-marl",
            Configuration::Aura => "aura",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s.trim().to_ascii_lowercase())
    }

    pub fn uses_advisor(self) -> bool {
        !matches!(self, Configuration::MarlOnly)
    }

    pub fn uses_alignment(self) -> bool {
        matches!(self, Configuration::Aura)
    }
}

impl std::fmt::Display for Configuration {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Advisor refreshes happen only at steps that are multiples of `interval_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSchedule {
    pub interval_steps: u32,
}

impl Default for BatchSchedule {
    fn default() -> Self {
        BatchSchedule { interval_steps: 10 }
    }
}

impl BatchSchedule {
    pub fn is_boundary(&self, step: usize) -> bool {
        step % self.interval_steps as usize == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Test,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Test => "test",
        }
    }
}

/// Observer view of one executed step.
#[derive(Debug)]
pub struct StepTrace<'a> {
    pub phase: Phase,
    pub episode: u64,
    pub step: usize,
    /// Held advisor suggestion per agent at this step.
    pub suggestions: &'a [Option<Action>],
    pub decisions: &'a [Decision],
    pub outcome: &'a StepOutcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayedEvent {
    pub phase: Phase,
    pub episode: u64,
    pub agent: usize,
    pub reward: DelayedReward,
    pub evaluator: &'static str,
}

pub enum RunEvent<'a> {
    Step(StepTrace<'a>),
    Delayed(&'a DelayedEvent),
}

/// Components for one run; consistency with `configuration` is checked by [`Runner::new`].
#[derive(Clone)]
pub struct RunnerSetup {
    pub configuration: Configuration,
    pub scenario: ScenarioConfig,
    pub learning: LearningParams,
    pub schedule: BatchSchedule,
    pub delayed: DelayedSettings,
    pub advisor: Option<Arc<AdvisorBackend>>,
    pub evaluator: Option<Arc<AdvisorBackend>>,
    pub seed: u64,
}

/// Long-lived state of one (configuration, scenario, seed) cell: agents,
/// histories and episode counters survive across episodes.
pub struct Runner {
    configuration: Configuration,
    scenario: ScenarioConfig,
    schedule: BatchSchedule,
    agents: Vec<Agent>,
    weights: Vec<RewardWeights>,
    advisor: Option<Arc<AdvisorBackend>>,
    evaluator: Option<Arc<AdvisorBackend>>,
    alignment: Option<AlignmentController>,
    seed: u64,
    phase: Phase,
    episodes_completed: u64,
    global_step: u64,
}

impl Runner {
    pub fn new(setup: RunnerSetup) -> Result<Self> {
        let RunnerSetup {
            configuration,
            scenario,
            learning,
            schedule,
            delayed,
            advisor,
            evaluator,
            seed,
        } = setup;
        scenario.validate()?;
        learning.validate()?;
        if schedule.interval_steps == 0 {
            return Err(Error::Config("batch interval must be positive".into()));
        }
        match (configuration.uses_advisor(), advisor.is_some()) {
            (true, false) => return Err(Error::Config(format!("{configuration} requires an advisor backend"))),
            (false, true) => return Err(Error::Config(format!("{configuration} must not be given an advisor"))),
            _ => {}
        }
        match (configuration.uses_alignment(), evaluator.is_some()) {
            (true, false) => return Err(Error::Config(format!("{configuration} requires an evaluator backend"))),
            (false, true) => return Err(Error::Config(format!("{configuration} must not be given an evaluator"))),
            _ => {}
        }
        let n = scenario.stations.len();
        let alignment = if configuration.uses_alignment() {
            Some(AlignmentController::new(n, delayed.interval_episodes, delayed.alpha)?)
        } else {
            None
        };
        let agents = (0..n)
            .map(|i| Agent::new(i, learning, seed::derive(seed, streams::AGENT, i as u64)))
            .collect();
        Ok(Runner {
            configuration,
            weights: vec![scenario.weights; n],
            scenario,
            schedule,
            agents,
            advisor,
            evaluator,
            alignment,
            seed,
            phase: Phase::Train,
            episodes_completed: 0,
            global_step: 0,
        })
    }

    pub fn configuration(&self) -> Configuration {
        self.configuration
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn weights(&self) -> &[RewardWeights] {
        &self.weights
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn episodes_completed(&self) -> u64 {
        self.episodes_completed
    }

    /// Switches to the testing phase: exploration pinned at its floor.
    pub fn begin_testing(&mut self) {
        self.phase = Phase::Test;
        for agent in &mut self.agents {
            agent.params.epsilon = agent.params.epsilon_floor;
        }
    }

    pub fn run_episode(&mut self) -> Result<RunMetrics> {
        self.run_episode_observed(&mut |_| {})
    }

    pub fn run_episode_observed(&mut self, observer: &mut dyn FnMut(RunEvent<'_>)) -> Result<RunMetrics> {
        let episode = self.episodes_completed;
        let episode_seed = seed::derive(self.seed, streams::EPISODE, episode);
        let mut env = Environment::reset(&self.scenario, episode_seed)?;
        env.set_weights(self.weights.clone());
        let n = self.agents.len();
        let mut metrics = RunMetrics::new(n);
        let mut held: Vec<Option<Action>> = vec![None; n];
        let mut returns = vec![0.0; n];
        let mut decisions = Vec::with_capacity(n);
        let mut observations = Vec::with_capacity(n);

        for t in 0..self.scenario.episode_length {
            if let Some(advisor) = &self.advisor {
                if self.schedule.is_boundary(t) {
                    for i in 0..n {
                        let neighbor = env.neighbor_of(i).unwrap_or(i);
                        let query = AdvisorQuery::new(
                            StationView::capture(env.station(i), env.users()),
                            StationView::capture(env.station(neighbor), env.users()),
                            self.scenario.traffic_level,
                        );
                        let suggestion = advisor.suggest(&query);
                        let m = &mut metrics.agents[i];
                        m.advisor_calls += 1;
                        match suggestion.status {
                            SuggestionStatus::Ok => {}
                            SuggestionStatus::TranslationFailure => m.llm_translation_failures += 1,
                            SuggestionStatus::TransportError => m.llm_errors += 1,
                            SuggestionStatus::CacheMiss => m.llm_cache_misses += 1,
                        }
                        held[i] = suggestion.action;
                    }
                }
            }

            observations.clear();
            decisions.clear();
            for (i, agent) in self.agents.iter_mut().enumerate() {
                let obs = observe(env.station(i), env.users());
                let own = agent.act(&obs);
                let decision = if self.advisor.is_some() {
                    agent.combine(held[i], own)
                } else {
                    Decision { action: own, adopted: false }
                };
                let m = &mut metrics.agents[i];
                if let Some(advised) = held[i] {
                    m.llm_queries += 1;
                    if advised != own {
                        m.llm_disagreements += 1;
                    }
                }
                m.llm_adoptions += u64::from(decision.adopted);
                observations.push(obs);
                decisions.push(decision);
            }

            let actions: Vec<Action> = decisions.iter().map(|d| d.action).collect();
            let outcome = env.step(&actions);

            for (i, agent) in self.agents.iter_mut().enumerate() {
                let next = observe(env.station(i), env.users());
                let reward = outcome.rewards[i];
                let action = decisions[i].action;
                agent.learn(observations[i], action, reward, &next);
                agent.update_trust(held[i], action, reward);
                returns[i] += reward;
                if let Some(alignment) = &mut self.alignment {
                    alignment.record(
                        i,
                        TransitionRecord {
                            observation: observations[i],
                            action,
                            immediate_reward: reward,
                            psi: outcome.psi[i],
                            step_index: self.global_step,
                        },
                    )?;
                }
                metrics.agents[i].absorb_step(&outcome.counters[i]);
            }
            metrics.absorb_step(&outcome);
            self.global_step += 1;

            observer(RunEvent::Step(StepTrace {
                phase: self.phase,
                episode,
                step: t,
                suggestions: &held,
                decisions: &decisions,
                outcome: &outcome,
            }));
        }

        for (m, r) in metrics.agents.iter_mut().zip(&returns) {
            m.episode_returns.push(*r);
        }
        self.episodes_completed += 1;
        if self.phase == Phase::Train {
            for agent in &mut self.agents {
                agent.params.decay_epsilon();
            }
        }
        self.settle_delayed(&mut metrics, observer)?;
        Ok(metrics)
    }

    fn settle_delayed(&mut self, metrics: &mut RunMetrics, observer: &mut dyn FnMut(RunEvent<'_>)) -> Result<()> {
        let (Some(alignment), Some(evaluator)) = (&mut self.alignment, &self.evaluator) else {
            return Ok(());
        };
        if !alignment.is_due(self.episodes_completed) {
            return Ok(());
        }
        for (i, agent) in self.agents.iter_mut().enumerate() {
            let alpha = agent.params.alpha;
            let Some(reward) = alignment.settle(i, &mut agent.q, alpha, evaluator)? else {
                continue;
            };
            for &instruction in &reward.instructions {
                apply_verbal_feedback(instruction, &mut agent.params, &mut self.weights[i]);
            }
            let m = &mut metrics.agents[i];
            m.delayed_rewards += 1;
            m.delayed_flagged += u64::from(reward.flagged);
            let event = DelayedEvent {
                phase: self.phase,
                episode: self.episodes_completed - 1,
                agent: i,
                reward,
                evaluator: evaluator.name(),
            };
            tracing::debug!(agent = i, value = event.reward.value, flagged = event.reward.flagged, "delayed reward");
            observer(RunEvent::Delayed(&event));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
