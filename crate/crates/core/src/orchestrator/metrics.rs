use serde::{Deserialize, Serialize};

use crate::environment::{StationCounters, StepOutcome};

/// Counters attributed to one agent's station.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub dropped_requests: u64,
    pub dropped_handoffs: u64,
    pub dropped_admissions: u64,
    /// Steps with at least one drop charged to this station.
    pub failure_steps: u64,
    /// Decisions made while an advisor suggestion was held.
    pub llm_queries: u64,
    /// Decisions where the held suggestion differed from the agent's own action.
    pub llm_disagreements: u64,
    pub llm_adoptions: u64,
    pub llm_translation_failures: u64,
    pub llm_cache_misses: u64,
    /// Advisor calls that failed at the transport level.
    pub llm_errors: u64,
    pub advisor_calls: u64,
    pub delayed_rewards: u64,
    pub delayed_flagged: u64,
    pub episode_returns: Vec<f64>,
}

impl AgentMetrics {
    /// Adoptions over decisions with a differing suggestion available.
    pub fn usage_rate(&self) -> f64 {
        self.llm_adoptions as f64 / self.llm_disagreements.max(1) as f64
    }

    pub fn mean_return(&self) -> f64 {
        if self.episode_returns.is_empty() {
            0.0
        } else {
            self.episode_returns.iter().sum::<f64>() / self.episode_returns.len() as f64
        }
    }

    pub(crate) fn absorb_step(&mut self, c: &StationCounters) {
        self.dropped_requests += u64::from(c.drops());
        self.dropped_handoffs += u64::from(c.handoff_failures);
        self.dropped_admissions += u64::from(c.admission_drops);
        self.failure_steps += u64::from(c.drops() > 0);
    }

    pub fn merge(&mut self, other: &AgentMetrics) {
        self.dropped_requests += other.dropped_requests;
        self.dropped_handoffs += other.dropped_handoffs;
        self.dropped_admissions += other.dropped_admissions;
        self.failure_steps += other.failure_steps;
        self.llm_queries += other.llm_queries;
        self.llm_disagreements += other.llm_disagreements;
        self.llm_adoptions += other.llm_adoptions;
        self.llm_translation_failures += other.llm_translation_failures;
        self.llm_cache_misses += other.llm_cache_misses;
        self.llm_errors += other.llm_errors;
        self.advisor_calls += other.advisor_calls;
        self.delayed_rewards += other.delayed_rewards;
        self.delayed_flagged += other.delayed_flagged;
        self.episode_returns.extend_from_slice(&other.episode_returns);
    }
}

/// System-wide and per-agent metrics for one or more episodes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub dropped_requests_total: u64,
    pub dropped_handoffs: u64,
    pub dropped_admissions: u64,
    /// Steps in which at least one request went unserved.
    pub failure_steps: u64,
    pub steps: u64,
    pub agents: Vec<AgentMetrics>,
}

impl RunMetrics {
    pub fn new(agents: usize) -> Self {
        RunMetrics {
            agents: vec![AgentMetrics::default(); agents],
            ..Default::default()
        }
    }

    pub(crate) fn absorb_step(&mut self, outcome: &StepOutcome) {
        self.dropped_requests_total += u64::from(outcome.dropped_requests);
        self.dropped_handoffs += u64::from(outcome.dropped_handoffs);
        self.dropped_admissions += u64::from(outcome.dropped_admissions);
        self.failure_steps += u64::from(outcome.is_failure_step);
        self.steps += 1;
    }

    pub fn merge(&mut self, other: &RunMetrics) {
        if self.agents.is_empty() {
            self.agents = vec![AgentMetrics::default(); other.agents.len()];
        }
        assert_eq!(self.agents.len(), other.agents.len());
        self.dropped_requests_total += other.dropped_requests_total;
        self.dropped_handoffs += other.dropped_handoffs;
        self.dropped_admissions += other.dropped_admissions;
        self.failure_steps += other.failure_steps;
        self.steps += other.steps;
        for (a, b) in self.agents.iter_mut().zip(&other.agents) {
            a.merge(b);
        }
    }

    fn sum(&self, f: impl Fn(&AgentMetrics) -> u64) -> u64 {
        self.agents.iter().map(f).sum()
    }

    pub fn llm_queries(&self) -> u64 {
        self.sum(|a| a.llm_queries)
    }

    pub fn llm_adoptions(&self) -> u64 {
        self.sum(|a| a.llm_adoptions)
    }

    pub fn llm_disagreements(&self) -> u64 {
        self.sum(|a| a.llm_disagreements)
    }

    pub fn llm_translation_failures(&self) -> u64 {
        self.sum(|a| a.llm_translation_failures)
    }

    pub fn llm_errors(&self) -> u64 {
        self.sum(|a| a.llm_errors)
    }

    pub fn advisor_calls(&self) -> u64 {
        self.sum(|a| a.advisor_calls)
    }

    pub fn delayed_rewards(&self) -> u64 {
        self.sum(|a| a.delayed_rewards)
    }

    pub fn usage_rate(&self) -> f64 {
        self.llm_adoptions() as f64 / self.llm_disagreements().max(1) as f64
    }

    /// Mean over episodes of the summed per-agent return.
    pub fn mean_return(&self) -> f64 {
        let episodes = self.agents.first().map_or(0, |a| a.episode_returns.len());
        if episodes == 0 {
            return 0.0;
        }
        let total: f64 = self.agents.iter().flat_map(|a| &a.episode_returns).sum();
        total / episodes as f64
    }
}
