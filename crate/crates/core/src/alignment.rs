//! Centralized alignment controller: per-agent transition histories, their
//! evaluation to a delayed reward in [-1, 1], and its flat application to
//! every (observation, action) pair in the history.

use std::fmt::Write;

use crate::advisor::{extract_instructions, AdvisorBackend, TextReply, VerbalInstruction};
use crate::agent::{Action, QTable, TransitionRecord};
use crate::error::{Error, Result};

pub const EVALUATOR_SYSTEM: &str =
    "You are an expert evaluator of cellular base-station control policies. Reply with a score in [-1, 1].";
const PROMPT_RECORD_LIMIT: usize = 40;

#[derive(Clone, Debug, PartialEq)]
pub struct AgentHistory {
    pub agent: usize,
    pub window_start_step: u64,
    records: Vec<TransitionRecord>,
}

impl AgentHistory {
    pub fn new(agent: usize, window_start_step: u64) -> Self {
        AgentHistory {
            agent,
            window_start_step,
            records: Vec::new(),
        }
    }

    /// Appends a record; step indices must strictly increase.
    pub fn accumulate(&mut self, record: TransitionRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.step_index <= last.step_index {
                return Err(Error::Ordering {
                    last: last.step_index,
                    got: record.step_index,
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[TransitionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn clear(&mut self) {
        if let Some(last) = self.records.last() {
            self.window_start_step = last.step_index + 1;
        }
        self.records.clear();
    }

    pub fn totals(&self) -> (u64, u64) {
        self.records.iter().fold((0, 0), |(d, r), rec| {
            (d + u64::from(rec.psi.drops_this_step), r + u64::from(rec.psi.requests_this_step))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayedReward {
    pub value: f64,
    pub rationale: String,
    /// Set when the evaluator's reply was unusable or out of range.
    pub flagged: bool,
    pub instructions: Vec<VerbalInstruction>,
}

/// `clamp(1 - 2 * drops / max(1, requests), -1, 1)`
pub fn scripted_score(drops: u64, requests: u64) -> f64 {
    (1.0 - 2.0 * drops as f64 / requests.max(1) as f64).clamp(-1.0, 1.0)
}

fn label(value: f64) -> &'static str {
    match value {
        v if v >= 0.6 => "Excellent",
        v if v >= 0.2 => "Good",
        v if v > -0.2 => "Mixed",
        v if v > -0.6 => "Weak",
        _ => "Poor",
    }
}

/// Scores a non-empty history.
pub fn evaluate(history: &AgentHistory, evaluator: &AdvisorBackend) -> Result<DelayedReward> {
    if history.is_empty() {
        return Err(Error::Precondition("cannot evaluate an empty history".into()));
    }
    if let AdvisorBackend::Scripted(_) = evaluator {
        let (drops, requests) = history.totals();
        let value = scripted_score(drops, requests);
        return Ok(DelayedReward {
            value,
            rationale: format!("{}: {drops} drops over {requests} requests", label(value)),
            flagged: false,
            instructions: Vec::new(),
        });
    }
    let prompt = evaluation_prompt(history);
    Ok(match evaluator.complete_text(EVALUATOR_SYSTEM, &prompt) {
        TextReply::Text(text) => score_reply(&text),
        TextReply::CacheMiss => unusable("no recorded evaluation"),
        TextReply::TransportError(e) => unusable(&format!("evaluator unavailable: {e}")),
    })
}

fn unusable(why: &str) -> DelayedReward {
    DelayedReward {
        value: 0.0,
        rationale: why.to_owned(),
        flagged: true,
        instructions: Vec::new(),
    }
}

/// Reads the first number in `text` as the score, clamping to [-1, 1].
pub fn score_reply(text: &str) -> DelayedReward {
    let instructions = extract_instructions(text);
    match parse_first_number(text) {
        Some(raw) => {
            let value = raw.clamp(-1.0, 1.0);
            DelayedReward {
                value,
                rationale: label(value).to_owned(),
                flagged: value != raw,
                instructions,
            }
        }
        None => DelayedReward {
            instructions,
            ..unusable("no score in evaluator reply")
        },
    }
}

fn parse_first_number(text: &str) -> Option<f64> {
    let b = text.as_bytes();
    let mut i = 0;
    while i < b.len() {
        if b[i].is_ascii_digit() {
            let mut start = i;
            if start > 0 && (b[start - 1] == b'-' || b[start - 1] == b'+') {
                start -= 1;
            }
            let mut end = i;
            while end < b.len() && b[end].is_ascii_digit() {
                end += 1;
            }
            if end + 1 < b.len() && b[end] == b'.' && b[end + 1].is_ascii_digit() {
                end += 1;
                while end < b.len() && b[end].is_ascii_digit() {
                    end += 1;
                }
            }
            return text[start..end].parse().ok().filter(|v: &f64| v.is_finite());
        }
        i += 1;
    }
    None
}

/// Serializes a history for a text evaluator: window totals, action mix,
/// and the most recent records.
pub fn evaluation_prompt(history: &AgentHistory) -> String {
    let (drops, requests) = history.totals();
    let n = history.len();
    let mean_reward = history.records().iter().map(|r| r.immediate_reward).sum::<f64>() / n as f64;
    let mut counts = [0usize; 4];
    for r in history.records() {
        counts[usize::from(r.action.code()) - 1] += 1;
    }
    let mut text = String::new();
    let _ = writeln!(
        text,
        "Evaluate the recent behaviour of base-station agent {} for network efficiency, fairness, adaptability and long-term performance.",
        history.agent
    );
    let _ = writeln!(
        text,
        "Window: {n} steps from step {}; {requests} requests, {drops} dropped; mean immediate reward {mean_reward:.3}.",
        history.window_start_step
    );
    let mix: Vec<String> = Action::ALL
        .iter()
        .zip(counts)
        .map(|(a, c)| format!("{}={c}", a.name()))
        .collect();
    let _ = writeln!(text, "Action counts: {}.", mix.join(", "));
    let skip = n.saturating_sub(PROMPT_RECORD_LIMIT);
    let _ = writeln!(text, "Most recent steps (step, observation, action, reward, requests, drops, load):");
    for r in &history.records()[skip..] {
        let _ = writeln!(
            text,
            "{} {} {} {:.3} {} {} {:.2}",
            r.step_index,
            r.observation,
            r.action.code(),
            r.immediate_reward,
            r.psi.requests_this_step,
            r.psi.drops_this_step,
            r.psi.load_fraction
        );
    }
    text.push_str(
        "Score from -1 (Poor: congestion, dropped connections, wasted resources) to +1 (Excellent: efficient, \
         reliable, adaptive). Reply with the score first. Optionally add one instruction from: \
         increase_exploration, decrease_exploration, prioritize_handoffs, prioritize_energy.",
    );
    text
}

/// Adds `alpha * r` to `Q(s, a)` once per history entry, then clears the history.
pub fn apply_delayed(q: &mut QTable, history: &mut AgentHistory, reward: &DelayedReward, alpha: f64) {
    let delta = alpha * reward.value;
    for record in history.records() {
        q.add(record.observation, record.action, delta);
    }
    history.clear();
}

/// Owns one history per agent and the evaluation cadence.
#[derive(Clone, Debug)]
pub struct AlignmentController {
    histories: Vec<AgentHistory>,
    cadence_episodes: u32,
    alpha_override: Option<f64>,
}

impl AlignmentController {
    pub fn new(agents: usize, cadence_episodes: u32, alpha_override: Option<f64>) -> Result<Self> {
        if cadence_episodes == 0 {
            return Err(Error::Config("delayed reward cadence must be at least one episode".into()));
        }
        if let Some(a) = alpha_override {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Config("delayed alpha must lie in (0, 1]".into()));
            }
        }
        Ok(AlignmentController {
            histories: (0..agents).map(|i| AgentHistory::new(i, 0)).collect(),
            cadence_episodes,
            alpha_override,
        })
    }

    pub fn record(&mut self, agent: usize, record: TransitionRecord) -> Result<()> {
        self.histories[agent].accumulate(record)
    }

    pub fn history(&self, agent: usize) -> &AgentHistory {
        &self.histories[agent]
    }

    /// True after every `cadence_episodes`-th completed episode (1-based count).
    pub fn is_due(&self, episodes_completed: u64) -> bool {
        episodes_completed > 0 && episodes_completed % u64::from(self.cadence_episodes) == 0
    }

    pub fn alpha(&self, agent_alpha: f64) -> f64 {
        self.alpha_override.unwrap_or(agent_alpha)
    }

    /// Evaluates and applies the delayed reward for one agent. Returns `None`
    /// when the agent's history is empty.
    pub fn settle(
        &mut self,
        agent: usize,
        q: &mut QTable,
        agent_alpha: f64,
        evaluator: &AdvisorBackend,
    ) -> Result<Option<DelayedReward>> {
        let history = &mut self.histories[agent];
        if history.is_empty() {
            return Ok(None);
        }
        let reward = evaluate(history, evaluator)?;
        let alpha = self.alpha_override.unwrap_or(agent_alpha);
        apply_delayed(q, history, &reward, alpha);
        Ok(Some(reward))
    }
}
