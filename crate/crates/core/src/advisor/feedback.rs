use serde::{Deserialize, Serialize};

use crate::agent::LearningParams;
use crate::environment::RewardWeights;

pub const EPSILON_BOUNDS: (f64, f64) = (0.05, 0.5);
const EXPLORATION_UP: f64 = 1.5;
const EXPLORATION_DOWN: f64 = 0.67;
const PRIORITY_BOOST: f64 = 1.5;

/// Closed vocabulary of corrective instructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerbalInstruction {
    IncreaseExploration,
    DecreaseExploration,
    PrioritizeHandoffs,
    PrioritizeEnergy,
}

impl VerbalInstruction {
    pub const ALL: [VerbalInstruction; 4] = [
        VerbalInstruction::IncreaseExploration,
        VerbalInstruction::DecreaseExploration,
        VerbalInstruction::PrioritizeHandoffs,
        VerbalInstruction::PrioritizeEnergy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VerbalInstruction::IncreaseExploration => "increase_exploration",
            VerbalInstruction::DecreaseExploration => "decrease_exploration",
            VerbalInstruction::PrioritizeHandoffs => "prioritize_handoffs",
            VerbalInstruction::PrioritizeEnergy => "prioritize_energy",
        }
    }

    /// Exact match after normalizing case and `-`/space separators.
    pub fn parse(s: &str) -> Option<Self> {
        let norm = normalize(s);
        Self::ALL.into_iter().find(|i| i.name() == norm.trim_matches('_'))
    }
}

fn normalize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// All vocabulary phrases found in a free-text reply, in order of appearance.
pub fn extract_instructions(text: &str) -> Vec<VerbalInstruction> {
    let norm = normalize(text);
    let mut found: Vec<(usize, VerbalInstruction)> = VerbalInstruction::ALL
        .into_iter()
        .flat_map(|i| {
            let norm = &norm;
            norm.match_indices(i.name())
                .filter(move |(at, _)| {
                    let before_ok = *at == 0 || norm.as_bytes()[at - 1] == b'_';
                    let end = at + i.name().len();
                    let after_ok = end == norm.len() || norm.as_bytes()[end] == b'_';
                    before_ok && after_ok
                })
                .map(move |(at, _)| (at, i))
        })
        .collect();
    found.sort();
    found.into_iter().map(|(_, i)| i).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeedbackChange {
    pub instruction: VerbalInstruction,
    pub parameter: &'static str,
    pub before: f64,
    pub after: f64,
}

/// Translates an instruction into a parameter change.
pub fn apply_verbal_feedback(
    instruction: VerbalInstruction,
    params: &mut LearningParams,
    weights: &mut RewardWeights,
) -> FeedbackChange {
    let (parameter, slot, factor, bounds) = match instruction {
        VerbalInstruction::IncreaseExploration => ("epsilon", &mut params.epsilon, EXPLORATION_UP, Some(EPSILON_BOUNDS)),
        VerbalInstruction::DecreaseExploration => ("epsilon", &mut params.epsilon, EXPLORATION_DOWN, Some(EPSILON_BOUNDS)),
        VerbalInstruction::PrioritizeHandoffs => ("w_handoff", &mut weights.handoff, PRIORITY_BOOST, None),
        VerbalInstruction::PrioritizeEnergy => ("w_energy", &mut weights.energy, PRIORITY_BOOST, None),
    };
    let before = *slot;
    let mut after = before * factor;
    if let Some((lo, hi)) = bounds {
        after = after.clamp(lo, hi);
    }
    *slot = after;
    tracing::info!(instruction = instruction.name(), parameter, before, after, "verbal feedback applied");
    FeedbackChange {
        instruction,
        parameter,
        before,
        after,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exploration_changes() {
        let mut w = RewardWeights::default();
        let mut p = LearningParams { epsilon: 0.5, ..Default::default() };
        apply_verbal_feedback(VerbalInstruction::IncreaseExploration, &mut p, &mut w);
        assert_eq!(p.epsilon, 0.5);
        p.epsilon = 0.1;
        let change = apply_verbal_feedback(VerbalInstruction::IncreaseExploration, &mut p, &mut w);
        assert!((p.epsilon - 0.15).abs() < 1e-12);
        assert_eq!(change.before, 0.1);
        p.epsilon = 0.06;
        apply_verbal_feedback(VerbalInstruction::DecreaseExploration, &mut p, &mut w);
        assert_eq!(p.epsilon, 0.05);
    }

    #[test]
    fn priority_changes() {
        let mut w = RewardWeights::default();
        let mut p = LearningParams::default();
        apply_verbal_feedback(VerbalInstruction::PrioritizeHandoffs, &mut p, &mut w);
        apply_verbal_feedback(VerbalInstruction::PrioritizeHandoffs, &mut p, &mut w);
        assert!((w.handoff - 0.675).abs() < 1e-12);
        apply_verbal_feedback(VerbalInstruction::PrioritizeEnergy, &mut p, &mut w);
        assert!((w.energy - 0.3).abs() < 1e-12);
        assert_eq!(p, LearningParams::default());
    }

    #[test]
    fn vocabulary_is_closed() {
        assert_eq!(VerbalInstruction::parse("Prioritize-Handoffs"), Some(VerbalInstruction::PrioritizeHandoffs));
        assert_eq!(VerbalInstruction::parse("increase exploration"), Some(VerbalInstruction::IncreaseExploration));
        assert_eq!(VerbalInstruction::parse("explore more"), None);
        assert_eq!(VerbalInstruction::parse("prioritize_handoffsx"), None);
        assert_eq!(VerbalInstruction::parse(""), None);
    }

    #[test]
    fn extraction_from_reply() {
        let found = extract_instructions("Score: 0.4. Please prioritize energy, then increase-exploration.");
        assert_eq!(found, vec![VerbalInstruction::PrioritizeEnergy, VerbalInstruction::IncreaseExploration]);
        assert!(extract_instructions("deprioritize_energy_savings").is_empty());
    }
}
