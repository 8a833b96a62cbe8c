//! Advisory layer: prompt construction, pluggable completion backends, the
//! response-to-action translator, and the verbal-feedback vocabulary.

mod feedback;
mod prompt;
mod remote;
mod replay;
mod translate;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::agent::Action;
use crate::environment::Coverage;
use crate::error::Result;

pub use feedback::{apply_verbal_feedback, extract_instructions, FeedbackChange, VerbalInstruction, EPSILON_BOUNDS};
pub use prompt::{build_prompt, AdvisorPrompt, AdvisorQuery, StationView, ANSWER_FORMAT, MAX_PROMPT_BYTES};
pub use remote::{
    CompletionRequest, CompletionResponse, CompletionTransport, HttpTransport, InFlightLimiter, RemoteBackend,
    RemoteSettings, TransportError, KEY_VAR, URL_VAR,
};
pub use replay::{prompt_sha256, ReplayEntry, ReplayLog};
pub use translate::{appears_standalone, translate, TranslationFailure};

pub const ADVISOR_SYSTEM: &str =
    "You are a radio access network planner. Reply with one action code only.";

/// Deterministic expert rule table evaluated on structured state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptedRules {
    /// Load fraction below which a well-covered station is told to save power.
    pub low_load: f64,
}

impl Default for ScriptedRules {
    fn default() -> Self {
        ScriptedRules { low_load: 0.3 }
    }
}

impl ScriptedRules {
    /// at capacity with a neighbor that has room: hand off; poor coverage
    /// below max power: increase; good coverage at low load: decrease;
    /// otherwise maintain.
    pub fn decide(&self, target: &StationView, neighbor: &StationView) -> Action {
        if !target.has_room() && neighbor.has_room() {
            Action::Handoff
        } else if target.observation.coverage == Coverage::Poor && target.power_dbm < target.power_max() {
            Action::Increase
        } else if target.observation.coverage == Coverage::Good && target.load_fraction() < self.low_load {
            Action::Decrease
        } else {
            Action::Maintain
        }
    }
}

#[derive(Clone, Debug)]
pub enum AdvisorBackend {
    Scripted(ScriptedRules),
    Replay(Arc<ReplayLog>),
    Remote(RemoteBackend),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionStatus {
    Ok,
    CacheMiss,
    TranslationFailure,
    TransportError,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Suggestion {
    pub action: Option<Action>,
    pub status: SuggestionStatus,
    pub latency: Duration,
}

/// Raw text reply from a text-producing backend.
#[derive(Clone, Debug, PartialEq)]
pub enum TextReply {
    Text(String),
    CacheMiss,
    TransportError(TransportError),
}

impl AdvisorBackend {
    pub fn name(&self) -> &'static str {
        match self {
            AdvisorBackend::Scripted(_) => "scripted",
            AdvisorBackend::Replay(_) => "replay",
            AdvisorBackend::Remote(_) => "remote",
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self, AdvisorBackend::Remote(_))
    }

    /// Asks for an action. Never fails: every failure mode yields `action: None`.
    pub fn suggest(&self, query: &AdvisorQuery) -> Suggestion {
        let start = Instant::now();
        let (action, status) = match self {
            AdvisorBackend::Scripted(rules) => (Some(rules.decide(&query.target, &query.neighbor)), SuggestionStatus::Ok),
            _ => match self.complete_text(ADVISOR_SYSTEM, &query.prompt.text) {
                TextReply::Text(text) => match translate(&text) {
                    Ok(a) => (Some(a), SuggestionStatus::Ok),
                    Err(_) => (None, SuggestionStatus::TranslationFailure),
                },
                TextReply::CacheMiss => (None, SuggestionStatus::CacheMiss),
                TextReply::TransportError(e) => {
                    tracing::warn!(error = %e, station = %query.target.id, "advisor unavailable; agent acts alone");
                    (None, SuggestionStatus::TransportError)
                }
            },
        };
        let latency = start.elapsed();
        tracing::trace!(?status, ?latency, "advisor suggestion");
        Suggestion { action, status, latency }
    }

    /// Free-text completion for the replay and remote backends. The scripted
    /// backend has no text channel and always misses.
    pub fn complete_text(&self, system: &str, prompt: &str) -> TextReply {
        match self {
            AdvisorBackend::Scripted(_) => TextReply::CacheMiss,
            AdvisorBackend::Replay(log) => match log.lookup(prompt) {
                Some(text) => TextReply::Text(text.to_owned()),
                None => TextReply::CacheMiss,
            },
            AdvisorBackend::Remote(remote) => match remote.complete(system, prompt) {
                Ok(text) => TextReply::Text(text),
                Err(e) => TextReply::TransportError(e),
            },
        }
    }
}

/// Backend selection as written in a plan file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    #[default]
    Scripted,
    Replay {
        path: PathBuf,
    },
    Remote {
        #[serde(default, flatten)]
        settings: RemoteSettings,
    },
}

impl BackendSpec {
    pub fn name(&self) -> &'static str {
        match self {
            BackendSpec::Scripted => "scripted",
            BackendSpec::Replay { .. } => "replay",
            BackendSpec::Remote { .. } => "remote",
        }
    }

    /// Builds the backend. `transport` is only used by the remote variant;
    /// when absent the HTTP transport is configured from the environment.
    pub fn build(&self, transport: Option<Arc<dyn CompletionTransport>>) -> Result<AdvisorBackend> {
        Ok(match self {
            BackendSpec::Scripted => AdvisorBackend::Scripted(ScriptedRules::default()),
            BackendSpec::Replay { path } => AdvisorBackend::Replay(Arc::new(ReplayLog::load(path)?)),
            BackendSpec::Remote { settings } => {
                let transport = match transport {
                    Some(t) => t,
                    None => Arc::new(HttpTransport::from_env(Duration::from_secs_f64(settings.timeout_secs))?),
                };
                AdvisorBackend::Remote(RemoteBackend::new(transport, *settings))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{DropBucket, Observation};
    use crate::environment::{StationKind, TrafficLevel};

    fn view(kind: StationKind, power: i32, users: usize, coverage: Coverage) -> StationView {
        StationView {
            id: kind.name().into(),
            kind,
            power_dbm: power,
            users,
            capacity: kind.capacity(),
            observation: Observation {
                power_bucket: (power - kind.power_bounds().0) as u8,
                coverage,
                at_capacity: users >= kind.capacity(),
                dropped: DropBucket::Zero,
            },
            drops_last_step: 0,
        }
    }

    fn query(target: StationView, neighbor: StationView) -> AdvisorQuery {
        AdvisorQuery::new(target, neighbor, TrafficLevel::High)
    }

    #[test]
    fn scripted_rule_table() {
        let b = AdvisorBackend::Scripted(ScriptedRules::default());
        let full_urban = view(StationKind::Urban, 33, 30, Coverage::Fair);
        let roomy_rural = view(StationKind::Rural, 44, 20, Coverage::Fair);
        let full_rural = view(StationKind::Rural, 44, 50, Coverage::Fair);
        assert_eq!(b.suggest(&query(full_urban.clone(), roomy_rural.clone())).action, Some(Action::Handoff));
        assert_eq!(b.suggest(&query(full_urban, full_rural.clone())).action, Some(Action::Maintain));
        let poor = view(StationKind::Urban, 33, 10, Coverage::Poor);
        assert_eq!(b.suggest(&query(poor, full_rural.clone())).action, Some(Action::Increase));
        let poor_max = view(StationKind::Urban, 37, 10, Coverage::Poor);
        assert_eq!(b.suggest(&query(poor_max, full_rural.clone())).action, Some(Action::Maintain));
        let quiet = view(StationKind::Urban, 33, 5, Coverage::Good);
        assert_eq!(b.suggest(&query(quiet, full_rural)).action, Some(Action::Decrease));
    }

    #[test]
    fn replay_hits_and_misses() {
        let target = view(StationKind::Urban, 33, 30, Coverage::Fair);
        let neighbor = view(StationKind::Rural, 44, 20, Coverage::Fair);
        let q = query(target, neighbor);
        let mut log = ReplayLog::new();
        log.insert(&q.prompt.text, "Recommend 4.");
        let b = AdvisorBackend::Replay(Arc::new(log));
        let s = b.suggest(&q);
        assert_eq!((s.action, s.status), (Some(Action::Handoff), SuggestionStatus::Ok));

        let other = query(view(StationKind::Urban, 34, 30, Coverage::Fair), view(StationKind::Rural, 44, 20, Coverage::Fair));
        let s = b.suggest(&other);
        assert_eq!((s.action, s.status), (None, SuggestionStatus::CacheMiss));
    }

    #[test]
    fn replay_untranslatable_reply() {
        let q = query(view(StationKind::Urban, 33, 30, Coverage::Fair), view(StationKind::Rural, 44, 20, Coverage::Fair));
        let mut log = ReplayLog::new();
        log.insert(&q.prompt.text, "raise power by 10 dBm");
        let s = AdvisorBackend::Replay(Arc::new(log)).suggest(&q);
        assert_eq!((s.action, s.status), (None, SuggestionStatus::TranslationFailure));
    }

    #[test]
    fn unreachable_remote_degrades_to_none() {
        let transport = Arc::new(HttpTransport::new("http://127.0.0.1:9/v1", "key", Duration::from_secs(1)));
        let settings = RemoteSettings { retry_backoff_ms: 0, ..Default::default() };
        let b = AdvisorBackend::Remote(RemoteBackend::new(transport, settings));
        let q = query(view(StationKind::Urban, 33, 30, Coverage::Fair), view(StationKind::Rural, 44, 20, Coverage::Fair));
        let s = b.suggest(&q);
        assert_eq!((s.action, s.status), (None, SuggestionStatus::TransportError));
    }

    #[test]
    fn backend_spec_from_toml() {
        #[derive(Deserialize)]
        struct Wrap {
            backend: BackendSpec,
        }
        let w: Wrap = toml::from_str("[backend]\nkind = \"remote\"\nretries = 4\n").unwrap();
        match w.backend {
            BackendSpec::Remote { settings } => {
                assert_eq!(settings.retries, 4);
                assert_eq!(settings.timeout_secs, 10.0);
            }
            other => panic!("{other:?}"),
        }
        let w: Wrap = toml::from_str("[backend]\nkind = \"scripted\"\n").unwrap();
        assert_eq!(w.backend, BackendSpec::Scripted);
    }
}
