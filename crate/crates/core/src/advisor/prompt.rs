use std::collections::BTreeMap;
use std::fmt::Write;

use crate::agent::{observe, Observation};
use crate::environment::{StationKind, StationState, TrafficLevel, UserId, UserState};

pub const MAX_PROMPT_BYTES: usize = 4096;
pub const ANSWER_FORMAT: &str = "Answer with a single action code (1, 2, 3 or 4) and nothing else.";
const MAX_ID_CHARS: usize = 48;

/// Snapshot of one station as the advisor sees it.
#[derive(Clone, Debug, PartialEq)]
pub struct StationView {
    pub id: String,
    pub kind: StationKind,
    pub power_dbm: i32,
    pub users: usize,
    pub capacity: usize,
    pub observation: Observation,
    pub drops_last_step: u32,
}

impl StationView {
    pub fn capture(station: &StationState, users: &BTreeMap<UserId, UserState>) -> Self {
        StationView {
            id: station.id.clone(),
            kind: station.kind,
            power_dbm: station.power_dbm,
            users: station.attached.len(),
            capacity: station.capacity(),
            observation: observe(station, users),
            drops_last_step: station.drops_last_step(),
        }
    }

    pub fn has_room(&self) -> bool {
        self.users < self.capacity
    }

    pub fn load_fraction(&self) -> f64 {
        self.users as f64 / self.capacity as f64
    }

    pub fn power_max(&self) -> i32 {
        self.kind.power_bounds().1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AdvisorPrompt {
    pub text: String,
}

/// Everything one advisor call needs.
#[derive(Clone, Debug, PartialEq)]
pub struct AdvisorQuery {
    pub target: StationView,
    pub neighbor: StationView,
    pub traffic: TrafficLevel,
    pub prompt: AdvisorPrompt,
}

impl AdvisorQuery {
    pub fn new(target: StationView, neighbor: StationView, traffic: TrafficLevel) -> Self {
        let prompt = build_prompt(&target, &neighbor, traffic);
        AdvisorQuery {
            target,
            neighbor,
            traffic,
            prompt,
        }
    }
}

pub fn build_prompt(target: &StationView, neighbor: &StationView, traffic: TrafficLevel) -> AdvisorPrompt {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "You advise the controller of cellular base station \"{}\". Suggest its next action.",
        short(&target.id)
    );
    describe(&mut text, "Target", target);
    describe(&mut text, "Neighbor", neighbor);
    let _ = writeln!(text, "Traffic level: {}.", traffic.name());
    text.push_str(
        "Actions: 1 = increase transmit power, 2 = decrease transmit power, \
         3 = maintain current state, 4 = hand off the worst-connected user to the neighbor.\n",
    );
    text.push_str(ANSWER_FORMAT);
    debug_assert!(text.len() <= MAX_PROMPT_BYTES);
    AdvisorPrompt { text }
}

fn describe(out: &mut String, role: &str, s: &StationView) {
    let (lo, hi) = s.kind.power_bounds();
    let status = if s.has_room() { "accepting users" } else { "at capacity" };
    let _ = writeln!(
        out,
        "{role} station \"{}\" ({}): power {} dBm (range {lo}-{hi}), coverage {}, users {}/{} ({status}), dropped requests last step {}.",
        short(&s.id),
        s.kind.name(),
        s.power_dbm,
        s.observation.coverage.name().to_ascii_lowercase(),
        s.users,
        s.capacity,
        s.drops_last_step,
    );
}

fn short(id: &str) -> String {
    id.chars()
        .filter(|c| !c.is_control() && *c != '"')
        .take(MAX_ID_CHARS)
        .collect()
}
