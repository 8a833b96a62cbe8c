//! Per-station tabular Q-learning agent with trust-gated advice adoption.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{coverage_quality, Coverage, EnvParams, StationState, UserId, UserState};
use crate::error::{Error, Result};

/// Agent decision, with wire codes 1..=4.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
#[repr(u8)]
pub enum Action {
    Increase = 1,
    Decrease = 2,
    Maintain = 3,
    Handoff = 4,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Increase, Action::Decrease, Action::Maintain, Action::Handoff];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Action::Increase),
            2 => Some(Action::Decrease),
            3 => Some(Action::Maintain),
            4 => Some(Action::Handoff),
            _ => None,
        }
    }

    fn index(self) -> usize {
        self as usize - 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Increase => "increase",
            Action::Decrease => "decrease",
            Action::Maintain => "maintain",
            Action::Handoff => "handoff",
        }
    }
}

impl From<Action> for u8 {
    fn from(a: Action) -> u8 {
        a.code()
    }
}

impl TryFrom<u8> for Action {
    type Error = String;

    fn try_from(code: u8) -> std::result::Result<Self, String> {
        Action::from_code(code).ok_or_else(|| format!("invalid action code {code}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DropBucket {
    /// No drops.
    Zero,
    /// One or two drops.
    Few,
    /// Three or more.
    Many,
}

impl DropBucket {
    pub fn from_count(drops: u32) -> Self {
        match drops {
            0 => DropBucket::Zero,
            1 | 2 => DropBucket::Few,
            _ => DropBucket::Many,
        }
    }

    fn index(self) -> u8 {
        match self {
            DropBucket::Zero => 0,
            DropBucket::Few => 1,
            DropBucket::Many => 2,
        }
    }
}

/// What an agent perceives of its own station.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Observation {
    /// `power_dbm - power_min`.
    pub power_bucket: u8,
    pub coverage: Coverage,
    pub at_capacity: bool,
    pub dropped: DropBucket,
}

impl Observation {
    /// Canonical key, e.g. `p2|Fair|cap0|d1`.
    pub fn key(&self) -> String {
        self.to_string()
    }

    pub fn from_key(key: &str) -> Option<Self> {
        let mut parts = key.split('|');
        let power_bucket = parts.next()?.strip_prefix('p')?.parse().ok()?;
        let coverage = Coverage::parse(parts.next()?)?;
        let at_capacity = match parts.next()? {
            "cap0" => false,
            "cap1" => true,
            _ => return None,
        };
        let dropped = match parts.next()? {
            "d0" => DropBucket::Zero,
            "d1" => DropBucket::Few,
            "d2" => DropBucket::Many,
            _ => return None,
        };
        if parts.next().is_some() {
            return None;
        }
        Some(Observation {
            power_bucket,
            coverage,
            at_capacity,
            dropped,
        })
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "p{}|{}|cap{}|d{}",
            self.power_bucket,
            self.coverage.name(),
            u8::from(self.at_capacity),
            self.dropped.index()
        )
    }
}

/// Encodes a station's local view. Drops count both failed admissions and
/// rejected handoffs from the previous step.
pub fn observe(station: &StationState, users: &BTreeMap<UserId, UserState>) -> Observation {
    Observation {
        power_bucket: (station.power_dbm - station.power_min()) as u8,
        coverage: coverage_quality(station, users),
        at_capacity: station.at_capacity(),
        dropped: DropBucket::from_count(station.drops_last_step()),
    }
}

/// Q-values keyed by observation; one entry per action code. Unseen pairs read as 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QTable {
    rows: BTreeMap<Observation, [f64; 4]>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, obs: &Observation, action: Action) -> f64 {
        self.row(obs)[action.index()]
    }

    pub fn row(&self, obs: &Observation) -> [f64; 4] {
        self.rows.get(obs).copied().unwrap_or([0.0; 4])
    }

    pub fn set(&mut self, obs: Observation, action: Action, value: f64) {
        debug_assert!(value.is_finite());
        self.rows.entry(obs).or_insert([0.0; 4])[action.index()] = value;
    }

    pub fn add(&mut self, obs: Observation, action: Action, delta: f64) {
        let cell = &mut self.rows.entry(obs).or_insert([0.0; 4])[action.index()];
        *cell += delta;
    }

    pub fn max_value(&self, obs: &Observation) -> f64 {
        self.row(obs).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax over actions; ties go to the lowest code.
    pub fn greedy(&self, obs: &Observation) -> Action {
        let row = self.row(obs);
        let mut best = Action::Increase;
        for a in Action::ALL {
            if row[a.index()] > row[best.index()] {
                best = a;
            }
        }
        best
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Observation, &[f64; 4])> {
        self.rows.iter()
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<String, [f64; 4]> = self.rows.iter().map(|(k, v)| (k.key(), *v)).collect();
        serde_json::to_string_pretty(&map).expect("q-table serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, String> {
        let map: BTreeMap<String, [f64; 4]> = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let mut rows = BTreeMap::new();
        for (key, values) in map {
            let obs = Observation::from_key(&key).ok_or_else(|| format!("invalid observation key {key:?}"))?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(format!("non-finite value under {key:?}"));
            }
            rows.insert(obs, values);
        }
        Ok(QTable { rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::parse(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningParams {
    pub alpha: f64,
    pub gamma: f64,
    /// Current exploration rate.
    pub epsilon: f64,
    /// Per-episode multiplicative decay of `epsilon`.
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    pub trust_eta: f64,
    pub reward_ema_beta: f64,
    pub trust_init: f64,
}

impl Default for LearningParams {
    fn default() -> Self {
        LearningParams {
            alpha: 0.1,
            gamma: 0.9,
            epsilon: 0.3,
            epsilon_decay: 0.995,
            epsilon_floor: 0.05,
            trust_eta: 0.05,
            reward_ema_beta: 0.9,
            trust_init: 0.5,
        }
    }
}

impl LearningParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("alpha", self.alpha > 0.0 && self.alpha <= 1.0),
            ("gamma", (0.0..1.0).contains(&self.gamma)),
            ("epsilon", (0.0..=1.0).contains(&self.epsilon)),
            ("epsilon_decay", self.epsilon_decay > 0.0 && self.epsilon_decay <= 1.0),
            ("epsilon_floor", (0.0..=1.0).contains(&self.epsilon_floor)),
            ("trust_eta", self.trust_eta > 0.0 && self.trust_eta <= 1.0),
            ("reward_ema_beta", self.reward_ema_beta > 0.0 && self.reward_ema_beta < 1.0),
            ("trust_init", (0.0..=1.0).contains(&self.trust_init)),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(Error::Config(format!("learning parameter {name} out of range"))),
            None => Ok(()),
        }
    }

    /// End-of-episode exploration decay.
    pub fn decay_epsilon(&mut self) {
        self.epsilon = (self.epsilon * self.epsilon_decay).max(self.epsilon_floor);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustScore {
    pub value: f64,
    /// Moving baseline of the agent's own immediate rewards.
    pub reward_ema: f64,
}

impl TrustScore {
    pub fn new(value: f64) -> Self {
        TrustScore {
            value: value.clamp(0.0, 1.0),
            reward_ema: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub observation: Observation,
    pub action: Action,
    pub immediate_reward: f64,
    pub psi: EnvParams,
    pub step_index: u64,
}

impl Serialize for Observation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for Observation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let key = String::deserialize(d)?;
        Observation::from_key(&key).ok_or_else(|| serde::de::Error::custom(format!("invalid observation key {key:?}")))
    }
}

/// ε-greedy selection: uniform over all actions with probability `epsilon`,
/// otherwise [`QTable::greedy`].
pub fn select_action<R: Rng + ?Sized>(q: &QTable, obs: &Observation, epsilon: f64, rng: &mut R) -> Action {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        Action::ALL[rng.random_range(0..Action::ALL.len())]
    } else {
        q.greedy(obs)
    }
}

/// `Q(s,a) <- Q(s,a) + alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`
pub fn q_update(q: &mut QTable, s: Observation, a: Action, r: f64, next: &Observation, params: &LearningParams) {
    let current = q.get(&s, a);
    let target = r + params.gamma * q.max_value(next);
    q.set(s, a, current + params.alpha * (target - current));
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decision {
    pub action: Action,
    /// True only when a differing suggestion was actually taken.
    pub adopted: bool,
}

/// Adopts a differing suggestion with probability `trust.value`.
pub fn combine_decision<R: Rng + ?Sized>(
    suggestion: Option<Action>,
    own: Action,
    trust: &TrustScore,
    rng: &mut R,
) -> Decision {
    match suggestion {
        Some(advised) if advised != own => {
            if rng.random::<f64>() < trust.value {
                Decision {
                    action: advised,
                    adopted: true,
                }
            } else {
                Decision {
                    action: own,
                    adopted: false,
                }
            }
        }
        _ => Decision {
            action: own,
            adopted: false,
        },
    }
}

/// Moves trust toward 1 when following the suggestion paid at least the
/// running baseline, toward 0 otherwise. The baseline is updated on every
/// call, after the comparison.
pub fn update_trust(
    trust: &TrustScore,
    suggestion: Option<Action>,
    taken: Action,
    reward: f64,
    params: &LearningParams,
) -> TrustScore {
    let baseline = trust.reward_ema;
    let beta = params.reward_ema_beta;
    let reward_ema = beta * baseline + (1.0 - beta) * reward;
    let value = match suggestion {
        Some(advised) if advised == taken => {
            if reward >= baseline {
                trust.value + params.trust_eta * (1.0 - trust.value)
            } else {
                trust.value - params.trust_eta * trust.value
            }
        }
        _ => trust.value,
    };
    TrustScore {
        value: value.clamp(0.0, 1.0),
        reward_ema,
    }
}

/// One learning agent bound to a station.
#[derive(Clone, Debug)]
pub struct Agent {
    pub station: usize,
    pub q: QTable,
    pub trust: TrustScore,
    pub params: LearningParams,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(station: usize, params: LearningParams, seed: u64) -> Self {
        Agent {
            station,
            q: QTable::new(),
            trust: TrustScore::new(params.trust_init),
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn act(&mut self, obs: &Observation) -> Action {
        select_action(&self.q, obs, self.params.epsilon, &mut self.rng)
    }

    pub fn combine(&mut self, suggestion: Option<Action>, own: Action) -> Decision {
        combine_decision(suggestion, own, &self.trust, &mut self.rng)
    }

    pub fn learn(&mut self, s: Observation, a: Action, r: f64, next: &Observation) {
        q_update(&mut self.q, s, a, r, next, &self.params);
    }

    pub fn update_trust(&mut self, suggestion: Option<Action>, taken: Action, reward: f64) {
        self.trust = update_trust(&self.trust, suggestion, taken, reward, &self.params);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::StationKind;

    fn obs(p: u8) -> Observation {
        Observation {
            power_bucket: p,
            coverage: Coverage::Fair,
            at_capacity: false,
            dropped: DropBucket::Zero,
        }
    }

    fn station_with(kind: StationKind, power: i32, snrs: &[f64]) -> (StationState, BTreeMap<UserId, UserState>) {
        let mut station = StationState::new("s", kind, power);
        let mut users = BTreeMap::new();
        for (i, &snr) in snrs.iter().enumerate() {
            let id = i as UserId;
            station.attached.insert(id);
            users.insert(id, UserState { id, station: 0, signal_dbm: -80.0, snr_db: snr });
        }
        (station, users)
    }

    #[test]
    fn action_codes_are_bijective() {
        for a in Action::ALL {
            assert_eq!(Action::from_code(a.code()), Some(a));
        }
        assert_eq!(Action::Increase.code(), 1);
        assert_eq!(Action::Handoff.code(), 4);
        assert_eq!(Action::from_code(0), None);
        assert_eq!(Action::from_code(5), None);
    }

    #[test]
    fn observe_rural_low_power_good() {
        let (station, users) = station_with(StationKind::Rural, 43, &[25.0; 10]);
        let o = observe(&station, &users);
        assert_eq!(
            o,
            Observation {
                power_bucket: 0,
                coverage: Coverage::Good,
                at_capacity: false,
                dropped: DropBucket::Zero
            }
        );
    }

    #[test]
    fn observe_full_urban() {
        let (station, users) = station_with(StationKind::Urban, 37, &[15.0; 30]);
        let o = observe(&station, &users);
        assert!(o.at_capacity);
        assert_eq!(o.power_bucket, 7);
    }

    #[test]
    fn drop_buckets() {
        let (mut station, users) = station_with(StationKind::Urban, 30, &[]);
        station.dropped_last_step = 2;
        station.handoff_failures_last_step = 1;
        assert_eq!(observe(&station, &users).dropped, DropBucket::Many);
        assert_eq!(DropBucket::from_count(0), DropBucket::Zero);
        assert_eq!(DropBucket::from_count(2), DropBucket::Few);
        assert_eq!(DropBucket::from_count(3), DropBucket::Many);
    }

    #[test]
    fn observation_key_round_trip() {
        let o = Observation {
            power_bucket: 2,
            coverage: Coverage::Fair,
            at_capacity: false,
            dropped: DropBucket::Few,
        };
        assert_eq!(o.key(), "p2|Fair|cap0|d1");
        assert_eq!(Observation::from_key("p2|Fair|cap0|d1"), Some(o));
        assert_eq!(Observation::from_key("p2|Fair|cap0"), None);
        assert_eq!(Observation::from_key("p2|Meh|cap0|d1"), None);
    }

    #[test]
    fn greedy_cases() {
        let mut q = QTable::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&q, &obs(0), 0.0, &mut rng), Action::Increase);
        q.set(obs(0), Action::Increase, 0.5);
        for a in [Action::Decrease, Action::Maintain, Action::Handoff] {
            q.set(obs(0), a, 0.1);
        }
        assert_eq!(select_action(&q, &obs(0), 0.0, &mut rng), Action::Increase);
        q.set(obs(1), Action::Maintain, 2.0);
        q.set(obs(1), Action::Handoff, 2.0);
        assert_eq!(q.greedy(&obs(1)), Action::Maintain);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let q = QTable::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0usize; 4];
        for _ in 0..10_000 {
            counts[select_action(&q, &obs(0), 1.0, &mut rng).index()] += 1;
        }
        for c in counts {
            let f = c as f64 / 10_000.0;
            assert!((0.22..=0.28).contains(&f), "{counts:?}");
        }
    }

    #[test]
    fn q_update_cases() {
        let params = |alpha, gamma| LearningParams {
            alpha,
            gamma,
            ..Default::default()
        };
        let mut q = QTable::new();
        q.set(obs(0), Action::Maintain, 0.7);
        let before = q.clone();
        q_update(&mut q, obs(0), Action::Maintain, 3.0, &obs(1), &LearningParams { alpha: 0.0, ..params(0.1, 0.9) });
        assert_eq!(q, before);

        let mut q = QTable::new();
        q_update(&mut q, obs(0), Action::Increase, 1.0, &obs(1), &params(0.5, 0.0));
        assert_eq!(q.get(&obs(0), Action::Increase), 0.5);

        let mut q = QTable::new();
        q.set(obs(0), Action::Increase, 0.2);
        q.set(obs(1), Action::Decrease, 0.4);
        q_update(&mut q, obs(0), Action::Increase, 1.0, &obs(1), &params(0.1, 0.9));
        assert!((q.get(&obs(0), Action::Increase) - 0.316).abs() < 1e-12);
        assert_eq!(q.get(&obs(1), Action::Decrease), 0.4);
    }

    #[test]
    fn combine_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = combine_decision(None, Action::Maintain, &TrustScore::new(1.0), &mut rng);
        assert_eq!(d, Decision { action: Action::Maintain, adopted: false });
        let d = combine_decision(Some(Action::Handoff), Action::Maintain, &TrustScore::new(0.0), &mut rng);
        assert_eq!(d, Decision { action: Action::Maintain, adopted: false });
        let d = combine_decision(Some(Action::Handoff), Action::Maintain, &TrustScore::new(1.0), &mut rng);
        assert_eq!(d, Decision { action: Action::Handoff, adopted: true });
        let d = combine_decision(Some(Action::Maintain), Action::Maintain, &TrustScore::new(1.0), &mut rng);
        assert_eq!(d, Decision { action: Action::Maintain, adopted: false });
    }

    #[test]
    fn trust_update_cases() {
        let params = LearningParams {
            trust_eta: 0.1,
            ..Default::default()
        };
        let t = TrustScore { value: 0.5, reward_ema: 0.2 };
        let same = update_trust(&t, None, Action::Maintain, 1.0, &params);
        assert_eq!(same.value, 0.5);
        assert!((same.reward_ema - (0.9 * 0.2 + 0.1 * 1.0)).abs() < 1e-15);

        let up = update_trust(&t, Some(Action::Handoff), Action::Handoff, 0.2, &params);
        assert!((up.value - 0.55).abs() < 1e-15);
        let down = update_trust(&t, Some(Action::Handoff), Action::Handoff, 0.1, &params);
        assert!((down.value - 0.45).abs() < 1e-15);
        let ignored = update_trust(&t, Some(Action::Handoff), Action::Maintain, -5.0, &params);
        assert_eq!(ignored.value, 0.5);
    }

    #[test]
    fn q_table_json_round_trip() {
        let mut q = QTable::new();
        q.set(obs(2), Action::Handoff, -1.25);
        q.set(obs(0), Action::Increase, 0.5);
        let text = q.to_json();
        assert!(text.contains("\"p2|Fair|cap0|d0\""));
        assert_eq!(QTable::from_json(&text).unwrap(), q);
        assert!(QTable::from_json(r#"{"bogus": [0,0,0,0]}"#).is_err());
    }

    #[test]
    fn params_validate() {
        LearningParams::default().validate().unwrap();
        let bad = LearningParams { gamma: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let mut p = LearningParams::default();
        for _ in 0..10_000 {
            p.decay_epsilon();
        }
        assert_eq!(p.epsilon, p.epsilon_floor);
    }
}
