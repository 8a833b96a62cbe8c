//! Discrete-time simulation of base stations with dynamic users.
//!
//! One step applies every agent's action in station order, then draws
//! arrivals, then departures, then perturbs every user's signal and SNR, and
//! finally scores each station. All randomness comes from a single ChaCha8
//! stream seeded at [`Environment::reset`], drawn in a fixed order.

mod config;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::agent::Action;
use crate::error::Result;

pub use config::{
    ArrivalRouting, Perturbation, RewardWeights, ScenarioConfig, StationKind, StationSpec,
    TrafficLevel, TrafficParams, TrafficTable,
};

pub const SIGNAL_RANGE_DBM: (f64, f64) = (-120.0, -50.0);
pub const SNR_RANGE_DB: (f64, f64) = (0.0, 30.0);

/// Mean-SNR thresholds separating coverage classes.
pub const COVERAGE_GOOD_DB: f64 = 20.0;
pub const COVERAGE_FAIR_DB: f64 = 10.0;

pub type UserId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Coverage {
    Good,
    Fair,
    Poor,
}

impl Coverage {
    pub fn name(self) -> &'static str {
        match self {
            Coverage::Good => "Good",
            Coverage::Fair => "Fair",
            Coverage::Poor => "Poor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Good" => Some(Coverage::Good),
            "Fair" => Some(Coverage::Fair),
            "Poor" => Some(Coverage::Poor),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationState {
    pub id: String,
    pub kind: StationKind,
    pub power_dbm: i32,
    pub attached: BTreeSet<UserId>,
    /// Arrivals homed here that could not be admitted during the last step.
    pub dropped_last_step: u32,
    /// Handoff requests issued by this station and rejected during the last step.
    pub handoff_failures_last_step: u32,
}

impl StationState {
    pub fn new(id: impl Into<String>, kind: StationKind, power_dbm: i32) -> Self {
        let (lo, hi) = kind.power_bounds();
        StationState {
            id: id.into(),
            kind,
            power_dbm: power_dbm.clamp(lo, hi),
            attached: BTreeSet::new(),
            dropped_last_step: 0,
            handoff_failures_last_step: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.kind.capacity()
    }

    pub fn power_min(&self) -> i32 {
        self.kind.power_bounds().0
    }

    pub fn power_max(&self) -> i32 {
        self.kind.power_bounds().1
    }

    pub fn load_fraction(&self) -> f64 {
        self.attached.len() as f64 / self.capacity() as f64
    }

    pub fn has_room(&self) -> bool {
        self.attached.len() < self.capacity()
    }

    pub fn at_capacity(&self) -> bool {
        !self.has_room()
    }

    /// Drops of any kind charged to this station during the last step.
    pub fn drops_last_step(&self) -> u32 {
        self.dropped_last_step + self.handoff_failures_last_step
    }

    /// Transmit power normalized to [0, 1] over the kind's range.
    pub fn normalized_power(&self) -> f64 {
        let (lo, hi) = self.kind.power_bounds();
        f64::from(self.power_dbm - lo) / f64::from(hi - lo)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub id: UserId,
    pub station: usize,
    pub signal_dbm: f64,
    pub snr_db: f64,
}

/// Environmental parameters reported to an agent after each step (ψ).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    /// Mean SNR of attached users; 0 for an empty station.
    pub mean_snr_db: f64,
    /// Mean signal of attached users; the range floor for an empty station.
    pub mean_signal_dbm: f64,
    pub load_fraction: f64,
    pub arrivals_this_step: u32,
    pub departures_this_step: u32,
    pub requests_this_step: u32,
    pub drops_this_step: u32,
}

/// What happened at one station during one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationCounters {
    pub arrivals: u32,
    pub admitted: u32,
    pub admission_drops: u32,
    pub handoff_requests: u32,
    pub handoff_successes: u32,
    pub handoff_failures: u32,
    pub wasted_actions: u32,
    pub departures: u32,
}

impl StationCounters {
    pub fn requests(&self) -> u32 {
        self.arrivals + self.handoff_requests
    }

    pub fn served(&self) -> u32 {
        self.admitted + self.handoff_successes
    }

    pub fn drops(&self) -> u32 {
        self.admission_drops + self.handoff_failures
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub psi: Vec<EnvParams>,
    pub counters: Vec<StationCounters>,
    pub dropped_requests: u32,
    pub dropped_admissions: u32,
    pub dropped_handoffs: u32,
    pub is_failure_step: bool,
}

/// Result of a single handoff request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HandoffResult {
    Accepted { user: UserId, to: usize },
    Rejected { user: UserId },
    NoUsers,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentState {
    pub stations: Vec<StationState>,
    pub users: BTreeMap<UserId, UserState>,
    pub next_user_id: UserId,
    pub step_index: u64,
    rng: ChaCha8Rng,
}

impl EnvironmentState {
    pub fn total_users(&self) -> usize {
        self.users.len()
    }
}

/// Layout used to build a fixture state directly.
#[derive(Clone, Debug, PartialEq)]
pub struct StationLayout {
    pub power_dbm: i32,
    /// `(signal_dbm, snr_db)` per attached user.
    pub users: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct Environment {
    config: ScenarioConfig,
    traffic: TrafficParams,
    weights: Vec<RewardWeights>,
    state: EnvironmentState,
}

impl Environment {
    /// Starts an episode: power uniform over each station's integer range,
    /// user count uniform over `[0, capacity]`, and every user's signal and
    /// SNR uniform over their legal ranges.
    pub fn reset(config: &ScenarioConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stations = Vec::with_capacity(config.stations.len());
        let mut users = BTreeMap::new();
        let mut next_user_id = 0;
        for (index, spec) in config.stations.iter().enumerate() {
            let (lo, hi) = spec.kind.power_bounds();
            let mut station = StationState::new(spec.id.clone(), spec.kind, rng.random_range(lo..=hi));
            let count = rng.random_range(0..=spec.kind.capacity());
            for _ in 0..count {
                let user = UserState {
                    id: next_user_id,
                    station: index,
                    signal_dbm: draw_signal(&mut rng),
                    snr_db: draw_snr(&mut rng),
                };
                station.attached.insert(user.id);
                users.insert(user.id, user);
                next_user_id += 1;
            }
            stations.push(station);
        }
        Ok(Environment {
            traffic: config.traffic_params(),
            weights: vec![config.weights; config.stations.len()],
            config: config.clone(),
            state: EnvironmentState {
                stations,
                users,
                next_user_id,
                step_index: 0,
                rng,
            },
        })
    }

    /// Builds an environment from an explicit layout, one entry per station.
    pub fn from_layout(config: &ScenarioConfig, seed: u64, layout: &[StationLayout]) -> Result<Self> {
        config.validate()?;
        if layout.len() != config.stations.len() {
            return Err(crate::Error::Config(format!(
                "layout has {} stations, config has {}",
                layout.len(),
                config.stations.len()
            )));
        }
        let mut stations = Vec::new();
        let mut users = BTreeMap::new();
        let mut next_user_id = 0;
        for (index, (spec, entry)) in config.stations.iter().zip(layout).enumerate() {
            if entry.users.len() > spec.kind.capacity() {
                return Err(crate::Error::Config(format!(
                    "station {} layout exceeds capacity",
                    spec.id
                )));
            }
            let mut station = StationState::new(spec.id.clone(), spec.kind, entry.power_dbm);
            for &(signal, snr) in &entry.users {
                let user = UserState {
                    id: next_user_id,
                    station: index,
                    signal_dbm: clamp_signal(signal),
                    snr_db: clamp_snr(snr),
                };
                station.attached.insert(user.id);
                users.insert(user.id, user);
                next_user_id += 1;
            }
            stations.push(station);
        }
        Ok(Environment {
            traffic: config.traffic_params(),
            weights: vec![config.weights; config.stations.len()],
            config: config.clone(),
            state: EnvironmentState {
                stations,
                users,
                next_user_id,
                step_index: 0,
                rng: ChaCha8Rng::seed_from_u64(seed),
            },
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvironmentState {
        &self.state
    }

    pub fn station(&self, index: usize) -> &StationState {
        &self.state.stations[index]
    }

    pub fn stations(&self) -> &[StationState] {
        &self.state.stations
    }

    pub fn users(&self) -> &BTreeMap<UserId, UserState> {
        &self.state.users
    }

    pub fn traffic(&self) -> TrafficParams {
        self.traffic
    }

    pub fn weights(&self, station: usize) -> &RewardWeights {
        &self.weights[station]
    }

    pub fn weights_mut(&mut self, station: usize) -> &mut RewardWeights {
        &mut self.weights[station]
    }

    /// Replaces per-station weights, e.g. to carry verbal-feedback changes
    /// across episode resets.
    pub fn set_weights(&mut self, weights: Vec<RewardWeights>) {
        assert_eq!(weights.len(), self.state.stations.len());
        self.weights = weights;
    }

    /// The station a handoff from `index` targets: the other station with the
    /// most free slots, ties to the lowest index.
    pub fn neighbor_of(&self, index: usize) -> Option<usize> {
        let stations = &self.state.stations;
        (0..stations.len())
            .filter(|&j| j != index)
            .max_by(|&a, &b| {
                let free = |j: usize| stations[j].capacity() - stations[j].attached.len();
                free(a).cmp(&free(b)).then(b.cmp(&a))
            })
    }

    /// Draws the number of arrivals, then advances one step.
    pub fn step(&mut self, actions: &[Action]) -> StepOutcome {
        let arrivals = if self.traffic.arrival_rate > 0.0 {
            Poisson::new(self.traffic.arrival_rate)
                .expect("validated arrival rate")
                .sample(&mut self.state.rng) as u32
        } else {
            0
        };
        self.step_with_arrivals(actions, arrivals)
    }

    /// Advances one step with a fixed number of arrivals.
    pub fn step_with_arrivals(&mut self, actions: &[Action], arrivals: u32) -> StepOutcome {
        let n = self.state.stations.len();
        assert_eq!(actions.len(), n, "one action per station");
        let mut counters = vec![StationCounters::default(); n];

        for (index, &action) in actions.iter().enumerate() {
            self.apply_action(index, action, &mut counters[index]);
        }
        self.admit_arrivals(arrivals, &mut counters);
        self.depart(&mut counters);
        self.perturb();

        for (station, c) in self.state.stations.iter_mut().zip(&counters) {
            station.dropped_last_step = c.admission_drops;
            station.handoff_failures_last_step = c.handoff_failures;
        }
        self.state.step_index += 1;

        let rewards = (0..n)
            .map(|i| immediate_reward(&self.weights[i], &counters[i], &self.state.stations[i]))
            .collect();
        let psi = (0..n).map(|i| self.env_params(i, &counters[i])).collect();
        let dropped_admissions = counters.iter().map(|c| c.admission_drops).sum();
        let dropped_handoffs = counters.iter().map(|c| c.handoff_failures).sum();
        let dropped_requests = dropped_admissions + dropped_handoffs;
        StepOutcome {
            rewards,
            psi,
            counters,
            dropped_requests,
            dropped_admissions,
            dropped_handoffs,
            is_failure_step: dropped_requests >= 1,
        }
    }

    /// Applies one agent's action to its station.
    pub fn apply_action(&mut self, index: usize, action: Action, counters: &mut StationCounters) {
        match action {
            Action::Increase => self.shift_power(index, 1),
            Action::Decrease => self.shift_power(index, -1),
            Action::Maintain => {}
            Action::Handoff => match self.request_handoff(index) {
                HandoffResult::Accepted { .. } => {
                    counters.handoff_requests += 1;
                    counters.handoff_successes += 1;
                }
                HandoffResult::Rejected { .. } => {
                    counters.handoff_requests += 1;
                    counters.handoff_failures += 1;
                }
                HandoffResult::NoUsers => counters.wasted_actions += 1,
            },
        }
    }

    fn shift_power(&mut self, index: usize, delta: i32) {
        let station = &mut self.state.stations[index];
        let (lo, hi) = station.kind.power_bounds();
        let next = (station.power_dbm + delta).clamp(lo, hi);
        let applied = next - station.power_dbm;
        station.power_dbm = next;
        if applied != 0 {
            for id in &station.attached {
                let user = self.state.users.get_mut(id).expect("attached user exists");
                user.signal_dbm = clamp_signal(user.signal_dbm + f64::from(applied));
            }
        }
    }

    /// Hands the worst-SNR user of station `index` to its neighbor.
    pub fn request_handoff(&mut self, index: usize) -> HandoffResult {
        let Some(user_id) = self.worst_snr_user(index) else {
            return HandoffResult::NoUsers;
        };
        let Some(to) = self.neighbor_of(index) else {
            return HandoffResult::Rejected { user: user_id };
        };
        let user = &self.state.users[&user_id];
        let from_station = &self.state.stations[index];
        let to_station = &self.state.stations[to];
        if !handoff_accepted(user, from_station, to_station) {
            return HandoffResult::Rejected { user: user_id };
        }
        let projected = projected_signal(user, from_station, to_station);
        let snr = draw_snr(&mut self.state.rng);
        self.state.stations[index].attached.remove(&user_id);
        self.state.stations[to].attached.insert(user_id);
        let user = self.state.users.get_mut(&user_id).expect("user exists");
        user.station = to;
        user.signal_dbm = clamp_signal(projected);
        user.snr_db = snr;
        HandoffResult::Accepted { user: user_id, to }
    }

    fn worst_snr_user(&self, index: usize) -> Option<UserId> {
        let users = &self.state.users;
        self.state.stations[index]
            .attached
            .iter()
            .copied()
            .min_by(|a, b| users[a].snr_db.total_cmp(&users[b].snr_db).then(a.cmp(b)))
    }

    fn admit_arrivals(&mut self, arrivals: u32, counters: &mut [StationCounters]) {
        let total_share: f64 = self.config.stations.iter().map(|s| s.arrival_share).sum();
        for _ in 0..arrivals {
            let target = match self.config.routing {
                ArrivalRouting::HomeStation => {
                    let u: f64 = self.state.rng.random::<f64>() * total_share;
                    let mut acc = 0.0;
                    let mut pick = self.config.stations.len() - 1;
                    for (i, spec) in self.config.stations.iter().enumerate() {
                        acc += spec.arrival_share;
                        if u < acc {
                            pick = i;
                            break;
                        }
                    }
                    pick
                }
                ArrivalRouting::LeastLoaded => {
                    let stations = &self.state.stations;
                    (0..stations.len())
                        .min_by(|&a, &b| {
                            stations[a]
                                .load_fraction()
                                .total_cmp(&stations[b].load_fraction())
                                .then(stations[a].kind.cmp(&stations[b].kind))
                                .then(a.cmp(&b))
                        })
                        .expect("non-empty station list")
                }
            };
            let signal_dbm = draw_signal(&mut self.state.rng);
            let snr_db = draw_snr(&mut self.state.rng);
            counters[target].arrivals += 1;
            if !self.state.stations[target].has_room() {
                counters[target].admission_drops += 1;
                continue;
            }
            let id = self.state.next_user_id;
            self.state.next_user_id += 1;
            self.state.stations[target].attached.insert(id);
            self.state.users.insert(
                id,
                UserState {
                    id,
                    station: target,
                    signal_dbm,
                    snr_db,
                },
            );
            counters[target].admitted += 1;
        }
    }

    fn depart(&mut self, counters: &mut [StationCounters]) {
        let p = self.traffic.departure_prob;
        let rng = &mut self.state.rng;
        let leaving: Vec<UserId> = self
            .state
            .users
            .keys()
            .copied()
            .filter(|_| rng.random::<f64>() < p)
            .collect();
        for id in leaving {
            let user = self.state.users.remove(&id).expect("user exists");
            self.state.stations[user.station].attached.remove(&id);
            counters[user.station].departures += 1;
        }
    }

    fn perturb(&mut self) {
        let Perturbation { signal_db, snr_db } = self.config.perturbation;
        let rng = &mut self.state.rng;
        for user in self.state.users.values_mut() {
            let ds = uniform_sym(rng, signal_db);
            let dn = uniform_sym(rng, snr_db);
            user.signal_dbm = clamp_signal(user.signal_dbm + ds);
            user.snr_db = clamp_snr(user.snr_db + dn);
        }
    }

    fn env_params(&self, index: usize, c: &StationCounters) -> EnvParams {
        let station = &self.state.stations[index];
        let n = station.attached.len();
        let (mean_snr_db, mean_signal_dbm) = if n == 0 {
            (0.0, SIGNAL_RANGE_DBM.0)
        } else {
            let (snr, sig) = station.attached.iter().fold((0.0, 0.0), |(a, b), id| {
                let u = &self.state.users[id];
                (a + u.snr_db, b + u.signal_dbm)
            });
            (snr / n as f64, sig / n as f64)
        };
        EnvParams {
            mean_snr_db,
            mean_signal_dbm,
            load_fraction: station.load_fraction(),
            arrivals_this_step: c.arrivals,
            departures_this_step: c.departures,
            requests_this_step: c.requests(),
            drops_this_step: c.drops(),
        }
    }
}

/// Signal the user would see at `to`: current signal shifted by the power gap.
pub fn projected_signal(user: &UserState, from: &StationState, to: &StationState) -> f64 {
    user.signal_dbm + f64::from(to.power_dbm - from.power_dbm)
}

/// A handoff is accepted iff the target has a free slot and the projected
/// signal there beats the user's current signal.
pub fn handoff_accepted(user: &UserState, from: &StationState, to: &StationState) -> bool {
    to.has_room() && projected_signal(user, from, to) > user.signal_dbm
}

/// Classifies a station by the mean SNR of its attached users.
pub fn coverage_quality(station: &StationState, users: &BTreeMap<UserId, UserState>) -> Coverage {
    if station.attached.is_empty() {
        return Coverage::Good;
    }
    let total: f64 = station.attached.iter().map(|id| users[id].snr_db).sum();
    classify_snr(total / station.attached.len() as f64)
}

pub fn classify_snr(mean_snr_db: f64) -> Coverage {
    if mean_snr_db >= COVERAGE_GOOD_DB {
        Coverage::Good
    } else if mean_snr_db >= COVERAGE_FAIR_DB {
        Coverage::Fair
    } else {
        Coverage::Poor
    }
}

/// Immediate reward for one station after a step.
///
/// `serve * served / max(1, requests) - drop * drops - energy * normalized_power
/// + handoff * handoff_successes - wasted * wasted_actions`
pub fn immediate_reward(w: &RewardWeights, c: &StationCounters, station: &StationState) -> f64 {
    let served_ratio = f64::from(c.served()) / f64::from(c.requests().max(1));
    w.serve * served_ratio - w.drop * f64::from(c.drops()) - w.energy * station.normalized_power()
        + w.handoff * f64::from(c.handoff_successes)
        - w.wasted * f64::from(c.wasted_actions)
}

fn clamp_signal(x: f64) -> f64 {
    x.clamp(SIGNAL_RANGE_DBM.0, SIGNAL_RANGE_DBM.1)
}

fn clamp_snr(x: f64) -> f64 {
    x.clamp(SNR_RANGE_DB.0, SNR_RANGE_DB.1)
}

fn draw_signal(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(SIGNAL_RANGE_DBM.0..=SIGNAL_RANGE_DBM.1)
}

fn draw_snr(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(SNR_RANGE_DB.0..=SNR_RANGE_DB.1)
}

fn uniform_sym(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    if half_width > 0.0 {
        rng.random_range(-half_width..=half_width)
    } else {
        0.0
    }
}
