use serde::{Deserialize, Serialize};

/// Value of every nonzero event coefficient.
pub const EVENT_REWARD: f64 = 5.0;

/// The five reward coefficients and their weighted sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub tau: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub beta: f64,
    pub safety: f64,
    pub total: f64,
}

impl RewardTerms {
    pub fn as_array(&self) -> [f64; 5] {
        [self.tau, self.gamma, self.lambda, self.beta, self.safety]
    }

    pub fn weighted_sum(&self, weights: &[f64]) -> f64 {
        self.as_array().iter().zip(weights).map(|(t, w)| t * w).sum()
    }
}

/// What happened on a step, from the acting eVTOL's point of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    /// `Some(good)` when a takeoff happened this step.
    pub takeoff: Option<bool>,
    /// `Some(good)` when a landing was commanded this step.
    pub landing: Option<bool>,
    pub battery: f64,
    pub delay_minutes: f64,
    pub conflict: bool,
    pub avoided: bool,
}

/// +5 for a good event, -5 for a bad one, 0 when nothing happened.
pub fn event_coefficient(event: Option<bool>) -> f64 {
    match event {
        Some(true) => EVENT_REWARD,
        Some(false) => -EVENT_REWARD,
        None => 0.0,
    }
}

/// `5 * battery / 100` at or above the threshold, -5 below it.
pub fn battery_coefficient(battery: f64, threshold: f64) -> f64 {
    if battery >= threshold {
        EVENT_REWARD * battery / 100.0
    } else {
        -EVENT_REWARD
    }
}

/// `-5 + 10 exp(-delay)`, delay in minutes.
pub fn delay_coefficient(delay_minutes: f64) -> f64 {
    -EVENT_REWARD + 2.0 * EVENT_REWARD * (-delay_minutes).exp()
}

pub fn safety_coefficient(conflict: bool, avoided: bool) -> f64 {
    match (conflict, avoided) {
        (false, _) => 0.0,
        (true, true) => EVENT_REWARD,
        (true, false) => -EVENT_REWARD,
    }
}

pub fn compute_reward(inputs: &RewardInputs, weights: &[f64], battery_threshold: f64) -> RewardTerms {
    let mut terms = RewardTerms {
        tau: event_coefficient(inputs.takeoff),
        gamma: event_coefficient(inputs.landing),
        lambda: battery_coefficient(inputs.battery, battery_threshold),
        beta: delay_coefficient(inputs.delay_minutes),
        safety: safety_coefficient(inputs.conflict, inputs.avoided),
        total: 0.0,
    };
    terms.total = terms.weighted_sum(weights);
    terms
}
