use serde::{Deserialize, Serialize};

use crate::env::reward::EVENT_REWARD;
use crate::env::TraceRecord;

/// Report metric names, in report order.
pub const METRIC_NAMES: [&str; 9] = [
    "total_reward",
    "mean_battery",
    "good_takeoffs",
    "good_landings",
    "mean_delay_hours",
    "collisions",
    "near_misses",
    "battery_depletions",
    "congestion_events",
];

/// Whether a larger value of `metric` ranks better.
pub fn higher_is_better(metric: &str) -> bool {
    matches!(metric, "total_reward" | "mean_battery" | "good_takeoffs" | "good_landings")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub noise: bool,
    pub total_reward: f64,
    /// Mean over ticks of the fleet-average battery, percent.
    pub mean_battery: f64,
    pub good_takeoffs: u64,
    pub good_landings: u64,
    /// Mean over ticks of the fleet-average delay, hours.
    pub mean_delay_hours: f64,
    pub collisions: u64,
    pub near_misses: u64,
    pub battery_depletions: u64,
    pub congestion_events: u64,
    pub decisions: u64,
    pub ticks: u64,
}

impl EpisodeMetrics {
    pub fn values(&self) -> [f64; 9] {
        [
            self.total_reward,
            self.mean_battery,
            self.good_takeoffs as f64,
            self.good_landings as f64,
            self.mean_delay_hours,
            self.collisions as f64,
            self.near_misses as f64,
            self.battery_depletions as f64,
            self.congestion_events as f64,
        ]
    }

    pub fn value(&self, metric: &str) -> Option<f64> {
        METRIC_NAMES.iter().position(|m| *m == metric).map(|i| self.values()[i])
    }

    pub fn from_trace(records: &[TraceRecord], seed: u64, noise: bool) -> Self {
        let mut acc = EpisodeAccumulator::default();
        for r in records {
            acc.observe(r);
        }
        acc.finish(seed, noise)
    }
}

/// Running episode totals fed one trace record at a time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeAccumulator {
    total_reward: f64,
    battery_sum: f64,
    delay_sum: f64,
    good_takeoffs: u64,
    good_landings: u64,
    collisions: u64,
    near_misses: u64,
    depletions: u64,
    congestion: u64,
    decisions: u64,
    ticks: u64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

impl EpisodeAccumulator {
    pub fn observe(&mut self, r: &TraceRecord) {
        self.total_reward += r.reward;
        self.battery_sum += mean(&r.battery);
        self.delay_sum += mean(&r.delays);
        if let Some(t) = &r.terms {
            self.good_takeoffs += u64::from(t.tau == EVENT_REWARD);
            self.good_landings += u64::from(t.gamma == EVENT_REWARD);
        }
        self.collisions += r.collisions;
        self.near_misses += r.near_misses;
        self.depletions += r.depletions;
        self.congestion += r.congestion;
        self.decisions += u64::from(r.action.is_some());
        self.ticks += 1;
    }

    pub fn total_reward(&self) -> f64 {
        self.total_reward
    }

    pub fn finish(&self, seed: u64, noise: bool) -> EpisodeMetrics {
        let ticks = self.ticks.max(1) as f64;
        EpisodeMetrics {
            seed,
            noise,
            total_reward: self.total_reward,
            mean_battery: self.battery_sum / ticks,
            good_takeoffs: self.good_takeoffs,
            good_landings: self.good_landings,
            mean_delay_hours: self.delay_sum / ticks / 60.0,
            collisions: self.collisions,
            near_misses: self.near_misses,
            battery_depletions: self.depletions,
            congestion_events: self.congestion,
            decisions: self.decisions,
            ticks: self.ticks,
        }
    }
}
