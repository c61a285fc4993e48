//! Scenario configuration: JSON schema, defaults, validation and hashing.
//!
//! A single [`ScenarioConfig`] drives the world layout, reward shaping,
//! uncertainty injection, PPO hyperparameters and network sizes. Unknown
//! JSON keys are rejected; missing keys take the defaults below.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PortKind {
    Normal,
    Charging,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortSpec {
    pub kind: PortKind,
    pub x: f64,
    pub y: f64,
}

/// Action-failure probabilities applied when noise is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub p_wind: f64,
    pub p_port_fail: f64,
    pub p_takeoff_fail: f64,
    pub enabled: bool,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        Self {
            p_wind: 0.05,
            p_port_fail: 0.05,
            p_takeoff_fail: 0.05,
            enabled: false,
        }
    }
}

/// PPO hyperparameters. Defaults are the published training setup plus
/// standard PPO values for the knobs it leaves open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub max_timesteps: u64,
    pub learning_rate: f64,
    pub discount: f64,
    pub n_steps: usize,
    pub batch_size: usize,
    pub entropy_coef: f64,
    pub clip_ratio: f64,
    pub gae_lambda: f64,
    pub epochs_per_update: usize,
    pub value_coef: f64,
    /// Window (in episodes) of the moving average used for best-checkpoint selection.
    pub best_window: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            max_timesteps: 300_000,
            learning_rate: 1e-5,
            discount: 1.0,
            n_steps: 20_000,
            batch_size: 10_000,
            entropy_coef: 0.001,
            clip_ratio: 0.2,
            gae_lambda: 0.95,
            epochs_per_update: 10,
            value_coef: 0.5,
            best_window: 10,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::config("ppo.learning_rate", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::config("ppo.discount", "must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::config("ppo.gae_lambda", "must be in [0, 1]"));
        }
        if self.n_steps == 0 {
            return Err(Error::config("ppo.n_steps", "must be >= 1"));
        }
        if self.batch_size == 0 || !self.n_steps.is_multiple_of(self.batch_size) {
            return Err(Error::config(
                "ppo.batch_size",
                format!("must divide n_steps ({})", self.n_steps),
            ));
        }
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return Err(Error::config("ppo.clip_ratio", "must be in (0, 1)"));
        }
        if self.epochs_per_update == 0 {
            return Err(Error::config("ppo.epochs_per_update", "must be >= 1"));
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0) {
            return Err(Error::config("ppo.entropy_coef", "coefficients must be >= 0"));
        }
        if self.best_window == 0 {
            return Err(Error::config("ppo.best_window", "must be >= 1"));
        }
        Ok(())
    }
}

/// Edge structure of the two observation graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    /// Every node connected to every other node.
    Complete,
    /// Self-loops only; the encoders degrade to per-node MLPs.
    SelfLoops,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub gcn_hidden: usize,
    pub gcn_layers: usize,
    pub fusion_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub connectivity: Connectivity,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            gcn_hidden: 64,
            gcn_layers: 2,
            fusion_hidden: vec![128, 64],
            policy_hidden: vec![64, 32, 32],
            value_hidden: vec![32],
            connectivity: Connectivity::Complete,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gcn_hidden == 0 || self.gcn_layers == 0 {
            return Err(Error::config("network.gcn_hidden", "GCN width and depth must be >= 1"));
        }
        if self.fusion_hidden.is_empty() || self.fusion_hidden.contains(&0) {
            return Err(Error::config("network.fusion_hidden", "needs >= 1 non-zero layer width"));
        }
        if self.policy_hidden.contains(&0) {
            return Err(Error::config("network.policy_hidden", "layer widths must be >= 1"));
        }
        if self.value_hidden.contains(&0) {
            return Err(Error::config("network.value_hidden", "layer widths must be >= 1"));
        }
        Ok(())
    }
}

/// Full scenario description, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_evtols: usize,
    pub ports: Vec<PortSpec>,
    pub hover_spots: Vec<[f64; 2]>,
    pub destinations: Vec<[f64; 2]>,
    /// Meters per simulated minute.
    pub cruise_speed: f64,
    pub minutes_per_step: f64,
    pub episode_steps: u32,
    pub airspace_entry_radius: f64,
    /// Weights for (takeoff, landing, battery, delay, safety).
    pub reward_weights: Vec<f64>,
    pub battery_threshold: f64,
    pub separation_threshold: f64,
    pub collision_threshold: f64,
    pub uncertainty: UncertaintyConfig,
    pub seed: u64,
    pub ppo: PpoConfig,
    pub network: NetworkConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let hover_spots = (0..7)
            .map(|k| {
                let a = 2.0 * PI * f64::from(k) / 7.0;
                [12.0 * a.cos(), 12.0 * a.sin()]
            })
            .collect();
        let destinations = (0..5)
            .map(|k| {
                let a = 2.0 * PI * f64::from(k) / 5.0;
                [60.0 * a.cos(), 60.0 * a.sin()]
            })
            .collect();
        Self {
            n_evtols: 4,
            ports: vec![
                PortSpec { kind: PortKind::Normal, x: 0.0, y: 0.0 },
                PortSpec { kind: PortKind::Normal, x: 6.0, y: 0.0 },
                PortSpec { kind: PortKind::Charging, x: 3.0, y: 5.0 },
            ],
            hover_spots,
            destinations,
            cruise_speed: 4.0,
            minutes_per_step: 1.0,
            episode_steps: 1440,
            airspace_entry_radius: 15.0,
            reward_weights: vec![0.3, 0.3, 0.35, 0.1, 0.35],
            battery_threshold: 30.0,
            separation_threshold: 3.0,
            collision_threshold: 1.0,
            uncertainty: UncertaintyConfig::default(),
            seed: 0,
            ppo: PpoConfig::default(),
            network: NetworkConfig::default(),
        }
    }
}

fn check_prob(field: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::config(field, format!("probability {p} outside [0, 1]")))
    }
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be a positive finite number, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| {
            // serde reports unknown keys and type errors with a location; keep it.
            Error::config("<document>", e.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_pretty()).map_err(|e| Error::io(path, e))
    }

    pub fn n_ports(&self) -> usize {
        self.ports.len()
    }

    pub fn n_hover_spots(&self) -> usize {
        self.hover_spots.len()
    }

    /// StayStill, Takeoff, one per port, one per hover spot, ContinuePrevious, AvoidCollision.
    pub fn n_actions(&self) -> usize {
        4 + self.ports.len() + self.hover_spots.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_evtols == 0 {
            return Err(Error::config("n_evtols", "must be >= 1"));
        }
        if self.ports.is_empty() {
            return Err(Error::config("ports", "must list >= 1 port"));
        }
        if self.hover_spots.is_empty() {
            return Err(Error::config("hover_spots", "must list >= 1 hover spot"));
        }
        if self.destinations.is_empty() {
            return Err(Error::config("destinations", "must list >= 1 destination"));
        }
        check_positive("cruise_speed", self.cruise_speed)?;
        check_positive("minutes_per_step", self.minutes_per_step)?;
        check_positive("airspace_entry_radius", self.airspace_entry_radius)?;
        check_positive("separation_threshold", self.separation_threshold)?;
        check_positive("collision_threshold", self.collision_threshold)?;
        if self.episode_steps == 0 {
            return Err(Error::config("episode_steps", "must be >= 1"));
        }
        if !(0.0..=100.0).contains(&self.battery_threshold) {
            return Err(Error::config("battery_threshold", "must be in [0, 100]"));
        }
        if self.reward_weights.len() != 5 {
            return Err(Error::config(
                "reward_weights",
                format!("expected 5 weights, got {}", self.reward_weights.len()),
            ));
        }
        if self.reward_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::config("reward_weights", "weights must be finite"));
        }
        check_prob("uncertainty.p_wind", self.uncertainty.p_wind)?;
        check_prob("uncertainty.p_port_fail", self.uncertainty.p_port_fail)?;
        check_prob("uncertainty.p_takeoff_fail", self.uncertainty.p_takeoff_fail)?;

        let r = self.airspace_entry_radius;
        let mut all: Vec<(String, Vec2)> = Vec::new();
        for (i, p) in self.ports.iter().enumerate() {
            let v = Vec2::new(p.x, p.y);
            if !v.is_finite() || v.norm() > r {
                return Err(Error::config(format!("ports[{i}]"), "must lie inside the airspace radius"));
            }
            all.push((format!("ports[{i}]"), v));
        }
        for (i, h) in self.hover_spots.iter().enumerate() {
            let v = Vec2::from(*h);
            if !v.is_finite() || v.norm() > r {
                return Err(Error::config(
                    format!("hover_spots[{i}]"),
                    "must lie inside the airspace radius",
                ));
            }
            all.push((format!("hover_spots[{i}]"), v));
        }
        for (i, d) in self.destinations.iter().enumerate() {
            let v = Vec2::from(*d);
            if !v.is_finite() || v.norm() <= r {
                return Err(Error::config(
                    format!("destinations[{i}]"),
                    "must lie outside the airspace radius",
                ));
            }
            all.push((format!("destinations[{i}]"), v));
        }
        for i in 0..all.len() {
            for j in (i + 1)..all.len() {
                if all[i].1.distance(all[j].1) < 1e-9 {
                    return Err(Error::config(
                        all[j].0.clone(),
                        format!("coincides with {}", all[i].0),
                    ));
                }
            }
        }
        self.ppo.validate()?;
        self.network.validate()?;
        Ok(())
    }

    /// Hash of everything that shapes the environment and network. The root
    /// seed, noise switch and PPO schedule are excluded so that reports from
    /// different agents and runs on the same scenario compare cleanly.
    pub fn config_hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("seed");
            obj.remove("ppo");
            if let Some(u) = obj.get_mut("uncertainty").and_then(|u| u.as_object_mut()) {
                u.remove("enabled");
            }
        }
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_actions(), 14);
        assert_eq!(cfg.ports.iter().filter(|p| p.kind == PortKind::Normal).count(), 2);
        assert_eq!(cfg.ports.iter().filter(|p| p.kind == PortKind::Charging).count(), 1);
        assert_eq!(cfg.hover_spots.len(), 7);
        assert_eq!(cfg.destinations.len(), 5);
    }

    #[test]
    fn json_round_trip_and_partial_documents() {
        let cfg = ScenarioConfig::default();
        let back = ScenarioConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(cfg, back);
        let partial = ScenarioConfig::from_json(r#"{"n_evtols": 5, "seed": 1}"#).unwrap();
        assert_eq!(partial.n_evtols, 5);
        assert_eq!(partial.ports.len(), 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ScenarioConfig::from_json(r#"{"n_evtol": 5}"#).unwrap_err();
        assert!(err.to_string().contains("n_evtol"), "{err}");
        let err = ScenarioConfig::from_json(r#"{"uncertainty": {"p_gust": 0.1}}"#).unwrap_err();
        assert!(err.to_string().contains("p_gust"), "{err}");
    }

    #[test]
    fn validation_names_offending_field() {
        let mut cfg = ScenarioConfig::default();
        cfg.reward_weights = vec![1.0; 4];
        assert!(cfg.validate().unwrap_err().to_string().contains("reward_weights"));

        let mut cfg = ScenarioConfig::default();
        cfg.uncertainty.p_wind = 1.5;
        assert!(cfg.validate().unwrap_err().to_string().contains("uncertainty.p_wind"));

        let mut cfg = ScenarioConfig::default();
        cfg.cruise_speed = 0.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("cruise_speed"));

        let mut cfg = ScenarioConfig::default();
        cfg.n_evtols = 0;
        assert!(cfg.validate().unwrap_err().to_string().contains("n_evtols"));

        let mut cfg = ScenarioConfig::default();
        cfg.destinations[2] = [1.0, 1.0];
        assert!(cfg.validate().unwrap_err().to_string().contains("destinations[2]"));

        let mut cfg = ScenarioConfig::default();
        cfg.hover_spots[1] = [6.0, 0.0];
        assert!(cfg.validate().unwrap_err().to_string().contains("hover_spots[1]"));

        let mut cfg = ScenarioConfig::default();
        cfg.ppo.batch_size = 3000;
        assert!(cfg.validate().unwrap_err().to_string().contains("ppo.batch_size"));
    }

    #[test]
    fn hash_ignores_seed_and_noise_switch() {
        let a = ScenarioConfig::default();
        let mut b = a.clone();
        b.seed = 99;
        b.uncertainty.enabled = true;
        b.ppo.max_timesteps = 10;
        assert_eq!(a.config_hash(), b.config_hash());
        b.n_evtols = 5;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
