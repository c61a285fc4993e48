//! The vertiport as a sequential decision process.
//!
//! Each [`VertiportEnv::step`] applies one action for the currently selected
//! eVTOL and advances the world by one tick. Selection is round-robin over
//! eVTOLs inside the airspace. When none is eligible the world keeps ticking
//! without decisions until one re-enters; those transit ticks are reported
//! as extra trace records with no action attached.

pub mod action;
pub mod observation;
pub mod reward;

use std::io::Write;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use action::{Action, ActionId, ActionSpace};
pub use observation::{Observation, EVTOL_FEATURES, PORT_FEATURES};
pub use reward::{compute_reward, RewardInputs, RewardTerms};

use crate::config::{ScenarioConfig, UncertaintyConfig};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::separation::{detect_conflicts, is_collision};
use crate::world::{EvtolStatus, PlanKind, Slot, WorldState, ON_TIME_WINDOW_MIN};

/// Side effects of applying one action.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ActionEffect {
    pub took_off: bool,
    pub takeoff_failed: bool,
    /// A port landing was commanded for an eVTOL on an uncleared landing plan.
    pub landing_commanded: bool,
    pub held: bool,
}

/// Next eligible eVTOL after `previous` in id order (wrapping), or `None` if
/// every eVTOL is outside the airspace.
pub fn select_next_evtol(world: &WorldState, previous: Option<usize>) -> Option<usize> {
    let n = world.evtols.len();
    let start = previous.map_or(0, |p| p + 1);
    (0..n).map(|k| (start + k) % n).find(|&i| world.in_airspace(i))
}

/// Applies `action` to `evtol`. Takeoff failure is rolled from the noise stream
/// when uncertainty is enabled.
pub fn apply_action(
    world: &mut WorldState,
    space: &ActionSpace,
    evtol: usize,
    action: ActionId,
    uncertainty: &UncertaintyConfig,
) -> Result<ActionEffect> {
    let mask = space.mask(world, evtol);
    if !mask.get(action.0).copied().unwrap_or(false) {
        let name = if action.0 < space.len() { space.name(action) } else { "out of range" };
        return Err(Error::Contract(format!(
            "action {} ({name}) is masked for eVTOL {evtol}",
            action.0
        )));
    }
    let mut effect = ActionEffect::default();
    match space.decode(action).expect("mask covers valid ids") {
        Action::StayStill | Action::AvoidCollision => {
            if world.evtols[evtol].status.is_en_route() {
                world.evtols[evtol].speed_factor = 0.0;
                effect.held = true;
            }
        }
        Action::ContinuePrevious => {}
        Action::Takeoff => {
            if uncertainty.enabled && world.noise_rng.gen_bool(uncertainty.p_takeoff_fail) {
                world.counters.takeoff_failures += 1;
                effect.takeoff_failed = true;
            } else {
                world.depart(evtol)?;
                effect.took_off = true;
            }
        }
        Action::MoveToPort(p) => {
            let plan = &mut world.evtols[evtol].plan;
            if plan.kind == PlanKind::Landing && !plan.cleared {
                plan.cleared = true;
                effect.landing_commanded = true;
            }
            world.route_to_slot(evtol, Slot::Port(p))?;
        }
        Action::MoveToHover(h) => world.route_to_slot(evtol, Slot::Hover(h))?,
    }
    Ok(effect)
}

/// Rolls this tick's wind (moving eVTOLs) and charger failures (charging
/// eVTOLs), in eVTOL id order. No draws are made when disabled.
pub fn inject_uncertainty(world: &mut WorldState, cfg: &UncertaintyConfig) {
    if !cfg.enabled {
        return;
    }
    for i in 0..world.evtols.len() {
        if world.evtols[i].movement_in_progress() && world.noise_rng.gen_bool(cfg.p_wind) {
            let factor = if world.noise_rng.gen_bool(0.5) {
                0.0
            } else {
                world.noise_rng.gen_range(0.25..=0.75)
            };
            world.evtols[i].speed_factor *= factor;
            world.counters.wind_events += 1;
        }
        if world.evtols[i].status == EvtolStatus::Charging && world.noise_rng.gen_bool(cfg.p_port_fail) {
            world.evtols[i].charger_ok = false;
            world.counters.port_failures += 1;
        }
    }
}

/// One line of an episode trace. Every simulated tick produces exactly one
/// record; transit ticks without a decision have no eVTOL, action or terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u32,
    pub evtol: Option<usize>,
    pub action: Option<ActionId>,
    pub reward: f64,
    pub terms: Option<RewardTerms>,
    pub battery: Vec<f64>,
    pub delays: Vec<f64>,
    pub collisions: u64,
    pub near_misses: u64,
    pub depletions: u64,
    pub congestion: u64,
    pub conflict_dmin: Option<f64>,
}

pub fn write_trace_jsonl(records: &[TraceRecord], out: &mut impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<trace>", e))?;
    }
    Ok(())
}

pub fn read_trace_jsonl(text: &str) -> Result<Vec<TraceRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInfo {
    pub evtol: usize,
    pub action: ActionId,
    pub good_takeoff: bool,
    pub bad_takeoff: bool,
    pub good_landing: bool,
    pub bad_landing: bool,
    pub takeoff_failed: bool,
    /// Summed over this step's tick and any transit ticks that followed it.
    pub collisions: u64,
    pub near_misses: u64,
    pub depletions: u64,
    /// Ticks advanced by this step (1 plus transit ticks).
    pub ticks: u32,
    pub conflict_dmin: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terms: RewardTerms,
    pub done: bool,
    pub info: StepInfo,
    pub records: Vec<TraceRecord>,
}

/// Complete mutable state of a [`VertiportEnv`], for checkpointing rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSnapshot {
    pub world: WorldState,
    pub selected: usize,
    pub done: bool,
    in_collision: Vec<bool>,
    in_near_miss: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct VertiportEnv {
    cfg: ScenarioConfig,
    space: ActionSpace,
    world: WorldState,
    selected: usize,
    done: bool,
    evtol_adjacency: Arc<Matrix>,
    port_adjacency: Arc<Matrix>,
    /// Pairwise state from the previous tick, so events count once per onset.
    in_collision: Vec<bool>,
    in_near_miss: Vec<bool>,
}

impl VertiportEnv {
    /// Validates `cfg` and resets to `cfg.seed`.
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        let world = WorldState::new(&cfg, cfg.seed)?;
        let space = ActionSpace::for_world(&world);
        let n = world.evtols.len();
        let p = world.layout.ports.len() + world.layout.hover_spots.len();
        let conn = cfg.network.connectivity;
        let mut env = Self {
            evtol_adjacency: Arc::new(observation::adjacency(n, conn)),
            port_adjacency: Arc::new(observation::adjacency(p, conn)),
            cfg,
            space,
            world,
            selected: 0,
            done: false,
            in_collision: vec![false; n * n],
            in_near_miss: vec![false; n * n],
        };
        let seed = env.cfg.seed;
        env.reset(seed)?;
        Ok(env)
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        self.world = WorldState::new(&self.cfg, seed)?;
        self.done = false;
        self.in_collision.fill(false);
        self.in_near_miss.fill(false);
        self.selected = match select_next_evtol(&self.world, None) {
            Some(i) => i,
            None => {
                self.fast_forward(&mut Vec::new());
                select_next_evtol(&self.world, None).unwrap_or(0)
            }
        };
        Ok(self.observation())
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            world: self.world.clone(),
            selected: self.selected,
            done: self.done,
            in_collision: self.in_collision.clone(),
            in_near_miss: self.in_near_miss.clone(),
        }
    }

    /// Restores a snapshot taken from an environment with the same configuration.
    pub fn restore(&mut self, snap: EnvSnapshot) -> Result<()> {
        let n = self.world.evtols.len();
        if snap.world.evtols.len() != n || snap.in_collision.len() != n * n || snap.in_near_miss.len() != n * n {
            return Err(Error::Contract("snapshot was taken with a different eVTOL count".into()));
        }
        self.world = snap.world;
        self.selected = snap.selected;
        self.done = snap.done;
        self.in_collision = snap.in_collision;
        self.in_near_miss = snap.in_near_miss;
        Ok(())
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    /// Direct world access for scripted scenarios and tests.
    pub fn world_mut(&mut self) -> &mut WorldState {
        &mut self.world
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn n_actions(&self) -> usize {
        self.space.len()
    }

    pub fn selected(&self) -> usize {
        self.selected
    }

    /// Overrides the acting eVTOL (scripted scenarios).
    pub fn set_selected(&mut self, evtol: usize) {
        self.selected = evtol;
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn observation(&self) -> Observation {
        Observation {
            evtol_nodes: observation::evtol_features(&self.world),
            port_nodes: observation::port_features(&self.world),
            evtol_adjacency: Arc::clone(&self.evtol_adjacency),
            port_adjacency: Arc::clone(&self.port_adjacency),
            selected: self.selected,
        }
    }

    pub fn action_mask(&self) -> Vec<bool> {
        self.space.mask(&self.world, self.selected)
    }

    /// Advances the world one tick and records the pairwise safety events.
    fn tick(&mut self) -> TraceRecord {
        let step = self.world.clock.step;
        inject_uncertainty(&mut self.world, &self.cfg.uncertainty);
        let report = self.world.tick();
        let n = self.world.evtols.len();
        let (mut collisions, mut near_misses) = (0, 0);
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (&self.world.evtols[i], &self.world.evtols[j]);
                let colliding = is_collision(a, b, self.cfg.collision_threshold);
                let near = !colliding
                    && a.status.is_airborne()
                    && b.status.is_airborne()
                    && a.position.distance(b.position) < self.cfg.separation_threshold;
                let k = i * n + j;
                if colliding && !self.in_collision[k] {
                    collisions += 1;
                }
                if near && !self.in_near_miss[k] {
                    near_misses += 1;
                }
                self.in_collision[k] = colliding;
                self.in_near_miss[k] = near;
            }
        }
        TraceRecord {
            step,
            evtol: None,
            action: None,
            reward: 0.0,
            terms: None,
            battery: self.world.evtols.iter().map(|e| e.battery).collect(),
            delays: self.world.evtols.iter().map(|e| e.delay_minutes).collect(),
            collisions,
            near_misses,
            depletions: report.depletions,
            congestion: report.congestion_events,
            conflict_dmin: None,
        }
    }

    /// Ticks until some eVTOL is eligible or the episode ends.
    fn fast_forward(&mut self, records: &mut Vec<TraceRecord>) {
        while !self.world.clock.is_done() && select_next_evtol(&self.world, None).is_none() {
            records.push(self.tick());
        }
    }

    pub fn step(&mut self, action: ActionId) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Contract("step called after the episode finished".into()));
        }
        let i = self.selected;
        let threshold = self.cfg.battery_threshold;
        let now = self.world.now();
        let before = self.world.evtols[i].clone();
        let conflicts = detect_conflicts(
            &before,
            &self.world.evtols,
            self.cfg.separation_threshold,
            self.world.layout.cruise_speed,
        );
        let conflict_dmin = conflicts.iter().map(|c| c.d_min).reduce(f64::min);

        let effect = apply_action(&mut self.world, &self.space, i, action, &self.cfg.uncertainty)?;
        let takeoff = effect.took_off.then(|| {
            let sched = before.plan.scheduled_minute.unwrap_or(f64::NEG_INFINITY);
            (now - sched).abs() <= ON_TIME_WINDOW_MIN && before.battery > threshold
        });
        let landing = effect.landing_commanded.then(|| {
            let deadline = before.plan.scheduled_minute.unwrap_or(f64::INFINITY);
            now <= deadline + ON_TIME_WINDOW_MIN && before.battery > threshold
        });

        let mut record = self.tick();
        let after = &self.world.evtols[i];
        let avoided = self.space.decode(action) == Some(Action::AvoidCollision);
        let terms = compute_reward(
            &RewardInputs {
                takeoff,
                landing,
                battery: after.battery,
                delay_minutes: after.delay_minutes,
                conflict: conflict_dmin.is_some(),
                avoided,
            },
            &self.cfg.reward_weights,
            threshold,
        );
        record.evtol = Some(i);
        record.action = Some(action);
        record.reward = terms.total;
        record.terms = Some(terms);
        record.conflict_dmin = conflict_dmin;

        let mut records = vec![record];
        let next = select_next_evtol(&self.world, Some(i));
        match next {
            Some(n) => self.selected = n,
            None => {
                self.fast_forward(&mut records);
                self.selected = select_next_evtol(&self.world, Some(i)).unwrap_or(i);
            }
        }
        self.done = self.world.clock.is_done();

        let info = StepInfo {
            evtol: i,
            action,
            good_takeoff: takeoff == Some(true),
            bad_takeoff: takeoff == Some(false),
            good_landing: landing == Some(true),
            bad_landing: landing == Some(false),
            takeoff_failed: effect.takeoff_failed,
            collisions: records.iter().map(|r| r.collisions).sum(),
            near_misses: records.iter().map(|r| r.near_misses).sum(),
            depletions: records.iter().map(|r| r.depletions).sum(),
            ticks: records.len() as u32,
            conflict_dmin,
        };
        Ok(StepOutcome {
            observation: self.observation(),
            reward: terms.total,
            terms,
            done: self.done,
            info,
            records,
        })
    }
}

#[cfg(test)]
mod tests;
