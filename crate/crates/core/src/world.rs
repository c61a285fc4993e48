//! The vertiport world: layout, clock, eVTOL kinematics, battery and schedule
//! bookkeeping.
//!
//! One [`WorldState::tick`] is one simulated step: every en-route eVTOL moves
//! straight toward its current target, the clock advances, batteries drain or
//! charge, and schedule delays are re-evaluated. Decisions (which eVTOL does
//! what) live in [`crate::env`]; this module only executes commands.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::config::{PortKind, ScenarioConfig};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::seed::{Rng, SeedStreams};

/// Window after a scheduled takeoff (or landing deadline) before delay accrues.
pub const ON_TIME_WINDOW_MIN: f64 = 5.0;
/// Landing deadline measured from airspace entry.
pub const LANDING_DEADLINE_MIN: f64 = 15.0;
/// Takeoff plans are issued this many minutes ahead (inclusive range).
pub const TAKEOFF_LEAD_MIN: (u32, u32) = (10, 20);

pub const CRUISE_DRAIN_PER_METER: f64 = 0.5;
pub const HOVER_DRAIN: f64 = 2.0;
pub const IDLE_DRAIN: f64 = 4.0;
pub const CHARGE_RATE: f64 = 10.0;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Port {
    pub id: usize,
    pub kind: PortKind,
    pub position: Vec2,
    /// Landed or inbound-reserved eVTOL.
    pub occupied_by: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WorldLayout {
    pub ports: Vec<Port>,
    pub hover_spots: Vec<Vec2>,
    pub destinations: Vec<Vec2>,
    pub airspace_entry_radius: f64,
    pub cruise_speed: f64,
}

impl WorldLayout {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            ports: cfg
                .ports
                .iter()
                .enumerate()
                .map(|(id, p)| Port {
                    id,
                    kind: p.kind,
                    position: Vec2::new(p.x, p.y),
                    occupied_by: None,
                })
                .collect(),
            hover_spots: cfg.hover_spots.iter().copied().map(Vec2::from).collect(),
            destinations: cfg.destinations.iter().copied().map(Vec2::from).collect(),
            airspace_entry_radius: cfg.airspace_entry_radius,
            cruise_speed: cfg.cruise_speed,
        }
    }

    /// Largest coordinate norm in the layout; used to scale observation positions.
    pub fn extent(&self) -> f64 {
        self.ports
            .iter()
            .map(|p| p.position.norm())
            .chain(self.hover_spots.iter().map(|h| h.norm()))
            .chain(self.destinations.iter().map(|d| d.norm()))
            .fold(self.airspace_entry_radius, f64::max)
    }

    pub fn slot_position(&self, slot: Slot) -> Vec2 {
        match slot {
            Slot::Port(p) => self.ports[p].position,
            Slot::Hover(h) => self.hover_spots[h],
        }
    }

    /// The point on the airspace boundary closest to `from`.
    pub fn entry_point(&self, from: Vec2) -> Vec2 {
        from.normalized() * self.airspace_entry_radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvtolStatus {
    IdleGround,
    Charging,
    Hovering,
    EnRouteInternal,
    EnRouteOutbound,
    AtDestination,
    EnRouteInbound,
}

impl EvtolStatus {
    pub const ALL: [EvtolStatus; 7] = [
        EvtolStatus::IdleGround,
        EvtolStatus::Charging,
        EvtolStatus::Hovering,
        EvtolStatus::EnRouteInternal,
        EvtolStatus::EnRouteOutbound,
        EvtolStatus::AtDestination,
        EvtolStatus::EnRouteInbound,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|s| *s == self).expect("listed")
    }

    pub fn is_grounded(self) -> bool {
        matches!(self, EvtolStatus::IdleGround | EvtolStatus::Charging)
    }

    pub fn is_airborne(self) -> bool {
        !self.is_grounded()
    }

    pub fn is_en_route(self) -> bool {
        matches!(
            self,
            EvtolStatus::EnRouteInternal | EvtolStatus::EnRouteOutbound | EvtolStatus::EnRouteInbound
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanKind {
    Takeoff,
    Landing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightPlan {
    pub kind: PlanKind,
    /// Takeoff time, or landing deadline once the eVTOL has entered the airspace.
    pub scheduled_minute: Option<f64>,
    pub destination_id: Option<usize>,
    pub issued_minute: f64,
    /// Landing plans only: a port landing has already been commanded.
    #[serde(default)]
    pub cleared: bool,
}

impl FlightPlan {
    /// Return leg issued on reaching a destination; the deadline is set at airspace entry.
    pub fn inbound(issued_minute: f64) -> Self {
        Self {
            kind: PlanKind::Landing,
            scheduled_minute: None,
            destination_id: None,
            issued_minute,
            cleared: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    Port(usize),
    Hover(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EVtol {
    pub id: usize,
    pub position: Vec2,
    /// Realized velocity over the last step (m/min).
    pub velocity: Vec2,
    pub battery: f64,
    pub status: EvtolStatus,
    pub plan: FlightPlan,
    pub delay_minutes: f64,
    /// Slot the eVTOL occupies or is flying to.
    pub assigned_slot: Option<Slot>,
    /// Current leg endpoint while en route.
    pub target: Option<Vec2>,
    /// Speed multiplier for the next tick (0 holds position; wind lowers it).
    pub speed_factor: f64,
    /// Cleared for one tick when the charging port fails.
    pub charger_ok: bool,
    /// Inbound eVTOL waiting on the airspace boundary for a hover spot.
    pub holding: bool,
}

impl EVtol {
    /// Unit-speed direction of travel scaled to cruise speed, ignoring holds and wind.
    pub fn intended_velocity(&self, cruise_speed: f64) -> Vec2 {
        match (self.status.is_en_route(), self.target, self.holding) {
            (true, Some(t), false) => (t - self.position).normalized() * cruise_speed,
            _ => Vec2::ZERO,
        }
    }

    pub fn movement_in_progress(&self) -> bool {
        self.status.is_en_route() && self.target.is_some() && !self.holding
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimClock {
    pub step: u32,
    pub minutes_per_step: f64,
    pub episode_steps: u32,
}

impl SimClock {
    pub fn now(&self) -> f64 {
        f64::from(self.step) * self.minutes_per_step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.episode_steps
    }
}

/// Counters of world-level events accumulated over an episode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldCounters {
    pub battery_depletions: u64,
    pub congestion_events: u64,
    pub wind_events: u64,
    pub port_failures: u64,
    pub takeoff_failures: u64,
}

/// What one tick did, per eVTOL and in aggregate.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickReport {
    pub distances: Vec<f64>,
    pub depletions: u64,
    pub congestion_events: u64,
    /// eVTOLs that touched down this tick, with the port they landed on.
    pub touchdowns: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WorldState {
    pub clock: SimClock,
    pub layout: WorldLayout,
    pub evtols: Vec<EVtol>,
    pub hover_occupancy: Vec<Option<usize>>,
    pub counters: WorldCounters,
    /// Schedule and destination draws.
    pub env_rng: Rng,
    /// Uncertainty draws, kept separate so noise does not perturb schedules.
    pub noise_rng: Rng,
}

/// Draws a takeoff plan `[10, 20]` minutes ahead to a uniform destination.
pub fn generate_takeoff_plan(now: f64, n_destinations: usize, rng: &mut Rng) -> FlightPlan {
    let lead = rng.gen_range(TAKEOFF_LEAD_MIN.0..=TAKEOFF_LEAD_MIN.1);
    let destination = rng.gen_range(0..n_destinations);
    FlightPlan {
        kind: PlanKind::Takeoff,
        scheduled_minute: Some(now + f64::from(lead)),
        destination_id: Some(destination),
        issued_minute: now,
        cleared: false,
    }
}

/// What an eVTOL did during a tick, as far as its battery is concerned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BatteryActivity {
    Cruising { distance: f64 },
    Hovering,
    IdleGround,
    Charging { port_working: bool },
}

/// Battery after one tick of `activity`, clamped to `[0, 100]`.
pub fn update_battery(battery: f64, activity: BatteryActivity) -> f64 {
    let next = match activity {
        BatteryActivity::Cruising { distance } => battery - CRUISE_DRAIN_PER_METER * distance,
        BatteryActivity::Hovering => battery - HOVER_DRAIN,
        BatteryActivity::IdleGround => battery - IDLE_DRAIN,
        BatteryActivity::Charging { port_working: true } => battery + CHARGE_RATE,
        BatteryActivity::Charging { port_working: false } => battery,
    };
    next.clamp(0.0, 100.0)
}

/// Minutes past the on-time window of the eVTOL's pending plan, or 0.
pub fn accrue_delay(evtol: &EVtol, now: f64) -> f64 {
    let window_end = match (evtol.plan.kind, evtol.plan.scheduled_minute) {
        (PlanKind::Takeoff, Some(t)) if evtol.status.is_grounded() => t + ON_TIME_WINDOW_MIN,
        (PlanKind::Landing, Some(deadline)) if evtol.status.is_airborne() => deadline + ON_TIME_WINDOW_MIN,
        _ => return 0.0,
    };
    (now - window_end).max(0.0)
}

impl WorldState {
    /// Builds the initial world: every eVTOL full, airborne near the vertiport
    /// and departing on an outbound leg to a random destination.
    pub fn new(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let streams = SeedStreams::new(seed);
        let mut env_rng = streams.rng("env");
        let noise_rng = streams.rng("noise");
        let layout = WorldLayout::from_config(cfg);
        let start_radius = 0.8 * cfg.airspace_entry_radius;
        let n = cfg.n_evtols;
        let evtols = (0..n)
            .map(|id| {
                let angle = 2.0 * std::f64::consts::PI * id as f64 / n as f64 + 0.5;
                let position = Vec2::new(angle.cos(), angle.sin()) * start_radius;
                let mut plan = generate_takeoff_plan(0.0, layout.destinations.len(), &mut env_rng);
                // Initial departures leave immediately.
                plan.scheduled_minute = Some(0.0);
                let dest = layout.destinations[plan.destination_id.expect("takeoff plans carry a destination")];
                EVtol {
                    id,
                    position,
                    velocity: Vec2::ZERO,
                    battery: 100.0,
                    status: EvtolStatus::EnRouteOutbound,
                    plan,
                    delay_minutes: 0.0,
                    assigned_slot: None,
                    target: Some(dest),
                    speed_factor: 1.0,
                    charger_ok: true,
                    holding: false,
                }
            })
            .collect();
        let hover_occupancy = vec![None; layout.hover_spots.len()];
        Ok(Self {
            clock: SimClock {
                step: 0,
                minutes_per_step: cfg.minutes_per_step,
                episode_steps: cfg.episode_steps,
            },
            layout,
            evtols,
            hover_occupancy,
            counters: WorldCounters::default(),
            env_rng,
            noise_rng,
        })
    }

    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    pub fn step_minutes(&self) -> f64 {
        self.clock.minutes_per_step
    }

    pub fn is_slot_free(&self, slot: Slot) -> bool {
        match slot {
            Slot::Port(p) => self.layout.ports[p].occupied_by.is_none(),
            Slot::Hover(h) => self.hover_occupancy[h].is_none(),
        }
    }

    fn set_slot(&mut self, slot: Slot, who: Option<usize>) {
        match slot {
            Slot::Port(p) => self.layout.ports[p].occupied_by = who,
            Slot::Hover(h) => self.hover_occupancy[h] = who,
        }
    }

    pub fn release_slot(&mut self, evtol: usize) {
        if let Some(slot) = self.evtols[evtol].assigned_slot.take() {
            self.set_slot(slot, None);
        }
    }

    /// Frees the eVTOL's current slot and reserves `slot` as its next leg target.
    pub fn route_to_slot(&mut self, evtol: usize, slot: Slot) -> Result<()> {
        if !self.is_slot_free(slot) {
            return Err(Error::Contract(format!("slot {slot:?} is taken")));
        }
        self.release_slot(evtol);
        self.set_slot(slot, Some(evtol));
        let target = self.layout.slot_position(slot);
        let e = &mut self.evtols[evtol];
        e.assigned_slot = Some(slot);
        e.target = Some(target);
        e.status = EvtolStatus::EnRouteInternal;
        e.holding = false;
        Ok(())
    }

    /// Leaves the ground toward the plan's destination.
    pub fn depart(&mut self, evtol: usize) -> Result<()> {
        let e = &self.evtols[evtol];
        let dest = match (e.status.is_grounded(), e.plan.kind, e.plan.destination_id) {
            (true, PlanKind::Takeoff, Some(d)) => self.layout.destinations[d],
            _ => return Err(Error::Contract(format!("eVTOL {evtol} cannot take off from {:?}", e.status))),
        };
        self.release_slot(evtol);
        let e = &mut self.evtols[evtol];
        e.status = EvtolStatus::EnRouteOutbound;
        e.target = Some(dest);
        Ok(())
    }

    pub fn in_airspace(&self, evtol: usize) -> bool {
        let e = &self.evtols[evtol];
        match e.status {
            EvtolStatus::AtDestination => false,
            EvtolStatus::EnRouteOutbound => e.position.norm() <= self.layout.airspace_entry_radius + 1e-9,
            EvtolStatus::EnRouteInbound => e.holding,
            _ => true,
        }
    }

    fn nearest_free_hover(&self, from: Vec2) -> Option<usize> {
        (0..self.layout.hover_spots.len())
            .filter(|&h| self.hover_occupancy[h].is_none())
            .min_by(|&a, &b| {
                let da = self.layout.hover_spots[a].distance(from);
                let db = self.layout.hover_spots[b].distance(from);
                da.total_cmp(&db).then(a.cmp(&b))
            })
    }

    /// Inbound eVTOL on the boundary: take the nearest free hover spot or hold.
    fn enter_airspace(&mut self, evtol: usize, report: &mut TickReport) {
        let pos = self.evtols[evtol].position;
        match self.nearest_free_hover(pos) {
            Some(h) => {
                self.route_to_slot(evtol, Slot::Hover(h)).expect("spot was free");
            }
            None => {
                let e = &mut self.evtols[evtol];
                if !e.holding {
                    e.holding = true;
                    self.counters.congestion_events += 1;
                    report.congestion_events += 1;
                }
                let e = &mut self.evtols[evtol];
                e.target = None;
                e.velocity = Vec2::ZERO;
            }
        }
    }

    /// Moves every en-route eVTOL one step toward its target and fires the
    /// arrival transitions. Returns the distance each eVTOL covered.
    pub fn advance_kinematics(&mut self, report: &mut TickReport) {
        let dt = self.clock.minutes_per_step;
        let arrival_minute = self.now() + dt;
        let cruise = self.layout.cruise_speed;
        report.distances = vec![0.0; self.evtols.len()];

        for i in 0..self.evtols.len() {
            // Holding eVTOLs retry the hover-spot assignment every step.
            if self.evtols[i].holding {
                self.enter_airspace(i, report);
                continue;
            }
            let e = &mut self.evtols[i];
            let Some(target) = e.target.filter(|_| e.status.is_en_route()) else {
                e.velocity = Vec2::ZERO;
                continue;
            };
            let factor = e.speed_factor.clamp(0.0, 1.0);
            let reach = cruise * dt * factor;
            let to_target = target - e.position;
            let remaining = to_target.norm();
            if remaining <= reach {
                e.position = target;
                e.velocity = if remaining > 0.0 { to_target * (1.0 / dt) } else { Vec2::ZERO };
                report.distances[i] = remaining;
                self.arrive(i, arrival_minute, report);
            } else {
                let v = to_target.normalized() * (cruise * factor);
                e.position += v * dt;
                e.velocity = v;
                report.distances[i] = reach;
            }
        }
    }

    fn arrive(&mut self, i: usize, minute: f64, report: &mut TickReport) {
        match self.evtols[i].status {
            EvtolStatus::EnRouteOutbound => {
                // Turnaround is immediate: AtDestination is transient.
                let entry = self.layout.entry_point(self.evtols[i].position);
                let e = &mut self.evtols[i];
                e.status = EvtolStatus::AtDestination;
                e.plan = FlightPlan::inbound(minute);
                e.status = EvtolStatus::EnRouteInbound;
                e.target = Some(entry);
            }
            EvtolStatus::EnRouteInbound => {
                self.evtols[i].plan.scheduled_minute = Some(minute + LANDING_DEADLINE_MIN);
                self.enter_airspace(i, report);
            }
            EvtolStatus::EnRouteInternal => {
                let slot = self.evtols[i].assigned_slot.expect("internal legs target a slot");
                let e = &mut self.evtols[i];
                e.target = None;
                e.velocity = Vec2::ZERO;
                match slot {
                    Slot::Hover(_) => e.status = EvtolStatus::Hovering,
                    Slot::Port(p) => {
                        e.status = match self.layout.ports[p].kind {
                            PortKind::Charging => EvtolStatus::Charging,
                            PortKind::Normal => EvtolStatus::IdleGround,
                        };
                        report.touchdowns.push((i, p));
                        // Completing a landing issues the next takeoff plan;
                        // ground repositioning keeps the current one.
                        if self.evtols[i].plan.kind == PlanKind::Landing {
                            let n = self.layout.destinations.len();
                            self.evtols[i].plan = generate_takeoff_plan(minute, n, &mut self.env_rng);
                        }
                    }
                }
            }
            _ => {}
        }
    }

    /// Applies one step of battery dynamics given the distances just covered.
    pub fn update_batteries(&mut self, report: &mut TickReport) {
        for (i, e) in self.evtols.iter_mut().enumerate() {
            let distance = report.distances.get(i).copied().unwrap_or(0.0);
            let activity = match e.status {
                _ if distance > 0.0 => BatteryActivity::Cruising { distance },
                EvtolStatus::Charging => BatteryActivity::Charging { port_working: e.charger_ok },
                EvtolStatus::IdleGround => BatteryActivity::IdleGround,
                _ => BatteryActivity::Hovering,
            };
            let before = e.battery;
            e.battery = update_battery(before, activity);
            if before > 0.0 && e.battery == 0.0 && e.status.is_airborne() {
                self.counters.battery_depletions += 1;
                report.depletions += 1;
            }
        }
    }

    pub fn update_delays(&mut self) {
        let now = self.now();
        for e in &mut self.evtols {
            e.delay_minutes = accrue_delay(e, now);
        }
    }

    /// One simulated step: move, advance the clock, update batteries and delays.
    /// Per-step modifiers (holds, wind, charger faults) are consumed.
    pub fn tick(&mut self) -> TickReport {
        let mut report = TickReport::default();
        self.advance_kinematics(&mut report);
        self.clock.step += 1;
        self.update_batteries(&mut report);
        self.update_delays();
        for e in &mut self.evtols {
            e.speed_factor = 1.0;
            e.charger_ok = true;
        }
        report
    }

    /// Checks battery bounds, slot bookkeeping and landed positions.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let cruise = self.layout.cruise_speed;
        for e in &self.evtols {
            if !(0.0..=100.0).contains(&e.battery) {
                return Err(format!("eVTOL {} battery {} out of range", e.id, e.battery));
            }
            if e.velocity.norm() > cruise * (1.0 + 1e-9) {
                return Err(format!("eVTOL {} exceeds cruise speed", e.id));
            }
            if let Some(slot) = e.assigned_slot {
                let owner = match slot {
                    Slot::Port(p) => self.layout.ports[p].occupied_by,
                    Slot::Hover(h) => self.hover_occupancy[h],
                };
                if owner != Some(e.id) {
                    return Err(format!("eVTOL {} holds {slot:?} owned by {owner:?}", e.id));
                }
                if e.status.is_grounded() || e.status == EvtolStatus::Hovering {
                    let at = self.layout.slot_position(slot);
                    if at.distance(e.position) > 1e-9 {
                        return Err(format!("eVTOL {} is not at its slot {slot:?}", e.id));
                    }
                }
            } else if e.status.is_grounded() || e.status == EvtolStatus::Hovering {
                return Err(format!("eVTOL {} is {:?} without a slot", e.id, e.status));
            }
        }
        let owners = self
            .layout
            .ports
            .iter()
            .map(|p| (Slot::Port(p.id), p.occupied_by))
            .chain(self.hover_occupancy.iter().enumerate().map(|(h, o)| (Slot::Hover(h), *o)));
        for (slot, owner) in owners {
            if let Some(id) = owner {
                if self.evtols.get(id).and_then(|e| e.assigned_slot) != Some(slot) {
                    return Err(format!("{slot:?} claims eVTOL {id} which is elsewhere"));
                }
            }
        }
        Ok(())
    }
}

/// Builds the initial world for `(config, seed)`.
pub fn init_world(cfg: &ScenarioConfig, seed: u64) -> Result<WorldState> {
    WorldState::new(cfg, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn default_world(seed: u64) -> WorldState {
        init_world(&ScenarioConfig::default(), seed).unwrap()
    }

    fn single_evtol_world() -> WorldState {
        let cfg = ScenarioConfig { n_evtols: 1, ..ScenarioConfig::default() };
        init_world(&cfg, 0).unwrap()
    }

    #[test]
    fn init_defaults() {
        let w = default_world(7);
        assert_eq!(w.evtols.len(), 4);
        assert!(w.evtols.iter().all(|e| e.battery == 100.0));
        assert!(w.evtols.iter().all(|e| e.status == EvtolStatus::EnRouteOutbound));
        assert!(w.evtols.iter().all(|e| e.plan.destination_id.is_some()));
        assert!(w.layout.ports.iter().all(|p| p.occupied_by.is_none()));
        assert_eq!(w.clock.step, 0);
        assert_eq!(w, default_world(7));
        w.check_invariants().unwrap();
    }

    #[test]
    fn init_respects_count() {
        let cfg = ScenarioConfig { n_evtols: 5, ..ScenarioConfig::default() };
        assert_eq!(init_world(&cfg, 1).unwrap().evtols.len(), 5);
    }

    #[test]
    fn init_rejects_bad_config() {
        let cfg = ScenarioConfig { reward_weights: vec![0.5], ..ScenarioConfig::default() };
        let err = init_world(&cfg, 1).unwrap_err();
        assert!(err.to_string().contains("reward_weights"));
    }

    #[test]
    fn linear_motion_and_snap() {
        let mut w = single_evtol_world();
        w.layout.cruise_speed = 2.0;
        let e = &mut w.evtols[0];
        e.position = Vec2::new(0.0, 0.0);
        e.status = EvtolStatus::EnRouteInternal;
        e.target = Some(Vec2::new(10.0, 0.0));
        e.assigned_slot = None;
        let mut r = TickReport::default();
        w.evtols[0].status = EvtolStatus::EnRouteOutbound;
        w.advance_kinematics(&mut r);
        assert_eq!(w.evtols[0].position, Vec2::new(2.0, 0.0));
        assert_eq!(w.evtols[0].velocity, Vec2::new(2.0, 0.0));
        assert_eq!(r.distances[0], 2.0);

        // One meter short of the destination: snap and turn around.
        w.evtols[0].position = Vec2::new(9.0, 0.0);
        let mut r = TickReport::default();
        w.advance_kinematics(&mut r);
        assert_eq!(w.evtols[0].position, Vec2::new(10.0, 0.0));
        assert_eq!(r.distances[0], 1.0);
        assert_eq!(w.evtols[0].status, EvtolStatus::EnRouteInbound);
        assert_eq!(w.evtols[0].plan.kind, PlanKind::Landing);
        assert_eq!(w.evtols[0].plan.scheduled_minute, None);
    }

    #[test]
    fn outbound_arrival_issues_return_plan() {
        let mut w = single_evtol_world();
        let dest = w.layout.destinations[w.evtols[0].plan.destination_id.unwrap()];
        w.evtols[0].position = dest + Vec2::new(1.0, 0.0);
        w.tick();
        let e = &w.evtols[0];
        assert_eq!(e.status, EvtolStatus::EnRouteInbound);
        assert_eq!(e.plan.kind, PlanKind::Landing);
        let entry = w.layout.entry_point(dest);
        assert!((e.target.unwrap().norm() - 15.0).abs() < 1e-9);
        assert!(e.target.unwrap().distance(entry) < 1e-9);
    }

    #[test]
    fn airspace_entry_assigns_hover_spot_and_deadline() {
        let mut w = single_evtol_world();
        let e = &mut w.evtols[0];
        e.status = EvtolStatus::EnRouteInbound;
        e.plan = FlightPlan::inbound(0.0);
        e.position = Vec2::new(17.0, 0.0);
        e.target = Some(Vec2::new(15.0, 0.0));
        w.clock.step = 40;
        w.tick();
        let e = &w.evtols[0];
        assert_eq!(e.status, EvtolStatus::EnRouteInternal);
        assert_eq!(e.assigned_slot, Some(Slot::Hover(0)));
        assert_eq!(e.plan.scheduled_minute, Some(41.0 + 15.0));
        assert!(w.in_airspace(0));
        w.tick();
        assert_eq!(w.evtols[0].status, EvtolStatus::Hovering);
        w.check_invariants().unwrap();
    }

    #[test]
    fn full_airspace_holds_at_boundary() {
        let mut w = single_evtol_world();
        for h in 0..w.hover_occupancy.len() {
            w.hover_occupancy[h] = Some(99);
        }
        let e = &mut w.evtols[0];
        e.status = EvtolStatus::EnRouteInbound;
        e.plan = FlightPlan::inbound(0.0);
        e.position = Vec2::new(16.0, 0.0);
        e.target = Some(Vec2::new(15.0, 0.0));
        let r = w.tick();
        assert_eq!(r.congestion_events, 1);
        let e = &w.evtols[0];
        assert_eq!(e.status, EvtolStatus::EnRouteInbound);
        assert!(e.holding);
        assert_eq!(e.velocity, Vec2::ZERO);
        // Still congested: no double counting while holding.
        let r = w.tick();
        assert_eq!(r.congestion_events, 0);
        assert_eq!(w.counters.congestion_events, 1);
        w.hover_occupancy[3] = None;
        w.tick();
        assert_eq!(w.evtols[0].assigned_slot, Some(Slot::Hover(3)));
        assert!(!w.evtols[0].holding);
    }

    #[test]
    fn battery_rules() {
        assert_eq!(update_battery(50.0, BatteryActivity::Cruising { distance: 2.0 }), 49.0);
        assert_eq!(update_battery(95.0, BatteryActivity::Charging { port_working: true }), 100.0);
        assert_eq!(update_battery(3.0, BatteryActivity::IdleGround), 0.0);
        assert_eq!(update_battery(50.0, BatteryActivity::Hovering), 48.0);
        assert_eq!(update_battery(50.0, BatteryActivity::Charging { port_working: false }), 50.0);
    }

    #[test]
    fn depletion_is_counted_once() {
        let mut w = single_evtol_world();
        w.evtols[0].battery = 1.0;
        w.tick();
        assert_eq!(w.evtols[0].battery, 0.0);
        assert_eq!(w.counters.battery_depletions, 1);
        w.tick();
        assert_eq!(w.counters.battery_depletions, 1);
    }

    #[test]
    fn takeoff_plan_window() {
        let mut rng = Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = generate_takeoff_plan(100.0, 5, &mut rng);
            let t = p.scheduled_minute.unwrap();
            assert!((110.0..=120.0).contains(&t));
            assert_eq!(t.fract(), 0.0);
        }
        let mut a = Rng::seed_from_u64(9);
        let mut b = Rng::seed_from_u64(9);
        assert_eq!(generate_takeoff_plan(5.0, 5, &mut a), generate_takeoff_plan(5.0, 5, &mut b));
    }

    #[test]
    fn takeoff_destinations_cover_all() {
        let mut rng = Rng::seed_from_u64(11);
        let mut counts = [0usize; 5];
        for _ in 0..10_000 {
            counts[generate_takeoff_plan(0.0, 5, &mut rng).destination_id.unwrap()] += 1;
        }
        // Each bin expects 2000; 5 sigma of a binomial(10000, 0.2) is 200.
        for c in counts {
            assert!((1800..=2200).contains(&c), "{counts:?}");
        }
    }

    fn grounded_with_plan(scheduled: f64) -> EVtol {
        let mut w = single_evtol_world();
        let e = &mut w.evtols[0];
        e.status = EvtolStatus::IdleGround;
        e.plan = FlightPlan {
            kind: PlanKind::Takeoff,
            scheduled_minute: Some(scheduled),
            destination_id: Some(0),
            issued_minute: scheduled - 10.0,
            cleared: false,
        };
        e.clone()
    }

    #[test]
    fn delay_accrual() {
        let e = grounded_with_plan(100.0);
        assert_eq!(accrue_delay(&e, 104.0), 0.0);
        assert_eq!(accrue_delay(&e, 110.0), 5.0);
        let mut flying = e.clone();
        flying.status = EvtolStatus::EnRouteOutbound;
        assert_eq!(accrue_delay(&flying, 110.0), 0.0);
        let mut landing = e;
        landing.status = EvtolStatus::Hovering;
        landing.plan = FlightPlan { scheduled_minute: Some(50.0), ..FlightPlan::inbound(20.0) };
        assert_eq!(accrue_delay(&landing, 55.0), 0.0);
        assert_eq!(accrue_delay(&landing, 61.5), 6.5);
    }

    #[test]
    fn delay_resets_after_takeoff() {
        let mut w = single_evtol_world();
        w.evtols[0].position = w.layout.ports[0].position;
        w.evtols[0].status = EvtolStatus::IdleGround;
        w.evtols[0].target = None;
        w.evtols[0].assigned_slot = Some(Slot::Port(0));
        w.layout.ports[0].occupied_by = Some(0);
        w.evtols[0].plan.scheduled_minute = Some(100.0);
        w.clock.step = 110;
        w.update_delays();
        assert_eq!(w.evtols[0].delay_minutes, 5.0);
        w.depart(0).unwrap();
        w.tick();
        assert_eq!(w.evtols[0].delay_minutes, 0.0);
        assert!(w.layout.ports[0].occupied_by.is_none());
    }

    #[test]
    fn landing_on_port_issues_takeoff_plan() {
        let mut w = single_evtol_world();
        w.evtols[0].plan = FlightPlan::inbound(0.0);
        w.evtols[0].plan.scheduled_minute = Some(20.0);
        w.evtols[0].position = Vec2::new(3.0, 3.0);
        w.route_to_slot(0, Slot::Port(2)).unwrap();
        w.clock.step = 10;
        let r = w.tick();
        assert_eq!(r.touchdowns, vec![(0, 2)]);
        let e = &w.evtols[0];
        assert_eq!(e.status, EvtolStatus::Charging);
        assert_eq!(e.plan.kind, PlanKind::Takeoff);
        let lead = e.plan.scheduled_minute.unwrap() - 11.0;
        assert!((10.0..=20.0).contains(&lead));
        // Charging overrides idle drain.
        let b = e.battery;
        w.tick();
        assert_eq!(w.evtols[0].battery, (b + 10.0).min(100.0));
        w.check_invariants().unwrap();
    }
}
