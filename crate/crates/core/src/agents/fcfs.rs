//! First-come-first-served queue baseline.
//!
//! Three queues are kept in arrival order: eVTOLs waiting to take off,
//! grounded eVTOLs that need a charge, and airborne eVTOLs waiting to land.
//! Only the head of a queue is served; everyone else holds or hovers.

use std::collections::VecDeque;

use super::Agent;
use crate::config::PortKind;
use crate::env::{Action, ActionId, ActionSpace, VertiportEnv};
use crate::error::Result;
use crate::world::{EvtolStatus, PlanKind, Slot, WorldState, ON_TIME_WINDOW_MIN};

/// Battery level below which an eVTOL charges before flying and lands at the charger.
pub const CHARGE_LEVEL: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Queue {
    Takeoff,
    Charge,
    Landing,
}

#[derive(Debug, Clone, Default)]
pub struct FcfsAgent {
    takeoff: VecDeque<usize>,
    charge: VecDeque<usize>,
    landing: VecDeque<usize>,
}

fn queue_for(world: &WorldState, i: usize) -> Option<Queue> {
    let e = &world.evtols[i];
    if e.status.is_grounded() {
        if e.battery < CHARGE_LEVEL {
            Some(Queue::Charge)
        } else {
            Some(Queue::Takeoff)
        }
    } else if world.in_airspace(i)
        && e.status != EvtolStatus::EnRouteOutbound
        && e.plan.kind == PlanKind::Landing
        && !e.plan.cleared
    {
        Some(Queue::Landing)
    } else {
        None
    }
}

impl FcfsAgent {
    pub fn new() -> Self {
        Self::default()
    }

    fn queue(&mut self, q: Queue) -> &mut VecDeque<usize> {
        match q {
            Queue::Takeoff => &mut self.takeoff,
            Queue::Charge => &mut self.charge,
            Queue::Landing => &mut self.landing,
        }
    }

    /// Moves every eVTOL into the queue matching its state, keeping the
    /// order of those already queued.
    fn sync(&mut self, world: &WorldState) {
        for q in [Queue::Takeoff, Queue::Charge, Queue::Landing] {
            self.queue(q).retain(|&i| queue_for(world, i) == Some(q));
        }
        for i in 0..world.evtols.len() {
            if let Some(q) = queue_for(world, i) {
                if !self.queue(q).contains(&i) {
                    self.queue(q).push_back(i);
                }
            }
        }
    }

    /// Action for the selected eVTOL of `world` given `mask`.
    pub fn decide(&mut self, world: &WorldState, space: &ActionSpace, evtol: usize, mask: &[bool]) -> ActionId {
        self.sync(world);
        let choice = self.rule(world, space, evtol);
        if mask[choice.0] {
            choice
        } else {
            space.encode(Action::StayStill)
        }
    }

    fn rule(&self, world: &WorldState, space: &ActionSpace, i: usize) -> ActionId {
        let e = &world.evtols[i];
        let stay = space.encode(Action::StayStill);
        if e.movement_in_progress() {
            return space.encode(Action::ContinuePrevious);
        }
        let free_port = |kind: PortKind| {
            world
                .layout
                .ports
                .iter()
                .find(|p| p.kind == kind && world.is_slot_free(Slot::Port(p.id)))
                .map(|p| p.id)
        };
        match queue_for(world, i) {
            Some(Queue::Takeoff) => {
                let due = e.plan.scheduled_minute.is_some_and(|s| world.now() >= s - ON_TIME_WINDOW_MIN);
                if self.takeoff.front() == Some(&i) && due && e.plan.kind == PlanKind::Takeoff {
                    space.encode(Action::Takeoff)
                } else {
                    stay
                }
            }
            Some(Queue::Charge) => {
                if e.status == EvtolStatus::Charging || self.charge.front() != Some(&i) {
                    return stay;
                }
                free_port(PortKind::Charging).map_or(stay, |p| space.port_action(p))
            }
            Some(Queue::Landing) => {
                let hover = || {
                    if e.status == EvtolStatus::Hovering {
                        stay
                    } else {
                        nearest_free_hover(world, i).map_or(stay, |h| space.hover_action(h))
                    }
                };
                if self.landing.front() != Some(&i) {
                    return hover();
                }
                let port = if e.battery < CHARGE_LEVEL {
                    free_port(PortKind::Charging).or_else(|| free_port(PortKind::Normal))
                } else {
                    free_port(PortKind::Normal)
                };
                port.map_or_else(hover, |p| space.port_action(p))
            }
            None => stay,
        }
    }
}

fn nearest_free_hover(world: &WorldState, i: usize) -> Option<usize> {
    let pos = world.evtols[i].position;
    (0..world.layout.hover_spots.len())
        .filter(|&h| world.is_slot_free(Slot::Hover(h)))
        .min_by(|&a, &b| {
            let da = world.layout.hover_spots[a].distance(pos);
            let db = world.layout.hover_spots[b].distance(pos);
            da.total_cmp(&db).then(a.cmp(&b))
        })
}

impl Agent for FcfsAgent {
    fn name(&self) -> &str {
        "fcfs"
    }

    fn reset(&mut self, _seed: u64) {
        *self = Self::default();
    }

    fn act(&mut self, env: &VertiportEnv) -> Result<ActionId> {
        let mask = env.action_mask();
        Ok(self.decide(env.world(), env.action_space(), env.selected(), &mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioConfig;
    use crate::geom::Vec2;
    use crate::world::{generate_takeoff_plan, FlightPlan};

    fn park(world: &mut WorldState, i: usize, slot: Slot, status: EvtolStatus) {
        world.release_slot(i);
        match slot {
            Slot::Port(p) => world.layout.ports[p].occupied_by = Some(i),
            Slot::Hover(h) => world.hover_occupancy[h] = Some(i),
        }
        let pos = world.layout.slot_position(slot);
        let e = &mut world.evtols[i];
        e.assigned_slot = Some(slot);
        e.position = pos;
        e.status = status;
        e.target = None;
        e.holding = false;
    }

    fn send_away(world: &mut WorldState, i: usize) {
        world.release_slot(i);
        let e = &mut world.evtols[i];
        e.status = EvtolStatus::EnRouteOutbound;
        e.position = Vec2::new(40.0, 0.0);
        e.target = Some(Vec2::new(60.0, 0.0));
    }

    /// eVTOL 0 on normal port 1, everyone else far outside the airspace.
    fn lone_landed(battery: f64) -> VertiportEnv {
        let mut env = VertiportEnv::new(ScenarioConfig::default()).unwrap();
        let w = env.world_mut();
        for i in 1..4 {
            send_away(w, i);
        }
        park(w, 0, Slot::Port(0), EvtolStatus::IdleGround);
        w.evtols[0].battery = battery;
        let mut rng = w.env_rng.clone();
        w.evtols[0].plan = generate_takeoff_plan(w.now() - 10.0, 5, &mut rng);
        w.evtols[0].plan.scheduled_minute = Some(w.now());
        env.set_selected(0);
        env
    }

    #[test]
    fn low_battery_goes_to_charger() {
        let env = lone_landed(45.0);
        let a = FcfsAgent::new().act(&env).unwrap();
        assert_eq!(env.action_space().decode(a), Some(Action::MoveToPort(2)));
    }

    #[test]
    fn charged_head_takes_off_on_schedule() {
        let env = lone_landed(65.0);
        let a = FcfsAgent::new().act(&env).unwrap();
        assert_eq!(env.action_space().decode(a), Some(Action::Takeoff));
    }

    #[test]
    fn second_in_takeoff_queue_waits() {
        let mut env = lone_landed(65.0);
        let w = env.world_mut();
        park(w, 1, Slot::Port(1), EvtolStatus::IdleGround);
        w.evtols[1].battery = 90.0;
        w.evtols[1].plan = w.evtols[0].plan;
        let mut agent = FcfsAgent::new();
        env.set_selected(1);
        assert_eq!(env.action_space().decode(agent.act(&env).unwrap()), Some(Action::StayStill));
        env.set_selected(0);
        assert_eq!(env.action_space().decode(agent.act(&env).unwrap()), Some(Action::Takeoff));
    }

    #[test]
    fn waits_at_hover_spot_when_ports_are_full() {
        let mut env = VertiportEnv::new(ScenarioConfig::default()).unwrap();
        let w = env.world_mut();
        for (i, p) in [(1, 0), (2, 1), (3, 2)] {
            park(w, i, Slot::Port(p), EvtolStatus::IdleGround);
            w.evtols[i].battery = 50.0;
        }
        // eVTOL 0 holds on the boundary with one hover spot open.
        w.release_slot(0);
        let e = &mut w.evtols[0];
        e.status = EvtolStatus::EnRouteInbound;
        e.holding = true;
        e.target = None;
        e.position = Vec2::new(15.0, 0.0);
        e.plan = FlightPlan::inbound(0.0);
        e.battery = 80.0;
        env.set_selected(0);
        let a = FcfsAgent::new().act(&env).unwrap();
        assert_eq!(env.action_space().decode(a), Some(Action::MoveToHover(0)));
    }

    #[test]
    fn never_picks_masked_actions_over_an_episode() {
        let mut env = VertiportEnv::new(ScenarioConfig::default()).unwrap();
        let mut agent = FcfsAgent::new();
        agent.reset(0);
        let mut takeoffs = 0;
        while !env.is_done() {
            let a = agent.act(&env).unwrap();
            assert!(env.action_mask()[a.0]);
            let out = env.step(a).unwrap();
            takeoffs += usize::from(out.info.good_takeoff || out.info.bad_takeoff);
        }
        assert!(takeoffs > 0);
    }

    #[test]
    fn queue_heads_follow_arrival_order() {
        let env = VertiportEnv::new(ScenarioConfig::default()).unwrap();
        let mut agent = FcfsAgent::new();
        agent.sync(env.world());
        let total = agent.takeoff.len() + agent.charge.len() + agent.landing.len();
        let grounded = env.world().evtols.iter().filter(|e| e.status.is_grounded()).count();
        assert!(total >= grounded);
        let ids: Vec<usize> = agent.takeoff.iter().copied().collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        assert_eq!(ids, sorted);
    }
}
