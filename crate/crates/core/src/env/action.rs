use serde::{Deserialize, Serialize};

use crate::config::PortKind;
use crate::world::{EvtolStatus, PlanKind, Slot, WorldState};

/// Index into the discrete action list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

/// Decoded action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    StayStill,
    Takeoff,
    MoveToPort(usize),
    MoveToHover(usize),
    ContinuePrevious,
    AvoidCollision,
}

/// Layout of the action list: `StayStill, Takeoff, ports..., hover spots...,
/// ContinuePrevious, AvoidCollision`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    n_ports: usize,
    n_hover: usize,
    names: Vec<String>,
}

impl ActionSpace {
    pub fn new(port_kinds: &[PortKind], n_hover: usize) -> Self {
        let mut names = vec!["StayStill".to_string(), "Takeoff".to_string()];
        let n_charging = port_kinds.iter().filter(|k| **k == PortKind::Charging).count();
        let (mut normal, mut charging) = (0, 0);
        for kind in port_kinds {
            names.push(match kind {
                PortKind::Normal => {
                    normal += 1;
                    format!("MoveLandNormalPort{normal}")
                }
                PortKind::Charging => {
                    charging += 1;
                    if n_charging == 1 {
                        "MoveLandBatteryPort".to_string()
                    } else {
                        format!("MoveLandBatteryPort{charging}")
                    }
                }
            });
        }
        names.extend((1..=n_hover).map(|h| format!("MoveToHoverSpot{h}")));
        names.push("ContinuePrevious".into());
        names.push("AvoidCollision".into());
        Self {
            n_ports: port_kinds.len(),
            n_hover,
            names,
        }
    }

    pub fn for_world(world: &WorldState) -> Self {
        let kinds: Vec<PortKind> = world.layout.ports.iter().map(|p| p.kind).collect();
        Self::new(&kinds, world.layout.hover_spots.len())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ActionId> {
        (0..self.len()).map(ActionId)
    }

    pub fn name(&self, id: ActionId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn decode(&self, id: ActionId) -> Option<Action> {
        let i = id.0;
        let hover_start = 2 + self.n_ports;
        let tail = hover_start + self.n_hover;
        Some(match i {
            0 => Action::StayStill,
            1 => Action::Takeoff,
            _ if i < hover_start => Action::MoveToPort(i - 2),
            _ if i < tail => Action::MoveToHover(i - hover_start),
            _ if i == tail => Action::ContinuePrevious,
            _ if i == tail + 1 => Action::AvoidCollision,
            _ => return None,
        })
    }

    pub fn encode(&self, action: Action) -> ActionId {
        ActionId(match action {
            Action::StayStill => 0,
            Action::Takeoff => 1,
            Action::MoveToPort(p) => 2 + p,
            Action::MoveToHover(h) => 2 + self.n_ports + h,
            Action::ContinuePrevious => 2 + self.n_ports + self.n_hover,
            Action::AvoidCollision => 3 + self.n_ports + self.n_hover,
        })
    }

    pub fn port_action(&self, port: usize) -> ActionId {
        self.encode(Action::MoveToPort(port))
    }

    pub fn hover_action(&self, spot: usize) -> ActionId {
        self.encode(Action::MoveToHover(spot))
    }

    /// Feasibility of every action for eVTOL `evtol`.
    ///
    /// - Takeoff: on the ground with a takeoff plan.
    /// - Port moves: the port is free and the eVTOL is either on the ground
    ///   (repositioning, e.g. to the charger) or airborne inside the airspace
    ///   and not departing.
    /// - Hover moves: the spot is free and the eVTOL is airborne inside the
    ///   airspace on a landing plan.
    /// - ContinuePrevious: a leg is in progress.
    /// - AvoidCollision: airborne.
    /// - StayStill: always.
    pub fn mask(&self, world: &WorldState, evtol: usize) -> Vec<bool> {
        let e = &world.evtols[evtol];
        let grounded = e.status.is_grounded();
        let inside = world.in_airspace(evtol);
        let airborne_inside = e.status.is_airborne() && inside && e.status != EvtolStatus::EnRouteOutbound;
        let mut mask = vec![false; self.len()];
        mask[0] = true;
        mask[1] = grounded && e.plan.kind == PlanKind::Takeoff && e.plan.destination_id.is_some();
        for p in 0..self.n_ports {
            mask[2 + p] = (grounded || airborne_inside) && world.is_slot_free(Slot::Port(p));
        }
        for h in 0..self.n_hover {
            mask[2 + self.n_ports + h] =
                airborne_inside && e.plan.kind == PlanKind::Landing && world.is_slot_free(Slot::Hover(h));
        }
        mask[2 + self.n_ports + self.n_hover] = e.movement_in_progress();
        mask[3 + self.n_ports + self.n_hover] = e.status.is_airborne();
        mask
    }
}
