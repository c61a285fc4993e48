use std::sync::Arc;

use crate::config::{Connectivity, PortKind};
use crate::nn::Matrix;
use crate::world::{EvtolStatus, WorldState};

/// eVTOL node features: battery, status one-hot, delay, x, y, schedule offset.
pub const EVTOL_FEATURES: usize = 1 + EvtolStatus::ALL.len() + 1 + 2 + 1;
/// Port-graph node features: availability, kind one-hot (normal, charging, hover), x, y.
pub const PORT_FEATURES: usize = 1 + 3 + 2;
/// Delay and schedule offsets are divided by this many minutes.
pub const TIME_SCALE_MIN: f64 = 60.0;

/// Graph view of the world for the acting eVTOL. Adjacencies are 0/1 with
/// self-loops; normalization is left to the consumer.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub evtol_nodes: Matrix,
    pub port_nodes: Matrix,
    pub evtol_adjacency: Arc<Matrix>,
    pub port_adjacency: Arc<Matrix>,
    pub selected: usize,
}

pub fn adjacency(n: usize, connectivity: Connectivity) -> Matrix {
    match connectivity {
        Connectivity::Complete => Matrix::filled(n, n, 1.0),
        Connectivity::SelfLoops => Matrix::identity(n),
    }
}

pub fn evtol_features(world: &WorldState) -> Matrix {
    let extent = world.layout.extent();
    let now = world.now();
    let mut m = Matrix::zeros(world.evtols.len(), EVTOL_FEATURES);
    for (i, e) in world.evtols.iter().enumerate() {
        m[(i, 0)] = e.battery / 100.0;
        m[(i, 1 + e.status.index())] = 1.0;
        let base = 1 + EvtolStatus::ALL.len();
        m[(i, base)] = (e.delay_minutes / TIME_SCALE_MIN).clamp(0.0, 1.0);
        m[(i, base + 1)] = (e.position.x / extent).clamp(-1.0, 1.0);
        m[(i, base + 2)] = (e.position.y / extent).clamp(-1.0, 1.0);
        m[(i, base + 3)] = e
            .plan
            .scheduled_minute
            .map_or(0.0, |s| ((s - now) / TIME_SCALE_MIN).clamp(-1.0, 1.0));
    }
    m
}

/// Ports first, then hover spots.
pub fn port_features(world: &WorldState) -> Matrix {
    let extent = world.layout.extent();
    let n = world.layout.ports.len() + world.layout.hover_spots.len();
    let mut m = Matrix::zeros(n, PORT_FEATURES);
    for (i, p) in world.layout.ports.iter().enumerate() {
        m[(i, 0)] = f64::from(u8::from(p.occupied_by.is_none()));
        m[(i, 1)] = f64::from(u8::from(p.kind == PortKind::Normal));
        m[(i, 2)] = f64::from(u8::from(p.kind == PortKind::Charging));
        m[(i, 4)] = p.position.x / extent;
        m[(i, 5)] = p.position.y / extent;
    }
    let off = world.layout.ports.len();
    for (h, pos) in world.layout.hover_spots.iter().enumerate() {
        m[(off + h, 0)] = f64::from(u8::from(world.hover_occupancy[h].is_none()));
        m[(off + h, 3)] = 1.0;
        m[(off + h, 4)] = pos.x / extent;
        m[(off + h, 5)] = pos.y / extent;
    }
    m
}
