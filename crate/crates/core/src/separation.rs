//! Closest-point-of-approach geometry between straight-line tracks, plus the
//! conflict and collision checks built on it.
//!
//! All distances are planar. The time of closest approach is clamped to the
//! future: a stationary point in the past means the tracks are diverging and
//! the current distance is already the minimum.

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::world::EVtol;

/// Position (m) and velocity (m/min) of one aircraft.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicTrack {
    pub position: Vec2,
    pub velocity: Vec2,
}

impl KinematicTrack {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self {
            position: Vec2::new(x, y),
            velocity: Vec2::new(vx, vy),
        }
    }

    pub fn at(&self, t: f64) -> Vec2 {
        self.position + self.velocity * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub other_id: usize,
    pub t_min: f64,
    pub d_min: f64,
}

/// Euclidean distance between the two tracks `t` minutes from now.
pub fn separation_at(a: &KinematicTrack, b: &KinematicTrack, t: f64) -> f64 {
    let dx = a.position.x - b.position.x + t * a.velocity.x - t * b.velocity.x;
    let dy = a.position.y - b.position.y + t * a.velocity.y - t * b.velocity.y;
    dx.hypot(dy)
}

/// Minimizer of the separation over `t >= 0`. Zero relative velocity gives 0.
pub fn time_of_closest_approach(a: &KinematicTrack, b: &KinematicTrack) -> f64 {
    let dvx = a.velocity.x - b.velocity.x;
    let dvy = a.velocity.y - b.velocity.y;
    let dx = a.position.x - b.position.x;
    let dy = a.position.y - b.position.y;
    let denom = 2.0 * dvx * dvx + 2.0 * dvy * dvy;
    if denom == 0.0 {
        return 0.0;
    }
    let t = -(2.0 * dvx * dx + 2.0 * dvy * dy) / denom;
    t.max(0.0)
}

/// `(t_min, d_min)` of the future closest approach.
pub fn min_separation(a: &KinematicTrack, b: &KinematicTrack) -> (f64, f64) {
    let t = time_of_closest_approach(a, b);
    (t, separation_at(a, b, t))
}

/// `(t_min, d_min)` of the closest approach within `[0, horizon]`.
pub fn min_separation_within(a: &KinematicTrack, b: &KinematicTrack, horizon: f64) -> (f64, f64) {
    let t = time_of_closest_approach(a, b).min(horizon);
    (t, separation_at(a, b, t))
}

pub fn track_of(e: &EVtol, cruise_speed: f64) -> KinematicTrack {
    KinematicTrack {
        position: e.position,
        velocity: e.intended_velocity(cruise_speed),
    }
}

/// Predicted conflicts between `subject` and every other en-route eVTOL.
/// Empty unless the subject itself is en route.
pub fn detect_conflicts(subject: &EVtol, others: &[EVtol], threshold: f64, cruise_speed: f64) -> Vec<ConflictReport> {
    if !subject.status.is_en_route() {
        return Vec::new();
    }
    let own = track_of(subject, cruise_speed);
    others
        .iter()
        .filter(|o| o.id != subject.id && o.status.is_en_route())
        .filter_map(|o| {
            let (t_min, d_min) = min_separation(&own, &track_of(o, cruise_speed));
            (d_min <= threshold).then_some(ConflictReport {
                other_id: o.id,
                t_min,
                d_min,
            })
        })
        .collect()
}

/// Both airborne and currently closer than `collision_threshold`.
pub fn is_collision(a: &EVtol, b: &EVtol, collision_threshold: f64) -> bool {
    a.status.is_airborne() && b.status.is_airborne() && a.position.distance(b.position) < collision_threshold
}
