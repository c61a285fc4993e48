//! Closest point of approach for a few hand-built encounters, then the
//! conflicts seen by each eVTOL a few minutes into a random-agent episode.
//!
//! cargo run --example closest_approach

use vertiport::agents::{Agent, RandomAgent};
use vertiport::env::VertiportEnv;
use vertiport::separation::{detect_conflicts, min_separation, KinematicTrack};
use vertiport::ScenarioConfig;

fn main() -> vertiport::Result<()> {
    let encounters = [
        ("head-on", KinematicTrack::new(-20.0, 0.0, 4.0, 0.0), KinematicTrack::new(20.0, 0.0, -4.0, 0.0)),
        ("crossing", KinematicTrack::new(-10.0, 0.0, 4.0, 0.0), KinematicTrack::new(0.0, -12.0, 0.0, 4.0)),
        ("diverging", KinematicTrack::new(0.0, 0.0, -4.0, 0.0), KinematicTrack::new(5.0, 0.0, 4.0, 0.0)),
        ("parallel", KinematicTrack::new(0.0, 0.0, 4.0, 0.0), KinematicTrack::new(0.0, 2.5, 4.0, 0.0)),
    ];
    for (name, a, b) in &encounters {
        let (t, d) = min_separation(a, b);
        println!("{name:<10} t_min {t:>6.2} min  d_min {d:>6.2} m");
    }

    let cfg = ScenarioConfig::default();
    let threshold = cfg.separation_threshold;
    let cruise = cfg.cruise_speed;
    let mut env = VertiportEnv::new(cfg)?;
    env.reset(11)?;
    let mut agent = RandomAgent::new(11);
    let mut reported = 0;
    while !env.is_done() && reported < 5 {
        let world = env.world();
        for e in &world.evtols {
            for c in detect_conflicts(e, &world.evtols, threshold, cruise) {
                println!(
                    "minute {:>6.1}: eVTOL {} vs {} closest {:.2} m in {:.2} min",
                    world.now(),
                    e.id,
                    c.other_id,
                    c.d_min,
                    c.t_min
                );
                reported += 1;
            }
        }
        let a = agent.act(&env)?;
        env.step(a)?;
    }
    Ok(())
}
