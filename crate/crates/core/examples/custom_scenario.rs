//! A larger scenario defined in code and saved as JSON: six eVTOLs and a
//! second charging port. Steps it by hand and prints what the agent sees.
//!
//! cargo run --example custom_scenario -- [scenario.json]

use vertiport::config::{PortKind, PortSpec};
use vertiport::env::{ActionId, VertiportEnv};
use vertiport::ScenarioConfig;

fn main() -> vertiport::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "scenario.json".into());
    let mut cfg = ScenarioConfig {
        n_evtols: 6,
        ..ScenarioConfig::default()
    };
    cfg.ports.push(PortSpec {
        kind: PortKind::Charging,
        x: 3.0,
        y: -5.0,
    });
    cfg.validate()?;
    cfg.save(&path)?;
    let cfg = ScenarioConfig::load(&path)?;
    println!("saved {path}, config hash {}", cfg.config_hash());

    let mut env = VertiportEnv::new(cfg)?;
    let obs = env.reset(0)?;
    println!(
        "{} actions; eVTOL graph {}x{}, port graph {}x{}",
        env.n_actions(),
        obs.evtol_nodes.rows(),
        obs.evtol_nodes.cols(),
        obs.port_nodes.rows(),
        obs.port_nodes.cols()
    );
    for _ in 0..8 {
        let mask = env.action_mask();
        let allowed: Vec<String> = env
            .action_space()
            .ids()
            .filter(|a| mask[a.0])
            .map(|a| env.action_space().name(a).to_string())
            .collect();
        let i = env.selected();
        let action = ActionId(mask.iter().rposition(|&m| m).expect("some action is always allowed"));
        let out = env.step(action)?;
        println!(
            "eVTOL {i} may {allowed:?}; took {} -> reward {:.3}",
            env.action_space().name(action),
            out.reward
        );
    }
    Ok(())
}
