//! FCFS and random baselines on shared episode seeds, with and without
//! uncertainty, ranked side by side.
//!
//! cargo run --release --example baselines -- [episodes]

use vertiport::agents::{Agent, FcfsAgent, RandomAgent};
use vertiport::eval::{compare_agents, run_case_study, CaseStudy};
use vertiport::ScenarioConfig;

fn main() -> vertiport::Result<()> {
    let episodes = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let cfg = ScenarioConfig::default();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut reports = Vec::new();
    for noise in [false, true] {
        let study = CaseStudy {
            n_episodes: episodes,
            noise,
            workers,
            ..CaseStudy::default()
        };
        reports.push(run_case_study(&cfg, &study, || Ok(Box::new(FcfsAgent::new()) as Box<dyn Agent>))?.report);
        reports.push(run_case_study(&cfg, &study, || Ok(Box::new(RandomAgent::new(0)) as Box<dyn Agent>))?.report);
    }
    print!("{}", compare_agents(&reports)?.to_text());
    Ok(())
}
