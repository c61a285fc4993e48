//! Case studies of a trained policy against FCFS, clean and with uncertainty.
//! Expects a run directory written by `train_smoke` or `vertiport train`.
//!
//! cargo run --release --example evaluate_checkpoint -- [run_dir] [episodes]

use std::path::PathBuf;

use rand::SeedableRng;

use vertiport::agents::policy::GrlPolicy;
use vertiport::agents::train::{BEST_CHECKPOINT, CONFIG_FILE};
use vertiport::agents::{Agent, FcfsAgent, GrlAgent};
use vertiport::eval::{compare_agents, run_case_study, CaseStudy};
use vertiport::nn::load_into;
use vertiport::seed::Rng;
use vertiport::ScenarioConfig;

fn main() -> vertiport::Result<()> {
    let mut args = std::env::args().skip(1);
    let run = PathBuf::from(args.next().unwrap_or_else(|| "runs/smoke".into()));
    let episodes = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);

    let cfg = ScenarioConfig::load(run.join(CONFIG_FILE))?;
    let mut policy = GrlPolicy::new(&cfg.network, cfg.n_actions(), &mut Rng::seed_from_u64(0))?;
    load_into(policy.params_mut(), run.join(BEST_CHECKPOINT), Some(&cfg.config_hash()))?;

    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut reports = Vec::new();
    for noise in [false, true] {
        let study = CaseStudy {
            n_episodes: episodes,
            noise,
            workers,
            ..CaseStudy::default()
        };
        let grl = run_case_study(&cfg, &study, || Ok(Box::new(GrlAgent::new(policy.clone())) as Box<dyn Agent>))?;
        reports.push(grl.report);
        reports.push(run_case_study(&cfg, &study, || Ok(Box::new(FcfsAgent::new()) as Box<dyn Agent>))?.report);
    }
    print!("{}", compare_agents(&reports)?.to_text());
    Ok(())
}
