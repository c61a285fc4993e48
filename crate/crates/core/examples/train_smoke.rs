//! Short PPO training run on the default scenario, then a comparison of the
//! first and last few episode rewards.
//!
//! cargo run --release --example train_smoke -- [out_dir] [seed]

use vertiport::agents::train::{read_training_log, smoke_ppo_config, train, TrainOptions};
use vertiport::ScenarioConfig;

fn main() -> vertiport::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "runs/smoke".into());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let cfg = ScenarioConfig {
        seed,
        ppo: smoke_ppo_config(),
        ..ScenarioConfig::default()
    };
    let mut opts = TrainOptions::new(&out);
    opts.verbose = true;
    let summary = train(&cfg, &opts)?;
    let rows = read_training_log(&summary.log_path)?;
    let mean = |r: &[_]| -> f64 {
        let r: &[vertiport::agents::train::LogRow] = r;
        r.iter().map(|x| x.total_reward).sum::<f64>() / r.len().max(1) as f64
    };
    let k = rows.len().min(3);
    println!(
        "{} episodes, {} updates; first-{k} mean reward {:.2}, last-{k} mean reward {:.2}",
        summary.episodes,
        summary.updates,
        mean(&rows[..k]),
        mean(&rows[rows.len() - k..])
    );
    Ok(())
}
