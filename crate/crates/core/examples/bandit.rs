//! PPO on a two-armed bandit: prints the rewarded arm's probability as training proceeds.
//!
//! cargo run --example bandit -- [seed] [updates]

use vertiport::agents::bandit::{bandit_ppo_config, run_bandit};

fn main() -> vertiport::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let updates = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let run = run_bandit(seed, updates, &bandit_ppo_config())?;
    for (u, p) in run.rewarded_prob.iter().enumerate().step_by(10) {
        println!("update {u:>4}  p(rewarded) = {p:.4}");
    }
    match run.updates_to_reach(0.9) {
        Some(u) => println!("p > 0.9 after {u} updates"),
        None => println!("p never exceeded 0.9"),
    }
    Ok(())
}
