//! Finite-difference check of the layer suite and the full PPO loss through
//! the policy network.
//!
//! cargo run --release --example gradcheck -- [seeds]

use vertiport::agents::ppo::policy_loss_gradcheck;
use vertiport::nn::gradcheck::run_suite;
use vertiport::seed::indexed_seed;

fn main() -> vertiport::Result<()> {
    let seeds = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let suite = run_suite(0, seeds, None)?;
    println!(
        "layer suite: {} entries, {} skipped at kinks, max relative error {:.2e}",
        suite.checked, suite.skipped_kinks, suite.max_rel_error
    );
    for i in 0..seeds {
        let r = policy_loss_gradcheck(indexed_seed(0, i), None, Some(16))?;
        let worst = r.worst.map(|(t, k)| format!("{t}[{k}]")).unwrap_or_default();
        println!("policy loss seed {i}: max relative error {:.2e} at {worst}", r.max_rel_error);
    }
    Ok(())
}
