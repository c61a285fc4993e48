//! One FCFS episode: writes the per-tick trace as JSON lines, re-derives the
//! episode metrics from it, and prints the action histogram.
//!
//! cargo run --example episode_trace -- [seed] [trace.jsonl]

use std::fs::File;
use std::io::BufWriter;

use vertiport::agents::FcfsAgent;
use vertiport::env::{write_trace_jsonl, VertiportEnv};
use vertiport::eval::{record_action_distribution, run_episode, EpisodeMetrics, METRIC_NAMES};
use vertiport::ScenarioConfig;

fn main() -> vertiport::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let path = args.next().unwrap_or_else(|| "fcfs_episode.jsonl".into());

    let mut env = VertiportEnv::new(ScenarioConfig::default())?;
    let (metrics, trace) = run_episode(&mut env, &mut FcfsAgent::new(), seed, true)?;
    let file = File::create(&path).map_err(|e| vertiport::Error::io(&path, e))?;
    write_trace_jsonl(&trace, &mut BufWriter::new(file))?;
    println!("{} records written to {path}", trace.len());

    let replayed = EpisodeMetrics::from_trace(&trace, seed, false);
    for (name, (a, b)) in METRIC_NAMES.iter().zip(metrics.values().into_iter().zip(replayed.values())) {
        println!("  {name:<20} {a:>12.4}  (from trace {b:.4})");
    }

    let hist = record_action_distribution(&[trace], env.action_space().names(), 1)?;
    for ((name, count), pct) in hist.names.iter().zip(&hist.counts).zip(hist.percentages()) {
        println!("  {name:<18} {count:>6}  {pct:>5.1}%");
    }
    Ok(())
}
