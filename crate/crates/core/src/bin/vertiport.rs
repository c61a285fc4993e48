use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;

use vertiport::agents::policy::GrlPolicy;
use vertiport::agents::ppo::policy_loss_gradcheck;
use vertiport::agents::train::{smoke_ppo_config, train, TrainOptions, CONFIG_FILE};
use vertiport::agents::{Agent, FcfsAgent, GrlAgent, RandomAgent};
use vertiport::env::{read_trace_jsonl, ActionId, VertiportEnv};
use vertiport::eval::{
    compare_agents, run_case_study, write_episode_csv, CaseStudy, CaseStudyReport, EpisodeMetrics,
};
use vertiport::nn::gradcheck::run_suite;
use vertiport::nn::{load_into, Fault};
use vertiport::seed::Rng;
use vertiport::{Error, Result, ScenarioConfig};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "vertiport", version, about = "Vertiport scheduling simulator, PPO trainer and evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Fcfs,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Train the graph-convolutional PPO agent.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Decision budget (overrides ppo.max_timesteps).
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        resume: bool,
        /// Use the short-run PPO preset (larger step size, 2048-step rollouts).
        #[arg(long)]
        smoke: bool,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        quiet: bool,
    },
    /// Run a case study for a checkpoint or a baseline agent.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "agent", required_unless_present = "agent")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        agent: Option<Baseline>,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long, value_enum, default_value = "off")]
        noise: Switch,
        /// First episode seed; episode k uses seed + k. Defaults to the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Episodes counted in the action histogram.
        #[arg(long, default_value_t = 5)]
        histogram_episodes: usize,
        /// Skip writing per-episode traces.
        #[arg(long)]
        no_traces: bool,
    },
    /// Rank agents side by side from report CSVs.
    Compare {
        #[arg(long, num_args = 2.., required = true)]
        reports: Vec<PathBuf>,
        /// Also write the comparison as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of the network gradients.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Entries sampled per parameter tensor of the full policy.
        #[arg(long, default_value_t = 16)]
        entries: usize,
        /// Flip the sign of the RReLU backward pass (the check should then fail).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Re-execute the actions of a trace and verify every record matches.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        /// Episode seed the trace was recorded with.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "off")]
        noise: Switch,
    },
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::load(p),
        None => {
            let cfg = ScenarioConfig::default();
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

fn make_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_policy(cfg: &ScenarioConfig, path: &Path) -> Result<GrlPolicy> {
    let mut policy = GrlPolicy::new(&cfg.network, cfg.n_actions(), &mut Rng::seed_from_u64(0))?;
    load_into(policy.params_mut(), path, Some(&cfg.config_hash()))?;
    Ok(policy)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train {
            config,
            steps,
            seed,
            out,
            resume,
            smoke,
            workers,
            quiet,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if smoke {
                cfg.ppo = smoke_ppo_config();
            }
            if let Some(s) = steps {
                cfg.ppo.max_timesteps = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let opts = TrainOptions {
                workers,
                resume,
                verbose: !quiet,
                ..TrainOptions::new(&out)
            };
            let summary = train(&cfg, &opts)?;
            println!(
                "trained {} timesteps, {} updates, {} episodes; log at {}",
                summary.timesteps,
                summary.updates,
                summary.episodes,
                summary.log_path.display()
            );
            if let Some(best) = summary.best_score {
                println!("best moving-average episode reward {best:.3}");
            }
            Ok(true)
        }
        Command::Evaluate {
            config,
            checkpoint,
            agent,
            episodes,
            noise,
            seed,
            out,
            workers,
            histogram_episodes,
            no_traces,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            let noise = matches!(noise, Switch::On);
            cfg.uncertainty.enabled = noise;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            make_dir(&out)?;
            cfg.save(out.join(CONFIG_FILE))?;
            let study = CaseStudy {
                n_episodes: episodes,
                seed_base: cfg.seed,
                noise,
                workers,
                trace_dir: (!no_traces).then(|| out.join("traces")),
            };
            let policy = checkpoint.as_deref().map(|p| load_policy(&cfg, p)).transpose()?;
            let run = run_case_study(&cfg, &study, || -> Result<Box<dyn Agent>> {
                Ok(match (&policy, agent) {
                    (Some(p), _) => Box::new(GrlAgent::new(p.clone())),
                    (None, Some(Baseline::Fcfs)) => Box::new(FcfsAgent::new()),
                    (None, Some(Baseline::Random)) => Box::new(RandomAgent::new(0)),
                    (None, None) => unreachable!("clap requires --checkpoint or --agent"),
                })
            })?;
            run.report.write_csv(create_file(&out.join("report.csv"))?)?;
            write_episode_csv(&run.report.agent, &run.episodes, create_file(&out.join("episodes.csv"))?)?;
            run.histogram(histogram_episodes.min(episodes))?
                .write_csv(create_file(&out.join("actions.csv"))?)?;
            println!(
                "{} ({}), {} episodes, config {}",
                run.report.agent,
                if noise { "noise on" } else { "noise off" },
                run.report.n,
                run.report.config_hash
            );
            for m in &run.report.metrics {
                println!("  {:<20} {:>12.4} +/- {:.4}", m.metric, m.mean, m.std);
            }
            println!("wrote {}", out.join("report.csv").display());
            Ok(true)
        }
        Command::Compare { reports, out } => {
            if reports.len() < 2 {
                return Err(Error::Report("compare needs at least two --reports".into()));
            }
            let loaded = reports
                .iter()
                .map(|p| {
                    let f = fs::File::open(p).map_err(|e| Error::Io {
                        path: p.clone(),
                        source: e,
                    })?;
                    CaseStudyReport::read_csv(f)
                })
                .collect::<Result<Vec<_>>>()?;
            let cmp = compare_agents(&loaded)?;
            print!("{}", cmp.to_text());
            if let Some(path) = out {
                cmp.write_csv(create_file(&path)?)?;
            }
            Ok(true)
        }
        Command::Gradcheck {
            seed,
            seeds,
            entries,
            inject_fault,
        } => {
            let fault = inject_fault.then_some(Fault::FlipRreluBackward);
            let suite = run_suite(seed, seeds, fault)?;
            println!(
                "random networks: {seeds} seeds, {} entries checked, {} kinks skipped, max relative error {:.3e}",
                suite.checked, suite.skipped_kinks, suite.max_rel_error
            );
            let mut worst = 0.0f64;
            for i in 0..seeds {
                let r = policy_loss_gradcheck(vertiport::seed::indexed_seed(seed, i), fault, Some(entries))?;
                worst = worst.max(r.max_rel_error);
            }
            println!("full policy loss: {seeds} seeds, max relative error {worst:.3e}");
            let max = worst.max(suite.max_rel_error);
            let pass = max <= GRADCHECK_TOLERANCE;
            println!("{} (max {max:.3e}, tolerance {GRADCHECK_TOLERANCE:.0e})", if pass { "PASS" } else { "FAIL" });
            Ok(pass)
        }
        Command::Replay {
            trace,
            seed,
            config,
            noise,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            let noise = matches!(noise, Switch::On);
            cfg.uncertainty.enabled = noise;
            let text = fs::read_to_string(&trace).map_err(|e| Error::Io {
                path: trace.clone(),
                source: e,
            })?;
            let recorded = read_trace_jsonl(&text)?;
            let mut env = VertiportEnv::new(cfg)?;
            env.reset(seed)?;
            let mut replayed = Vec::with_capacity(recorded.len());
            let actions: Vec<(usize, ActionId)> = recorded
                .iter()
                .filter_map(|r| r.evtol.zip(r.action))
                .collect();
            for (evtol, action) in actions {
                if env.is_done() {
                    break;
                }
                if env.selected() != evtol {
                    println!("diverged at record {}: trace acts for eVTOL {evtol}, env selected {}", replayed.len(), env.selected());
                    return Ok(false);
                }
                replayed.extend(env.step(action)?.records);
            }
            if let Some(i) = (0..recorded.len().max(replayed.len())).find(|&i| recorded.get(i) != replayed.get(i)) {
                println!("diverged at record {i} of {}", recorded.len());
                return Ok(false);
            }
            let m = EpisodeMetrics::from_trace(&replayed, seed, noise);
            println!("replayed {} records identically", replayed.len());
            for (name, v) in vertiport::eval::METRIC_NAMES.iter().zip(m.values()) {
                println!("  {name:<20} {v:>12.4}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
