//! Command-line entry points: train, eval, replay, gen-scenarios, plot-data.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::exec::{robot_streams, Executor, PolicyKind};
use crate::harness::{evaluate, exec_seed, metrics, ScenarioSet};
use crate::maddpg::{csv_err, train, TrainOptions, TrainingLog};
use crate::nn::{load_params, save_params, NetworkParams};
use crate::world::init_world;
use crate::world::trace::write_trace;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_CHECKPOINT: i32 = 5;
pub const EXIT_NUMERICAL: i32 = 6;
pub const EXIT_OTHER: i32 = 7;

#[derive(Parser, Debug)]
#[command(name = "swarm-alloc", version, about = "Swarm task allocation: train, evaluate and replay policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Config file of `key = value` lines; defaults apply otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set n_robots=12`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_file(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(self.out.join(name))
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the shared actor and critic; writes the actor checkpoint and training_curve.csv.
    Train {
        #[command(flatten)]
        common: Common,
        /// Episode count; overrides the config value.
        #[arg(long)]
        episodes: Option<usize>,
        /// Actor checkpoint path (default: OUT/actor.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Leave wall_ms at zero so the curve is byte-reproducible.
        #[arg(long)]
        no_timing: bool,
        /// Print progress to stderr every N episodes.
        #[arg(long, default_value_t = 0)]
        progress: usize,
    },
    /// Evaluate policies on a scenario set; writes metrics.csv and summary.txt.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Actor checkpoint, required for learned policies.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated policy names.
        #[arg(long, value_delimiter = ',', default_value = "lia_maddpg,lia_maddpg_no_improve,greedy")]
        policies: Vec<String>,
        /// Scenario manifest; without it `--count` scenarios are generated from the config.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// Re-run one scenario under one policy; writes trace.jsonl.
    Replay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "greedy")]
        policy: String,
        /// Scenario manifest; without it the world is seeded from `--seed`.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        scenario_id: usize,
    },
    /// Write a scenario manifest (OUT/scenarios.json).
    GenScenarios {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Scale tag stored in the manifest.
        #[arg(long, default_value = "small")]
        scale: String,
    },
    /// Split a training curve into one series file per column.
    PlotData {
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// training_curve.csv to read.
        #[arg(long)]
        curve: PathBuf,
        /// Trailing moving-average window.
        #[arg(long, default_value_t = 100)]
        window: usize,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        Error::CheckpointHeader(_)
        | Error::CheckpointLength(_)
        | Error::CheckpointVersion { .. }
        | Error::SpecMismatch(_)
        | Error::MissingParams(_) => EXIT_CHECKPOINT,
        Error::NumericalFault(_) => EXIT_NUMERICAL,
        _ => EXIT_OTHER,
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn load_actor(path: Option<&Path>, needed: bool) -> Result<Option<NetworkParams>> {
    match path {
        Some(p) => load_params(p).map(Some),
        None if needed => Err(Error::MissingParams("learned policies need --checkpoint".into())),
        None => Ok(None),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train {
            common,
            episodes,
            checkpoint,
            no_timing,
            progress,
        } => {
            let mut cfg = common.config()?;
            if let Some(n) = episodes {
                cfg.trainer.episodes = n;
            }
            let ckpt = match checkpoint {
                Some(p) => p,
                None => common.out_file("actor.ckpt")?,
            };
            let options = TrainOptions {
                log_timing: !no_timing,
                checkpoint_path: Some(ckpt.clone()),
                progress_every: progress,
            };
            let (nets, log) = train(&cfg, cfg.seed, &options)?;
            save_params(&ckpt, &nets.actor)?;
            log.write_csv(create(&common.out_file("training_curve.csv")?)?)?;
            let cfg_path = common.out_file("config.txt")?;
            std::fs::write(&cfg_path, cfg.to_text()).map_err(|e| Error::io(&cfg_path, e))?;
            Ok(())
        }
        Command::Eval {
            common,
            checkpoint,
            policies,
            scenarios,
            count,
        } => {
            let cfg = common.config()?;
            let policies = policies.iter().map(|s| s.parse()).collect::<Result<Vec<PolicyKind>>>()?;
            let set = match scenarios {
                Some(p) => ScenarioSet::load(&p)?,
                None => ScenarioSet::generate(&cfg.world, count, cfg.seed, "custom")?,
            };
            let needed = policies.iter().any(|p| p.needs_params());
            let actor = load_actor(checkpoint.as_deref(), needed)?;
            let report = evaluate(&set, &policies, actor.as_ref(), &cfg.exec)?;
            report.write_csv(create(&common.out_file("metrics.csv")?)?)?;
            let summary = report.summary_text();
            let path = common.out_file("summary.txt")?;
            std::fs::write(&path, &summary).map_err(|e| Error::io(&path, e))?;
            print!("{summary}");
            Ok(())
        }
        Command::Replay {
            common,
            checkpoint,
            policy,
            scenarios,
            scenario_id,
        } => {
            let cfg = common.config()?;
            let policy: PolicyKind = policy.parse()?;
            let (world_cfg, seed) = match scenarios {
                Some(p) => {
                    let set = ScenarioSet::load(&p)?;
                    let s = set
                        .scenarios
                        .iter()
                        .find(|s| s.id == scenario_id)
                        .ok_or_else(|| Error::Config(format!("no scenario {scenario_id} in {}", p.display())))?;
                    (s.world.clone(), s.seed)
                }
                None => (cfg.world.clone(), cfg.seed),
            };
            let actor = load_actor(checkpoint.as_deref(), policy.needs_params())?;
            let mut world = init_world(&world_cfg, seed)?;
            let u_max = metrics::u_max(&world)?;
            let executor = Executor::new(policy, actor.as_ref(), &cfg.exec)?;
            let mut streams = robot_streams(exec_seed(seed), world.n_robots());
            let mut trace = Vec::new();
            let result = executor.run_with(
                &mut world,
                &mut |i| rand::Rng::gen::<f64>(&mut streams[i]),
                Some(&mut trace),
            )?;
            write_trace(create(&common.out_file("trace.jsonl")?)?, &trace)?;
            let natu = metrics::natu_from(result.total_utility, u_max)?;
            println!(
                "{policy}: total utility {:.4}  natu {:.4}  natc {:.4}  steps {}",
                result.total_utility,
                natu.reported,
                metrics::natc(&result, world_cfg.max_steps),
                result.steps
            );
            Ok(())
        }
        Command::GenScenarios { common, count, scale } => {
            let cfg = common.config()?;
            let set = ScenarioSet::generate(&cfg.world, count, cfg.seed, &scale)?;
            set.save(&common.out_file("scenarios.json")?)
        }
        Command::PlotData { out, curve, window } => {
            let file = File::open(&curve).map_err(|e| Error::io(&curve, e))?;
            let log = TrainingLog::read_csv(file)?;
            write_series(&log, &out, window)
        }
    }
}

type Column = fn(&crate::maddpg::TrainingRow) -> Option<f64>;

/// One `episode,value,moving_average` file per curve column.
pub fn write_series(log: &TrainingLog, out: &Path, window: usize) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let window = window.max(1);
    let columns: [(&str, Column); 4] = [
        ("mean_utility", |r| Some(r.mean_utility)),
        ("normalized_utility", |r| Some(r.normalized_utility)),
        ("critic_loss", |r| r.critic_loss),
        ("epsilon", |r| Some(r.epsilon)),
    ];
    for (name, get) in columns {
        let path = out.join(format!("{name}.csv"));
        let mut w = csv::Writer::from_writer(create(&path)?);
        w.write_record(["episode", "value", "moving_average"]).map_err(csv_err)?;
        let points: Vec<(usize, f64)> = log.rows.iter().filter_map(|r| get(r).map(|v| (r.episode, v))).collect();
        let mut sum = 0.0;
        for (k, &(episode, value)) in points.iter().enumerate() {
            sum += value;
            if k >= window {
                sum -= points[k - window].1;
            }
            let avg = sum / (k + 1).min(window) as f64;
            w.write_record([episode.to_string(), value.to_string(), avg.to_string()])
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
