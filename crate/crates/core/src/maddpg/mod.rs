//! Centralized training: rollouts, replay, and the shared actor/critic
//! updates driven by aggregated local information.
//!
//! One actor and one critic are shared by every robot. The critic sees a
//! robot's own observation and action plus the LIA-weighted mix of its
//! related robots' observations and actions, so its input width depends
//! only on the observation width and the number of tasks.

mod replay;
mod update;

pub use replay::{sample_batch, ReplayBuffer};
pub use update::{active_rows, actor_update, critic_input, critic_target, critic_update};

use std::path::PathBuf;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Config, TrainerConfig, WorldConfig};
use crate::error::{Error, Result};
use crate::harness::metrics;
use crate::nn::{forward, save_params, soft_update, AdamState, MlpSpec, Mode, NetworkParams, OutputHead};
use crate::perception::{aggregate_into, related_sets, PerceptionSnapshot};
use crate::rng;
use crate::world::{argmax, init_world, Action, EpisodeResult, Observation, WorldState};

/// One joint step of experience.
#[derive(Clone, Debug)]
pub struct TransitionRecord {
    pub observations: Array2<f64>,
    /// Stored action distributions (simplex rows).
    pub actions: Array2<f64>,
    pub agg_obs: Array2<f64>,
    pub agg_act: Array2<f64>,
    pub rewards: Vec<f64>,
    pub next_observations: Array2<f64>,
    /// Distances and neighbor lists at t+1, for rebuilding related sets.
    pub next_snapshot: PerceptionSnapshot,
    /// Task of every robot that is bound at t+1.
    pub next_targets: Vec<Option<usize>>,
    /// Robot was free at t.
    pub active: Vec<bool>,
    /// Robot's episode ended at this step (bound now, or horizon reached).
    pub done: Vec<bool>,
}

impl TransitionRecord {
    pub fn n_robots(&self) -> usize {
        self.observations.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.observations.ncols()
    }

    pub fn n_tasks(&self) -> usize {
        self.actions.ncols()
    }
}

pub fn observation_matrix(obs: &[Observation]) -> Array2<f64> {
    let d = obs.first().map_or(0, Observation::dim);
    let flat: Vec<f64> = obs.iter().flat_map(|o| o.as_slice().iter().copied()).collect();
    Array2::from_shape_vec((obs.len(), d), flat).expect("uniform observations")
}

pub fn actor_spec(world: &WorldConfig, trainer: &TrainerConfig) -> MlpSpec {
    MlpSpec::new(world.obs_dim(), &trainer.hidden_dims, world.n_tasks, OutputHead::Softmax)
        .with_residual(trainer.residual)
        .with_batch_norm(trainer.batch_norm)
}

pub fn critic_spec(world: &WorldConfig, trainer: &TrainerConfig) -> MlpSpec {
    let width = 2 * (world.obs_dim() + world.n_tasks);
    MlpSpec::new(width, &trainer.hidden_dims, 1, OutputHead::Linear).with_residual(trainer.residual)
}

/// Checks that a policy network fits the given world.
pub fn check_actor(actor: &NetworkParams, world: &WorldConfig) -> Result<()> {
    let spec = &actor.spec;
    if spec.output_dim != world.n_tasks || spec.input_dim != world.obs_dim() {
        return Err(Error::SpecMismatch(format!(
            "policy maps {} inputs to {} tasks, world has observation width {} and {} tasks",
            spec.input_dim,
            spec.output_dim,
            world.obs_dim(),
            world.n_tasks
        )));
    }
    if spec.output_head != OutputHead::Softmax {
        return Err(Error::SpecMismatch("policy network needs a softmax head".into()));
    }
    Ok(())
}

/// Live and target networks with their optimizers.
#[derive(Clone, Debug)]
pub struct Networks {
    pub actor: NetworkParams,
    pub critic: NetworkParams,
    pub target_actor: NetworkParams,
    pub target_critic: NetworkParams,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
}

impl Networks {
    pub fn init(world: &WorldConfig, trainer: &TrainerConfig, seed: u64) -> Result<Self> {
        let mut init_rng = rng::stream(seed, "init");
        let actor = NetworkParams::init(actor_spec(world, trainer), &mut init_rng)?;
        let critic = NetworkParams::init(critic_spec(world, trainer), &mut init_rng)?;
        Ok(Self {
            actor_opt: AdamState::new(actor.len(), trainer.actor_lr),
            critic_opt: AdamState::new(critic.len(), trainer.critic_lr),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        })
    }
}

/// Runs one episode with ε-greedy exploration around the actor's argmax.
/// Every robot stores the one-hot of the task it executed.
pub fn rollout_episode<R: Rng + ?Sized>(
    world: &mut WorldState,
    actor: &NetworkParams,
    epsilon: f64,
    beta: f64,
    rng: &mut R,
) -> Result<(Vec<TransitionRecord>, EpisodeResult)> {
    check_actor(actor, &world.config)?;
    let n = world.n_robots();
    let m = world.n_tasks();
    let d = world.config.obs_dim();
    let alpha = world.config.alpha_max;
    let mut records = Vec::new();
    let (_, obs) = world.observe_all();
    let mut obs = observation_matrix(&obs);
    let mut snapshot = PerceptionSnapshot::capture(world, alpha);

    while !world.is_done() {
        let (probs, _) = forward(actor, obs.view(), Mode::Eval)?;
        let active: Vec<bool> = world.robots.iter().map(|r| r.is_free()).collect();
        let actions: Vec<Action> = (0..n)
            .map(|i| match world.robots[i].target {
                Some(g) if !active[i] => Action::one_hot(g, m),
                _ if rng.gen::<f64>() < epsilon => Action::one_hot(rng.gen_range(0..m), m),
                _ => Action::one_hot(argmax(probs.row(i).as_slice().expect("contiguous")), m),
            })
            .collect();
        let mut act = Array2::zeros((n, m));
        for (i, a) in actions.iter().enumerate() {
            act.row_mut(i).assign(&ndarray::ArrayView1::from(&a.distribution));
        }

        let related = related_sets(&snapshot, &actions);
        let mut agg_obs = Array2::zeros((n, d));
        let mut agg_act = Array2::zeros((n, m));
        for (i, set) in related.iter().enumerate() {
            let mut ao = vec![0.0; d];
            let mut aa = vec![0.0; m];
            aggregate_into(
                set,
                |k| obs.row(k).to_slice().expect("contiguous"),
                |k| act.row(k).to_slice().expect("contiguous"),
                beta,
                &mut ao,
                &mut aa,
            );
            agg_obs.row_mut(i).assign(&ndarray::ArrayView1::from(&ao));
            agg_act.row_mut(i).assign(&ndarray::ArrayView1::from(&aa));
        }

        let out = world.step(&actions)?;
        let next_obs = observation_matrix(&out.next_observations);
        let next_snapshot = PerceptionSnapshot::capture(world, alpha);
        let next_targets = world
            .robots
            .iter()
            .map(|r| if r.is_free() { None } else { r.target })
            .collect();
        let done = (0..n)
            .map(|i| out.done || (active[i] && !world.robots[i].is_free()))
            .collect();
        records.push(TransitionRecord {
            observations: obs,
            actions: act,
            agg_obs,
            agg_act,
            rewards: out.rewards,
            next_observations: next_obs.clone(),
            next_snapshot: next_snapshot.clone(),
            next_targets,
            active,
            done,
        });
        obs = next_obs;
        snapshot = next_snapshot;
    }
    Ok((records, EpisodeResult::from_world(world)))
}

/// One row of the training curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub episode: usize,
    pub mean_utility: f64,
    /// Raw NATU of the training episode.
    pub normalized_utility: f64,
    /// Mean critic loss over the episode's updates; `None` before the
    /// buffer holds a full batch.
    pub critic_loss: Option<f64>,
    pub epsilon: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<TrainingRow>,
}

impl TrainingLog {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "mean_utility", "normalized_utility", "critic_loss", "epsilon", "wall_ms"])
            .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.episode.to_string(),
                r.mean_utility.to_string(),
                r.normalized_utility.to_string(),
                r.critic_loss.map_or(String::new(), |l| l.to_string()),
                r.epsilon.to_string(),
                r.wall_ms.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<training curve>", e))
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rows = Vec::new();
        for rec in csv::Reader::from_reader(input).records() {
            let rec = rec.map_err(csv_err)?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let num = |i: usize| -> Result<f64> {
                field(i)
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad number {:?} in training curve", field(i))))
            };
            rows.push(TrainingRow {
                episode: num(0)? as usize,
                mean_utility: num(1)?,
                normalized_utility: num(2)?,
                critic_loss: if field(3).is_empty() { None } else { Some(num(3)?) },
                epsilon: num(4)?,
                wall_ms: num(5)? as u64,
            });
        }
        Ok(Self { rows })
    }

    /// Mean of `mean_utility` over a range of episodes.
    pub fn mean_utility(&self, range: std::ops::Range<usize>) -> f64 {
        let xs = &self.rows[range];
        xs.iter().map(|r| r.mean_utility).sum::<f64>() / xs.len().max(1) as f64
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Invalid(format!("csv: {e}"))
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Record per-episode wall time; off gives byte-reproducible logs.
    pub log_timing: bool,
    /// Where periodic actor checkpoints go when `checkpoint_every > 0`.
    pub checkpoint_path: Option<PathBuf>,
    /// Print a progress line to stderr every this many episodes (0 = never).
    pub progress_every: usize,
}

/// Updates after one episode: a round per `update_every` environment steps,
/// each round giving every robot its own minibatch, then a soft update.
fn update_rounds<R: Rng + ?Sized>(
    nets: &mut Networks,
    buffer: &mut ReplayBuffer,
    trainer: &TrainerConfig,
    n_robots: usize,
    rounds: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut losses = Vec::new();
    for _ in 0..rounds {
        for robot in 0..n_robots {
            let idx = match sample_batch(buffer, trainer.batch_size, trainer.prioritized, rng) {
                Ok(idx) => idx,
                Err(Error::NotReady { .. }) => return Ok(losses),
                Err(e) => return Err(e),
            };
            let batch: Vec<&TransitionRecord> = idx.iter().map(|&k| buffer.get(k)).collect();
            let y = critic_target(
                &batch,
                robot,
                &nets.target_actor,
                &nets.target_critic,
                trainer.gamma,
                trainer.beta,
            )?;
            let fitted = critic_update(&batch, robot, &mut nets.critic, &mut nets.critic_opt, &y)?;
            actor_update(
                &batch,
                robot,
                &mut nets.actor,
                &mut nets.actor_opt,
                &nets.critic,
                trainer.entropy_coef,
            )?;
            if let Some((loss, td)) = fitted {
                losses.push(loss);
                if trainer.prioritized {
                    let active: Vec<bool> = batch.iter().map(|rec| rec.active[robot]).collect();
                    for (b, &k) in idx.iter().enumerate() {
                        if active[b] {
                            buffer.set_priority(k, td[b]);
                        }
                    }
                }
            }
        }
        soft_update(&mut nets.target_actor, &nets.actor, trainer.eta)?;
        soft_update(&mut nets.target_critic, &nets.critic, trainer.eta)?;
    }
    Ok(losses)
}

/// Trains the shared actor and critic. Every episode starts from a freshly
/// seeded world; the run is deterministic given `seed`.
pub fn train(config: &Config, seed: u64, options: &TrainOptions) -> Result<(Networks, TrainingLog)> {
    config.validate()?;
    let world_cfg = &config.world;
    let trainer = &config.trainer;
    let mut nets = Networks::init(world_cfg, trainer, seed)?;
    let mut buffer = ReplayBuffer::new(trainer.buffer_capacity);
    let mut explore_rng = rng::stream(seed, "explore");
    let mut sample_rng = rng::stream(seed, "replay");
    let mut log = TrainingLog::default();

    for episode in 0..trainer.episodes {
        let started = Instant::now();
        let epsilon = trainer.epsilon(episode);
        let mut world = init_world(world_cfg, rng::derive_seed(seed, "train-episode", episode as u64))?;
        let u_max = metrics::u_max(&world)?;
        let (records, result) = rollout_episode(&mut world, &nets.actor, epsilon, trainer.beta, &mut explore_rng)?;
        let steps = records.len();
        for rec in records {
            buffer.push(rec);
        }
        let rounds = steps.div_ceil(trainer.update_every);
        let losses = update_rounds(&mut nets, &mut buffer, trainer, world_cfg.n_robots, rounds, &mut sample_rng)?;

        let row = TrainingRow {
            episode,
            mean_utility: result.mean_utility(),
            normalized_utility: metrics::natu_from(result.total_utility, u_max)?.raw,
            critic_loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            epsilon,
            wall_ms: if options.log_timing {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        log.rows.push(row);
        let done = episode + 1;
        if options.progress_every > 0 && done % options.progress_every == 0 {
            eprintln!(
                "episode {done:>5}  mean utility {:+.4}  eps {epsilon:.3}",
                log.mean_utility(done - options.progress_every..done),
            );
        }

        if trainer.checkpoint_every > 0 && (episode + 1) % trainer.checkpoint_every == 0 {
            if let Some(path) = &options.checkpoint_path {
                save_params(path, &nets.actor)?;
            }
        }
    }
    Ok((nets, log))
}

/// Greedy (argmax) task choice of the actor for each robot row.
pub fn actor_choices(actor: &NetworkParams, observations: &Array2<f64>) -> Result<Vec<usize>> {
    let (probs, _) = forward(actor, observations.view(), Mode::Eval)?;
    Ok(probs
        .rows()
        .into_iter()
        .map(|r| argmax(r.as_slice().expect("contiguous")))
        .collect())
}

#[cfg(test)]
mod tests;
