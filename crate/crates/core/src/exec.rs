//! Decentralized execution: the trained actor's proposal, the
//! deviation-probability improvement step, and the greedy baseline.
//!
//! Every decision for robot `i` is computed from its own observation, the
//! previous targets of the neighbors it observes, the task capacities and a
//! private random stream. Nothing else about other robots is read.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExecConfig;
use crate::error::{Error, Result};
use crate::maddpg::{check_actor, observation_matrix};
use crate::nn::{forward, Mode, NetworkParams};
use crate::perception::RelatedSet;
use crate::rng::{self, StreamRng};
use crate::world::trace::TraceRecord;
use crate::world::{Action, EpisodeResult, Observation, WorldState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    LiaMaddpg,
    LiaMaddpgNoImprove,
    Greedy,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::LiaMaddpg, PolicyKind::LiaMaddpgNoImprove, PolicyKind::Greedy];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::LiaMaddpg => "lia_maddpg",
            PolicyKind::LiaMaddpgNoImprove => "lia_maddpg_no_improve",
            PolicyKind::Greedy => "greedy",
        }
    }

    pub fn needs_params(self) -> bool {
        self != PolicyKind::Greedy
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown policy {s:?}")))
    }
}

/// What robot `i` knows when it decides.
#[derive(Clone, Debug)]
pub struct ExecContext<'a> {
    pub robot_id: usize,
    pub observation: &'a Observation,
    /// Previous-step targets of the observed neighbors (α_i entries).
    pub neighbor_targets: Vec<Option<usize>>,
    /// h̄_j for every task.
    pub capacities: &'a [usize],
}

impl ExecContext<'_> {
    /// α_i
    pub fn observed(&self) -> usize {
        self.neighbor_targets.len()
    }

    /// β_i for a proposed task: observed neighbors that targeted it last step.
    pub fn same_strategy(&self, task: usize) -> usize {
        self.neighbor_targets.iter().filter(|&&g| g == Some(task)).count()
    }

    fn bound_count(&self, task: usize) -> usize {
        self.observation.task_bound_count(task).round().max(0.0) as usize
    }
}

/// h̄ ⊗ h: remaining slots, zero once the task is full.
pub fn capacity_gap(h_bar: usize, h: usize) -> usize {
    h_bar.saturating_sub(h)
}

/// δ = exp(−(h̄⊗h)·(α−β)).
pub fn deviation_probability(gap: usize, alpha: usize, beta: usize) -> f64 {
    let diff = alpha.saturating_sub(beta);
    (-((gap * diff) as f64)).exp()
}

/// argmax_j φ₁·r_ij − scale·d_ij over `candidates` (lowest index on ties).
fn best_score(obs: &Observation, phi1: f64, scale: f64, candidates: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for j in candidates {
        let score = phi1 * obs.task_reward_weight(j) - scale * obs.task_distance(j);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((j, score));
        }
    }
    best.map(|(j, _)| j)
}

/// Fallback rule of the improvement step: best score over all tasks.
pub fn fallback_task(obs: &Observation, phi1: f64, scale: f64) -> usize {
    let m = obs.layout().n_tasks;
    best_score(obs, phi1, scale, 0..m).unwrap_or(0)
}

/// Actor argmax for one observation.
pub fn policy_output(actor: &NetworkParams, observation: &Observation) -> Result<Action> {
    let probs = crate::nn::forward_row(actor, observation.as_slice())?;
    Ok(Action::from_distribution(probs))
}

/// Keeps the proposal unless ξ < δ, in which case the fallback task is
/// taken. `xi` is the robot's uniform draw for this step.
pub fn improved_action(ctx: &ExecContext<'_>, proposed: Action, xi: f64, phi1: f64, scale: f64) -> Action {
    let j = proposed.task_index;
    let gap = capacity_gap(ctx.capacities[j], ctx.bound_count(j));
    let delta = deviation_probability(gap, ctx.observed(), ctx.same_strategy(j));
    if xi < delta {
        let m = ctx.capacities.len();
        Action::one_hot(fallback_task(ctx.observation, phi1, scale), m)
    } else {
        proposed
    }
}

/// Best score among tasks that still have room; all tasks if none does.
pub fn greedy_policy(obs: &Observation, capacities: &[usize], phi1: f64, scale: f64) -> Action {
    let m = capacities.len();
    let open = |j: &usize| (obs.task_bound_count(*j).round() as usize) < capacities[*j];
    let j = best_score(obs, phi1, scale, (0..m).filter(open)).unwrap_or_else(|| fallback_task(obs, phi1, scale));
    Action::one_hot(j, m)
}

/// Everything needed to drive one episode under a decision rule.
pub struct Executor<'a> {
    pub policy: PolicyKind,
    pub actor: Option<&'a NetworkParams>,
    pub exec: &'a ExecConfig,
}

impl<'a> Executor<'a> {
    pub fn new(policy: PolicyKind, actor: Option<&'a NetworkParams>, exec: &'a ExecConfig) -> Result<Self> {
        if policy.needs_params() && actor.is_none() {
            return Err(Error::MissingParams(format!("policy {policy} needs a trained checkpoint")));
        }
        Ok(Self { policy, actor, exec })
    }

    /// Joint action for the current state. `xi(i)` supplies robot i's draw.
    pub fn decide(
        &self,
        world: &WorldState,
        sets: &[RelatedSet],
        observations: &[Observation],
        xi: &mut dyn FnMut(usize) -> f64,
    ) -> Result<Vec<Action>> {
        let m = world.n_tasks();
        let capacities: Vec<usize> = world.tasks.iter().map(|t| t.capacity).collect();
        let phi1 = world.config.phi1;
        let scale = self.exec.distance_scale;
        let proposals = match (self.policy, self.actor) {
            (PolicyKind::Greedy, _) => None,
            (_, Some(actor)) => {
                let (probs, _) = forward(actor, observation_matrix(observations).view(), Mode::Eval)?;
                Some(probs)
            }
            (_, None) => unreachable!("checked in Executor::new"),
        };
        let mut actions = Vec::with_capacity(world.n_robots());
        for (i, robot) in world.robots.iter().enumerate() {
            if let (false, Some(g)) = (robot.is_free(), robot.target) {
                actions.push(Action::one_hot(g, m));
                continue;
            }
            let obs = &observations[i];
            let action = match &proposals {
                None => greedy_policy(obs, &capacities, phi1, scale),
                Some(probs) => {
                    let proposed = Action::from_distribution(probs.row(i).to_vec());
                    if self.policy == PolicyKind::LiaMaddpg {
                        let ctx = ExecContext {
                            robot_id: i,
                            observation: obs,
                            neighbor_targets: sets[i].neighbors.iter().map(|&k| world.robots[k].target).collect(),
                            capacities: &capacities,
                        };
                        improved_action(&ctx, proposed, xi(i), phi1, scale)
                    } else {
                        proposed
                    }
                }
            };
            actions.push(action);
        }
        Ok(actions)
    }

    /// Steps `world` to completion. With `trace`, one record per step is
    /// appended (state after the step).
    pub fn run_with(
        &self,
        world: &mut WorldState,
        xi: &mut dyn FnMut(usize) -> f64,
        mut trace: Option<&mut Vec<TraceRecord>>,
    ) -> Result<EpisodeResult> {
        if let Some(actor) = self.actor {
            check_actor(actor, &world.config)?;
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceRecord::capture(world, &vec![0.0; world.n_robots()]));
        }
        while !world.is_done() {
            let (sets, obs) = world.observe_all();
            let actions = self.decide(world, &sets, &obs, xi)?;
            let out = world.step(&actions)?;
            if let Some(t) = trace.as_deref_mut() {
                t.push(TraceRecord::capture(world, &out.rewards));
            }
        }
        Ok(EpisodeResult::from_world(world))
    }
}

/// Private per-robot streams for the improvement draws.
pub fn robot_streams(seed: u64, n_robots: usize) -> Vec<StreamRng> {
    (0..n_robots as u64).map(|i| rng::indexed_stream(seed, "exec", i)).collect()
}

/// Runs one episode from `world` with per-robot random streams derived
/// from `seed`.
pub fn run_execution(
    world: &mut WorldState,
    policy: PolicyKind,
    actor: Option<&NetworkParams>,
    exec: &ExecConfig,
    seed: u64,
) -> Result<EpisodeResult> {
    let executor = Executor::new(policy, actor, exec)?;
    let mut streams = robot_streams(seed, world.n_robots());
    executor.run_with(world, &mut |i| streams[i].gen::<f64>(), None)
}
