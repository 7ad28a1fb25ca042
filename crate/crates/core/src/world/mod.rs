//! Decentralized POMDP simulator for dynamic swarm task allocation.
//!
//! Tasks random-walk inside the unit arena; robots pick a target each step,
//! head straight at it, and bind irreversibly once within the association
//! distance. A bound robot rides along with its task for the rest of the
//! episode. All positions are in normalized arena units.

mod observation;
pub mod trace;

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use observation::{
    build_observation, wrap_angle, ObsLayout, Observation, NEIGHBOR_WIDTH, SELF_WIDTH, TASK_WIDTH,
};

use crate::config::WorldConfig;
use crate::error::{Error, Result};
use crate::perception;
use crate::rng::{self, StreamRng};

/// Robots closer than this to their target keep their previous heading.
pub const HEADING_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub task_id: usize,
    pub position: [f64; 2],
    /// Arena units per second.
    pub speed: f64,
    pub heading: f64,
    pub capacity: usize,
    pub bound_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: [f64; 2],
    /// Arena units per second.
    pub speed: f64,
    pub heading: f64,
    pub target: Option<usize>,
    /// Step index at which the robot bound; `None` while free (c = 1).
    pub bind_time: Option<usize>,
    /// Whether binding earned the task reward (a capacity slot was open).
    pub rewarded: bool,
    /// Running Σ v·τ over the steps the robot moved while free.
    pub accumulated_cost: f64,
}

impl RobotState {
    pub fn is_free(&self) -> bool {
        self.bind_time.is_none()
    }

    /// Working status c: 1 free, 0 bound.
    pub fn status(&self) -> u8 {
        u8::from(self.is_free())
    }
}

/// A task choice plus the soft distribution it was read from.
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub task_index: usize,
    pub distribution: Vec<f64>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = j;
        }
    }
    best
}

impl Action {
    pub fn one_hot(task_index: usize, n_tasks: usize) -> Self {
        let mut distribution = vec![0.0; n_tasks];
        if task_index < n_tasks {
            distribution[task_index] = 1.0;
        }
        Self {
            task_index,
            distribution,
        }
    }

    pub fn from_distribution(distribution: Vec<f64>) -> Self {
        Self {
            task_index: argmax(&distribution),
            distribution,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindEvent {
    pub robot_id: usize,
    pub task_id: usize,
    pub got_final_reward: bool,
}

/// The three additive reward terms for one robot and step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RewardParts {
    pub distance: f64,
    pub step: f64,
    pub fin: f64,
}

impl RewardParts {
    pub fn total(&self) -> f64 {
        self.distance + self.step + self.fin
    }
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub next_observations: Vec<Observation>,
    pub newly_bound: Vec<BindEvent>,
    pub done: bool,
}

/// What an episode produced, independent of the policy that drove it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub utilities: Vec<f64>,
    /// T_i per robot; never-bound robots count the full horizon.
    pub bind_times: Vec<usize>,
    pub total_utility: f64,
    pub steps: usize,
    pub max_steps: usize,
}

impl EpisodeResult {
    pub fn from_world(world: &WorldState) -> Self {
        let utilities = world.episode_utilities();
        Self {
            total_utility: utilities.iter().sum(),
            utilities,
            bind_times: world.bind_times(),
            steps: world.t,
            max_steps: world.config.max_steps,
        }
    }

    pub fn mean_utility(&self) -> f64 {
        if self.utilities.is_empty() {
            0.0
        } else {
            self.total_utility / self.utilities.len() as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldState {
    pub config: WorldConfig,
    pub t: usize,
    pub tau: f64,
    pub d_bind: f64,
    pub tasks: Vec<TaskState>,
    pub robots: Vec<RobotState>,
    /// Row-major N×M matrix of r_{i,j}.
    pub reward_matrix: Vec<f64>,
    pub rng: StreamRng,
}

fn reflect_unit(mut x: f64) -> f64 {
    loop {
        if x > 1.0 {
            x = 2.0 - x;
        } else if x < 0.0 {
            x = -x;
        } else {
            return x;
        }
    }
}

/// Task and robot positions sampled uniformly in the unit square, speeds and
/// headings uniform in their configured ranges, rewards uniform in [0, 1].
pub fn init_world(config: &WorldConfig, seed: u64) -> Result<WorldState> {
    config.validate()?;
    let mut rng = rng::stream(seed, "world");
    let side = config.arena_side_m;
    let capacity = config.capacity();

    let tasks = (0..config.n_tasks)
        .map(|task_id| {
            let position = [rng.gen::<f64>(), rng.gen::<f64>()];
            let speed = uniform(&mut rng, config.task_speed_min, config.task_speed_max) / side;
            let heading = rng.gen_range(-PI..=PI);
            TaskState {
                task_id,
                position,
                speed,
                heading,
                capacity,
                bound_count: 0,
            }
        })
        .collect();

    let robots = (0..config.n_robots)
        .map(|_| {
            let position = [rng.gen::<f64>(), rng.gen::<f64>()];
            let speed = uniform(&mut rng, config.robot_speed_min, config.robot_speed_max) / side;
            RobotState {
                position,
                speed,
                heading: 0.0,
                target: None,
                bind_time: None,
                rewarded: false,
                accumulated_cost: 0.0,
            }
        })
        .collect();

    let reward_matrix = (0..config.n_robots * config.n_tasks)
        .map(|_| rng.gen::<f64>())
        .collect();

    Ok(WorldState {
        config: config.clone(),
        t: 0,
        tau: config.tau_s,
        d_bind: config.d_bind(),
        tasks,
        robots,
        reward_matrix,
        rng,
    })
}

fn uniform(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl WorldState {
    pub fn n_robots(&self) -> usize {
        self.robots.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn layout(&self) -> ObsLayout {
        ObsLayout::new(self.n_tasks(), self.config.alpha_max)
    }

    pub fn reward(&self, robot: usize, task: usize) -> f64 {
        self.reward_matrix[robot * self.n_tasks() + task]
    }

    pub fn robot_task_distance(&self, robot: usize, task: usize) -> f64 {
        distance(self.robots[robot].position, self.tasks[task].position)
    }

    pub fn robot_distance(&self, a: usize, b: usize) -> f64 {
        distance(self.robots[a].position, self.robots[b].position)
    }

    /// Effective (speed, heading): a bound robot moves with its task.
    pub fn robot_motion(&self, robot: usize) -> (f64, f64) {
        let r = &self.robots[robot];
        match (r.bind_time, r.target) {
            (Some(_), Some(g)) => (self.tasks[g].speed, self.tasks[g].heading),
            _ => (r.speed, r.heading),
        }
    }

    pub fn all_bound(&self) -> bool {
        self.robots.iter().all(|r| !r.is_free())
    }

    pub fn is_done(&self) -> bool {
        self.all_bound() || self.t >= self.config.max_steps
    }

    /// Advance tasks one step along their headings, reflect at the arena
    /// edges, re-draw every heading, then carry bound robots along.
    pub fn step_tasks(&mut self) {
        for task in &mut self.tasks {
            let d = task.speed * self.tau;
            task.position[0] = reflect_unit(task.position[0] + d * task.heading.cos());
            task.position[1] = reflect_unit(task.position[1] + d * task.heading.sin());
            task.heading = self.rng.gen_range(-PI..=PI);
        }
        self.sync_bound_robots();
    }

    fn sync_bound_robots(&mut self) {
        for robot in &mut self.robots {
            if let (Some(_), Some(g)) = (robot.bind_time, robot.target) {
                robot.position = self.tasks[g].position;
                robot.heading = self.tasks[g].heading;
            }
        }
    }

    /// Move every free robot one step toward the task named by its action,
    /// then bind those within `d_bind`. Bound robots ignore their action.
    pub fn step_robots(&mut self, actions: &[Action]) -> Result<Vec<BindEvent>> {
        self.check_actions(actions)?;
        for (robot, action) in self.robots.iter_mut().zip(actions) {
            if !robot.is_free() {
                continue;
            }
            let goal = self.tasks[action.task_index].position;
            robot.target = Some(action.task_index);
            let dx = goal[0] - robot.position[0];
            let dy = goal[1] - robot.position[1];
            if dx.hypot(dy) > HEADING_EPS {
                robot.heading = dy.atan2(dx);
            }
            let step = robot.speed * self.tau;
            robot.position[0] += step * robot.heading.cos();
            robot.position[1] += step * robot.heading.sin();
            robot.accumulated_cost += step;
        }
        Ok(self.bind_robots())
    }

    fn check_actions(&self, actions: &[Action]) -> Result<()> {
        if actions.len() != self.n_robots() {
            return Err(Error::Dimension(format!(
                "expected {} actions, got {}",
                self.n_robots(),
                actions.len()
            )));
        }
        for (robot, a) in actions.iter().enumerate() {
            if a.task_index >= self.n_tasks() {
                return Err(Error::InvalidAction {
                    robot,
                    task: a.task_index,
                    n_tasks: self.n_tasks(),
                });
            }
        }
        Ok(())
    }

    /// Bind every free robot within `d_bind` of its target, in ascending
    /// robot id. The bind time is the index of the step being completed.
    pub fn bind_robots(&mut self) -> Vec<BindEvent> {
        let bind_time = self.t + 1;
        let mut events = Vec::new();
        for robot_id in 0..self.robots.len() {
            let robot = &self.robots[robot_id];
            let Some(g) = robot.target else { continue };
            if !robot.is_free() || distance(robot.position, self.tasks[g].position) > self.d_bind {
                continue;
            }
            let task = &mut self.tasks[g];
            let got_final_reward = task.bound_count < task.capacity;
            task.bound_count += 1;
            let robot = &mut self.robots[robot_id];
            robot.bind_time = Some(bind_time);
            robot.rewarded = got_final_reward;
            robot.position = task.position;
            robot.heading = task.heading;
            events.push(BindEvent {
                robot_id,
                task_id: g,
                got_final_reward,
            });
        }
        events
    }

    /// Neighbor lists for every robot followed by their observations.
    pub fn observe_all(&self) -> (Vec<perception::RelatedSet>, Vec<Observation>) {
        let sets = perception::neighbor_sets(self, self.config.alpha_max);
        let obs = sets
            .iter()
            .map(|s| build_observation(self, s.robot_id, &s.neighbors))
            .collect();
        (sets, obs)
    }

    /// One full transition: tasks move, robots act and bind, rewards are
    /// computed against the pre-step bound counts.
    pub fn step(&mut self, actions: &[Action]) -> Result<StepOutcome> {
        self.check_actions(actions)?;
        let before = self.clone();
        self.step_tasks();
        let newly_bound = self.step_robots(actions)?;
        self.t += 1;
        let rewards = compute_rewards(&before, actions, &newly_bound);
        let (_, next_observations) = self.observe_all();
        Ok(StepOutcome {
            rewards,
            next_observations,
            newly_bound,
            done: self.is_done(),
        })
    }

    /// Per-robot utility: task reward if binding earned a slot, minus the
    /// accumulated movement cost. Robots that never bound pay for the whole
    /// horizon they were free.
    pub fn episode_utilities(&self) -> Vec<f64> {
        self.robots
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let task_reward = match (r.rewarded, r.target) {
                    (true, Some(g)) => self.reward(i, g),
                    _ => 0.0,
                };
                task_reward - r.accumulated_cost
            })
            .collect()
    }

    /// Bind times with never-bound robots recorded at the horizon.
    pub fn bind_times(&self) -> Vec<usize> {
        self.robots
            .iter()
            .map(|r| r.bind_time.unwrap_or(self.config.max_steps))
            .collect()
    }

    /// Compares two worlds bit-for-bit, including the RNG stream position.
    pub fn bit_identical(&self, other: &WorldState) -> bool {
        fn bits(v: &[f64]) -> Vec<u64> {
            v.iter().map(|x| x.to_bits()).collect()
        }
        let task_bits = |w: &WorldState| {
            w.tasks
                .iter()
                .flat_map(|t| [t.position[0], t.position[1], t.speed, t.heading])
                .map(f64::to_bits)
                .collect::<Vec<_>>()
        };
        let robot_bits = |w: &WorldState| {
            w.robots
                .iter()
                .flat_map(|r| [r.position[0], r.position[1], r.speed, r.heading, r.accumulated_cost])
                .map(f64::to_bits)
                .collect::<Vec<_>>()
        };
        self.t == other.t
            && bits(&self.reward_matrix) == bits(&other.reward_matrix)
            && task_bits(self) == task_bits(other)
            && robot_bits(self) == robot_bits(other)
            && self == other
    }
}

/// Reward terms for every robot: constant step penalty, capacity-gap
/// incentive on the chosen task at the pre-step bound count, and the final
/// task reward for robots that bound into an open slot this step. Robots
/// already bound before the step receive nothing.
pub fn reward_components(
    before: &WorldState,
    actions: &[Action],
    bind_events: &[BindEvent],
) -> Vec<RewardParts> {
    let cfg = &before.config;
    before
        .robots
        .iter()
        .enumerate()
        .map(|(i, robot)| {
            if !robot.is_free() {
                return RewardParts::default();
            }
            let j = actions[i].task_index;
            let task = &before.tasks[j];
            let gap = task.capacity as f64 - task.bound_count as f64;
            let fin = bind_events
                .iter()
                .find(|e| e.robot_id == i && e.got_final_reward)
                .map_or(0.0, |e| cfg.phi1 * before.reward(i, e.task_id));
            RewardParts {
                distance: -cfg.phi2_mag,
                step: cfg.phi3 * gap,
                fin,
            }
        })
        .collect()
}

pub fn compute_rewards(before: &WorldState, actions: &[Action], bind_events: &[BindEvent]) -> Vec<f64> {
    reward_components(before, actions, bind_events)
        .iter()
        .map(RewardParts::total)
        .collect()
}

#[cfg(test)]
mod tests;
