use std::f64::consts::PI;

use super::WorldState;

/// Offsets of the blocks inside a flat observation vector.
///
/// Layout: self (5) | tasks (6 per task) | neighbors (5 per slot) | mask (1 per slot).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObsLayout {
    pub n_tasks: usize,
    pub alpha_max: usize,
}

pub const SELF_WIDTH: usize = 5;
pub const TASK_WIDTH: usize = 6;
pub const NEIGHBOR_WIDTH: usize = 5;

impl ObsLayout {
    pub fn new(n_tasks: usize, alpha_max: usize) -> Self {
        Self { n_tasks, alpha_max }
    }

    pub fn dim(&self) -> usize {
        SELF_WIDTH + TASK_WIDTH * self.n_tasks + (NEIGHBOR_WIDTH + 1) * self.alpha_max
    }

    pub fn task_offset(&self, j: usize) -> usize {
        SELF_WIDTH + TASK_WIDTH * j
    }

    pub fn neighbor_offset(&self, k: usize) -> usize {
        SELF_WIDTH + TASK_WIDTH * self.n_tasks + NEIGHBOR_WIDTH * k
    }

    pub fn mask_offset(&self) -> usize {
        SELF_WIDTH + TASK_WIDTH * self.n_tasks + NEIGHBOR_WIDTH * self.alpha_max
    }
}

/// One robot's local view, stored flat so it can be fed to a network as-is.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    layout: ObsLayout,
    values: Vec<f64>,
}

impl Observation {
    pub fn zeros(layout: ObsLayout) -> Self {
        Self {
            layout,
            values: vec![0.0; layout.dim()],
        }
    }

    pub fn layout(&self) -> ObsLayout {
        self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// (x, y, v, λ, c)
    pub fn self_block(&self) -> &[f64] {
        &self.values[..SELF_WIDTH]
    }

    /// (Δx, Δy, Δv, Δθ, h, κ) for task `j`.
    pub fn task_group(&self, j: usize) -> &[f64] {
        let o = self.layout.task_offset(j);
        &self.values[o..o + TASK_WIDTH]
    }

    /// (Δx, Δy, Δv, Δθ, g/M) for neighbor slot `k`.
    pub fn neighbor_group(&self, k: usize) -> &[f64] {
        let o = self.layout.neighbor_offset(k);
        &self.values[o..o + NEIGHBOR_WIDTH]
    }

    pub fn mask(&self) -> &[f64] {
        let o = self.layout.mask_offset();
        &self.values[o..o + self.layout.alpha_max]
    }

    /// Number of occupied neighbor slots.
    pub fn observed_neighbors(&self) -> usize {
        self.mask().iter().filter(|&&m| m != 0.0).count()
    }

    /// Euclidean distance to task `j`, recovered from the relative position.
    pub fn task_distance(&self, j: usize) -> f64 {
        let g = self.task_group(j);
        g[0].hypot(g[1])
    }

    pub fn task_bound_count(&self, j: usize) -> f64 {
        self.task_group(j)[4]
    }

    pub fn task_reward_weight(&self, j: usize) -> f64 {
        self.task_group(j)[5]
    }
}

/// Wrap an angle into [-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x < -PI {
        x = -PI;
    }
    x
}

/// Local observation of `robot_id` given its neighbor list (ascending
/// distance, at most α_max entries; extras are ignored).
pub fn build_observation(world: &WorldState, robot_id: usize, neighbor_ids: &[usize]) -> Observation {
    let layout = ObsLayout::new(world.tasks.len(), world.config.alpha_max);
    let mut obs = Observation::zeros(layout);
    let v = &mut obs.values;
    let me = &world.robots[robot_id];
    let (speed, heading) = world.robot_motion(robot_id);
    let [x, y] = me.position;

    v[0] = x;
    v[1] = y;
    v[2] = speed;
    v[3] = heading;
    v[4] = if me.is_free() { 1.0 } else { 0.0 };

    for (j, task) in world.tasks.iter().enumerate() {
        let o = layout.task_offset(j);
        v[o] = task.position[0] - x;
        v[o + 1] = task.position[1] - y;
        v[o + 2] = task.speed - speed;
        v[o + 3] = wrap_angle(task.heading - heading);
        v[o + 4] = task.bound_count as f64;
        v[o + 5] = world.reward(robot_id, j);
    }

    let m = world.tasks.len() as f64;
    for (k, &other) in neighbor_ids.iter().take(layout.alpha_max).enumerate() {
        let o = layout.neighbor_offset(k);
        let nb = &world.robots[other];
        let (nb_speed, nb_heading) = world.robot_motion(other);
        v[o] = nb.position[0] - x;
        v[o + 1] = nb.position[1] - y;
        v[o + 2] = nb_speed - speed;
        v[o + 3] = wrap_angle(nb_heading - heading);
        v[o + 4] = nb.target.map_or(0.0, |g| g as f64 / m);
        v[layout.mask_offset() + k] = 1.0;
    }
    obs
}
